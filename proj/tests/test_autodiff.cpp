#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "rcalad/error.hpp"
#include "rcalad/gradcheck.hpp"
#include "rcalad/ops.hpp"
#include "rcalad/optimizer.hpp"
#include "rcalad/spectral.hpp"

using namespace rcalad;

namespace {

Tensor random_tensor(Shape shape, RngStream& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

// Keeps values away from the lrelu/relu kink so central differences with
// step 1e-4 never straddle it.
Tensor away_from_zero(Tensor t) {
  for (auto& v : t.values())
    if (std::abs(v) < 1e-2) v = v < 0 ? v - 1e-2 : v + 1e-2;
  return t;
}

oracle::Matrix to_rows(const Tensor& t) {
  oracle::Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

} // namespace

TEST(Affine, IdentityWeights) {
  Tape tape;
  Var y = affine(tape.constant(Tensor::from_rows({{1, 2}})), tape.constant(Tensor::identity(2)),
                 tape.constant(Tensor::vector({0, 0})));
  EXPECT_EQ(y.value(), Tensor::from_rows({{1, 2}}));
}

TEST(Affine, HandMultiply) {
  Tape tape;
  Var y = affine(tape.constant(Tensor::from_rows({{2, 3}})),
                 tape.constant(Tensor::from_rows({{1, 1}, {1, -1}})),
                 tape.constant(Tensor::vector({1, 0})));
  EXPECT_EQ(y.value(), Tensor::from_rows({{6, -1}}));
}

TEST(Affine, ZeroInputYieldsBias) {
  Tape tape;
  RngStream rng(3);
  Var y = affine(tape.constant(Tensor::from_rows({{0, 0}})),
                 tape.constant(random_tensor({2, 2}, rng)), tape.constant(Tensor::vector({3, 4})));
  EXPECT_EQ(y.value(), Tensor::from_rows({{3, 4}}));
}

TEST(Affine, ShapeErrorNamesBothShapes) {
  Tape tape;
  try {
    affine(tape.constant(Tensor::matrix(2, 3)), tape.constant(Tensor::matrix(2, 2)),
           tape.constant(Tensor::vector({0, 0})));
    FAIL() << "expected a shape error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::shape);
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[2,2]"), std::string::npos);
  }
}

TEST(Activation, PointValues) {
  Tape tape;
  auto scalar = [&](Activation k, Real x) {
    return activation(k, tape.constant(Tensor::scalar(x))).value().item();
  };
  EXPECT_DOUBLE_EQ(scalar(Activation::lrelu, -1), -0.2);
  EXPECT_DOUBLE_EQ(scalar(Activation::sigmoid, 0), 0.5);
  EXPECT_DOUBLE_EQ(scalar(Activation::tanh, 0), 0.0);
  EXPECT_DOUBLE_EQ(scalar(Activation::relu, -3), 0.0);
  EXPECT_DOUBLE_EQ(scalar(Activation::none, -3), -3.0);
}

TEST(Activation, UnknownKindIsConfigError) {
  try {
    parse_activation("swish");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::config);
  }
  EXPECT_EQ(parse_activation("lrelu"), Activation::lrelu);
}

TEST(Concat, Examples) {
  Tape tape;
  std::vector<Var> parts{tape.constant(Tensor::vector({1})), tape.constant(Tensor::vector({2, 3}))};
  EXPECT_EQ(concat(parts, 0).value(), Tensor::vector({1, 2, 3}));

  std::vector<Var> single{tape.constant(Tensor::from_rows({{1, 2}, {3, 4}}))};
  EXPECT_EQ(concat(single, 1).value(), single[0].value());

  std::vector<Var> bad{tape.constant(Tensor::matrix(2, 1)), tape.constant(Tensor::matrix(3, 1))};
  EXPECT_THROW(concat(bad, 1), Error);

  std::vector<Var> cols{tape.constant(Tensor::from_rows({{1}, {2}})),
                        tape.constant(Tensor::from_rows({{3, 4}, {5, 6}}))};
  EXPECT_EQ(concat(cols, 1).value(), Tensor::from_rows({{1, 3, 4}, {2, 5, 6}}));
}

TEST(Dropout, Examples) {
  Tape tape;
  RngStream rng(11);
  Var x = tape.constant(random_tensor({4, 5}, rng));
  EXPECT_EQ(dropout(x, 0, Mode::train, rng).value(), x.value());
  EXPECT_EQ(dropout(x, 0.7, Mode::eval, rng).value(), x.value());
  EXPECT_EQ(dropout(x, 1, Mode::train, rng).value(), Tensor(x.shape()));
  EXPECT_THROW(dropout(x, 1.5, Mode::train, rng), Error);
  EXPECT_THROW(dropout(x, -0.1, Mode::train, rng), Error);
}

TEST(Dropout, KeptUnitsAreScaled) {
  Tape tape;
  RngStream rng(5);
  Var x = tape.constant(Tensor({1000}, Real(1)));
  const Tensor y = dropout(x, 0.5, Mode::train, rng).value();
  for (Real v : y.values()) EXPECT_TRUE(v == 0 || v == 2);
}

TEST(BatchNorm, Examples) {
  Tape tape;
  auto stats = BatchNormStats::fresh(1);
  Var gamma = tape.constant(Tensor::vector({1}));
  Var beta = tape.constant(Tensor::vector({0}));

  Var constant_batch = tape.constant(Tensor::from_rows({{4}, {4}, {4}}));
  for (Real v : batch_norm(constant_batch, gamma, beta, stats, Mode::train).value().values())
    EXPECT_NEAR(v, 0, 1e-12);

  const Real expected = 1 / std::sqrt(1 + 1e-5);
  Tensor y = batch_norm(tape.constant(Tensor::from_rows({{1}, {3}})), gamma, beta, stats,
                        Mode::train).value();
  EXPECT_NEAR(y[0], -expected, 1e-12);
  EXPECT_NEAR(y[1], expected, 1e-12);

  EXPECT_THROW(batch_norm(tape.constant(Tensor::from_rows({{1}})), gamma, beta, stats, Mode::train),
               Error);
}

TEST(BatchNorm, EvalModeIgnoresOtherRows) {
  Tape tape;
  auto stats = BatchNormStats::fresh(2);
  stats.running_mean = Tensor::vector({0.5, -1});
  stats.running_var = Tensor::vector({2, 0.25});
  Var gamma = tape.constant(Tensor::vector({1.5, 0.5}));
  Var beta = tape.constant(Tensor::vector({0.1, -0.2}));
  Tensor a = batch_norm(tape.constant(Tensor::from_rows({{1, 2}, {3, 4}})), gamma, beta, stats,
                        Mode::eval).value();
  Tensor b = batch_norm(tape.constant(Tensor::from_rows({{1, 2}, {-30, 40}})), gamma, beta, stats,
                        Mode::eval).value();
  EXPECT_EQ(a.row(0)[0], b.row(0)[0]);
  EXPECT_EQ(a.row(0)[1], b.row(0)[1]);
}

TEST(BatchNorm, RunningStatsUseMomentum) {
  Tape tape;
  auto stats = BatchNormStats::fresh(1);
  batch_norm(tape.constant(Tensor::from_rows({{1}, {3}})), tape.constant(Tensor::vector({1})),
             tape.constant(Tensor::vector({0})), stats, Mode::train);
  EXPECT_NEAR(stats.running_mean[0], 0.1 * 2, 1e-15);
  EXPECT_NEAR(stats.running_var[0], 0.9 + 0.1 * 1, 1e-15);
}

TEST(Backward, Square) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(3));
  Var y = mul(x, x);
  tape.backward(y);
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 6);
}

TEST(Backward, SigmoidAtZero) {
  Tape tape;
  Var x = tape.variable(Tensor::scalar(0));
  tape.backward(activation(Activation::sigmoid, x));
  EXPECT_DOUBLE_EQ(tape.grad(x).item(), 0.25);
}

TEST(Backward, NonScalarRootIsContractError) {
  Tape tape;
  Var x = tape.variable(Tensor::vector({1, 2}));
  try {
    tape.backward(scale(x, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::contract);
  }
}

TEST(Backward, TwoLayerCompositeMatchesFiniteDifferences) {
  RngStream rng(21);
  const Tensor w1 = random_tensor({3, 4}, rng);
  const Tensor b1 = random_tensor({4}, rng);
  const Tensor w2 = random_tensor({4, 2}, rng);
  const Tensor b2 = random_tensor({2}, rng);
  auto f = [&](Tape& tape, Var x) {
    Var h = activation(Activation::lrelu, affine(x, tape.constant(w1), tape.constant(b1)));
    Var y = activation(Activation::lrelu, affine(h, tape.constant(w2), tape.constant(b2)));
    return sum(mul(y, y));
  };
  const auto result = grad_check(f, away_from_zero(random_tensor({2, 3}, rng)));
  EXPECT_LT(result.max_relative_error, 1e-4);
}

TEST(Backward, ParameterGradientsAccumulateAcrossUses) {
  Parameter p{"w", Tensor::scalar(2), {}};
  p.zero_grad();
  Tape tape;
  Var a = tape.parameter(p);
  Var b = tape.parameter(p);
  tape.backward(mul(a, b));  // d(w*w)/dw through two leaves
  EXPECT_DOUBLE_EQ(p.grad.item(), 4);
}

TEST(GradCheck, Polynomial) {
  auto f = [](Tape&, Var x) {
    Var x2 = mul(x, x);
    return sum(add(mul(x2, x), scale(x2, -2)));
  };
  RngStream rng(1);
  EXPECT_LT(grad_check(f, random_tensor({6}, rng)).max_relative_error, 1e-6);
}

TEST(GradCheck, ConstantFunction) {
  auto f = [](Tape& tape, Var) { return tape.constant(Tensor::scalar(7)); };
  const auto result = grad_check(f, Tensor::vector({1, 2, 3}));
  for (Real v : result.analytic.values()) EXPECT_EQ(v, 0);
  EXPECT_NEAR(result.max_relative_error, 0, 1e-12);
}

// Every differentiable primitive, checked at 100 random points.
TEST(GradCheck, EveryOpAtRandomPoints) {
  RngStream rng(2024);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor w = random_tensor({3, 4}, rng);
    const Tensor b = random_tensor({4}, rng);
    const Tensor other = random_tensor({5, 3}, rng);
    const Tensor gamma = random_tensor({3}, rng);
    const Tensor beta = random_tensor({3}, rng);
    const Tensor point = away_from_zero(random_tensor({5, 3}, rng));
    const Tensor probe = random_tensor({5, 4}, rng);
    const std::uint64_t mask_seed = rng.next_u64();
    SpectralState sn = SpectralState::random(3, 4, rng);

    std::vector<ScalarGraph> graphs{
        [&](Tape& t, Var x) {
          return sum(mul(affine(x, t.constant(w), t.constant(b)), t.constant(probe)));
        },
        [](Tape&, Var x) { return sum(mul(activation(Activation::lrelu, x), x)); },
        [](Tape&, Var x) { return sum(mul(activation(Activation::relu, x), x)); },
        [](Tape&, Var x) { return sum(mul(activation(Activation::tanh, x), x)); },
        [](Tape&, Var x) { return sum(mul(activation(Activation::sigmoid, x), x)); },
        [&](Tape& t, Var x) {
          std::vector<Var> parts{x, t.constant(other)};
          Var c = concat(parts, 1);
          return sum(mul(c, c));
        },
        [&](Tape&, Var x) {
          RngStream local(mask_seed);
          Var d = dropout(x, 0.3, Mode::train, local);
          return sum(mul(d, x));
        },
        [&](Tape& t, Var x) {
          auto stats = BatchNormStats::fresh(3);
          Var y = batch_norm(x, t.constant(gamma), t.constant(beta), stats, Mode::train);
          return sum(mul(y, t.constant(other)));
        },
        [&](Tape& t, Var x) {
          auto stats = BatchNormStats::fresh(3);
          stats.running_mean = beta;
          Var y = batch_norm(x, t.constant(gamma), t.constant(beta), stats, Mode::train);
          return sum(mul(y, mul(y, t.constant(other))));
        },
        [](Tape&, Var x) { return mean(log(add(mul(x, x), one_minus(scale(x, 0))))); },
        [](Tape&, Var x) { return sum(mul(clamp(x, -0.5, 0.5), sub(x, scale(x, 3)))); },
    };
    for (const auto& g : graphs) worst = std::max(worst, grad_check(g, point).max_relative_error);

    // gamma as the differentiable input of batch norm
    auto via_gamma = [&](Tape& t, Var gam) {
      auto stats = BatchNormStats::fresh(3);
      Var y = batch_norm(t.constant(point), gam, t.constant(beta), stats, Mode::train);
      return sum(mul(y, mul(y, t.constant(other))));
    };
    worst = std::max(worst, grad_check(via_gamma, gamma).max_relative_error);

    // weight through spectral normalisation into an affine layer
    auto via_weight = [&](Tape& t, Var weight) {
      Var y = affine(t.constant(point), spectral_norm(weight, sn), t.constant(b));
      return sum(mul(y, y));
    };
    worst = std::max(worst, grad_check(via_weight, w).max_relative_error);

    auto via_weight_plain = [&](Tape& t, Var weight) {
      Var y = activation(Activation::tanh, affine(t.constant(point), weight, t.constant(b)));
      return sum(mul(y, t.constant(probe)));
    };
    worst = std::max(worst, grad_check(via_weight_plain, w).max_relative_error);

    auto via_bias = [&](Tape& t, Var bias) {
      Var y = activation(Activation::sigmoid, affine(t.constant(point), t.constant(w), bias));
      return sum(mul(y, y));
    };
    worst = std::max(worst, grad_check(via_bias, b).max_relative_error);
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(GradCheck, FlagsStencilsThatCrossAKink) {
  const auto relu_sq = [](Tape&, Var x) { return sum(mul(activation(Activation::relu, x), x)); };
  const auto near = grad_check(relu_sq, Tensor::vector({0.5, 3e-5, -2}));
  EXPECT_EQ(near.nonsmooth, 1u);
  EXPECT_LT(near.smooth_max_relative_error, 1e-8);
  EXPECT_GT(near.max_relative_error, 0.1);
  EXPECT_EQ(grad_check(relu_sq, Tensor::vector({0.5, 3e-3, -2})).nonsmooth, 0u);

  const auto clipped = [](Tape&, Var x) { return sum(mul(clamp(x, -1, 1), x)); };
  EXPECT_EQ(grad_check(clipped, Tensor::vector({0.99995, 0.2})).nonsmooth, 1u);
  const auto smooth = [](Tape&, Var x) { return sum(activation(Activation::tanh, x)); };
  EXPECT_EQ(grad_check(smooth, Tensor::vector({1e-6, -1e-6})).nonsmooth, 0u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor w = Tensor::scalar(0.7);
  Tensor g = Tensor::scalar(0.1);
  auto state = OptimizerState::for_shapes({1e-3, 0.5, 0.999, 1e-8}, std::vector<Shape>{{1}});
  Tensor* params[] = {&w};
  const Tensor* grads[] = {&g};
  adam_step(params, grads, state);
  EXPECT_NEAR(w.item() - 0.7, -1e-3, 1e-9);
  EXPECT_EQ(state.t, 1u);
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  Tensor w = Tensor::vector({1, -2, 3});
  const Tensor before = w;
  Tensor g = Tensor::vector({0, 0, 0});
  auto state = OptimizerState::for_shapes({}, std::vector<Shape>{{3}});
  Tensor* params[] = {&w};
  const Tensor* grads[] = {&g};
  for (int i = 0; i < 5; ++i) adam_step(params, grads, state);
  EXPECT_EQ(w, before);
  EXPECT_EQ(state.t, 5u);
}

TEST(Adam, ZeroLearningRateIsIdentity) {
  RngStream rng(8);
  Tensor w = random_tensor({4, 4}, rng);
  const Tensor before = w;
  Tensor g = random_tensor({4, 4}, rng);
  auto state = OptimizerState::for_shapes({0, 0.5, 0.999, 1e-8}, std::vector<Shape>{{4, 4}});
  Tensor* params[] = {&w};
  const Tensor* grads[] = {&g};
  adam_step(params, grads, state);
  EXPECT_EQ(w, before);
}

TEST(Adam, ShapeMismatchIsContractError) {
  Tensor w = Tensor::vector({1, 2});
  Tensor g = Tensor::vector({1, 2, 3});
  auto state = OptimizerState::for_shapes({}, std::vector<Shape>{{2}});
  Tensor* params[] = {&w};
  const Tensor* grads[] = {&g};
  EXPECT_THROW(adam_step(params, grads, state), Error);
}

TEST(Adam, QuadraticMatchesScalarSimulation) {
  // Independent scalar transcription of the bias-corrected update.
  const double lr = 2e-3, b1 = 0.5, b2 = 0.999, eps = 1e-8;
  double ref = 1, m = 0, v = 0;
  std::vector<double> trajectory;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2 * ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    ref -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    trajectory.push_back(ref);
  }

  Parameter w{"w", Tensor::scalar(1), {}};
  auto state = OptimizerState::for_shapes({lr, b1, b2, eps}, std::vector<Shape>{{1}});
  Parameter* params[] = {&w};
  double previous = 1;
  for (int t = 0; t < 100; ++t) {
    Tape tape;
    Var x = tape.parameter(w);
    w.zero_grad();
    tape.backward(mul(x, x));
    adam_step(params, state);
    EXPECT_LT(std::abs(w.value.item()), previous);
    previous = std::abs(w.value.item());
    EXPECT_NEAR(w.value.item(), trajectory[static_cast<std::size_t>(t)], 1e-12);
  }
  EXPECT_LT(std::abs(w.value.item()), 0.9);
}

TEST(Spectral, DiagonalMatrix) {
  RngStream rng(4);
  auto state = SpectralState::random(2, 2, rng);
  const auto result = spectral_normalize(Tensor::from_rows({{3, 0}, {0, 1}}), state, 20);
  EXPECT_NEAR(result.sigma, 3, 1e-9);
  EXPECT_NEAR(result.weight.at(0, 0), 1, 1e-9);
  EXPECT_NEAR(result.weight.at(1, 1), 1.0 / 3, 1e-9);
  EXPECT_NEAR(result.weight.at(0, 1), 0, 1e-12);
}

TEST(Spectral, OrthogonalMatrixUnchanged) {
  RngStream rng(5);
  const double c = std::cos(0.3), s = std::sin(0.3);
  const Tensor q = Tensor::from_rows({{c, -s}, {s, c}});
  auto state = SpectralState::random(2, 2, rng);
  const auto result = spectral_normalize(q, state, 20);
  for (std::size_t i = 0; i < q.size(); ++i) EXPECT_NEAR(result.weight[i], q[i], 1e-9);
}

TEST(Spectral, ZeroMatrixReturnedUnchanged) {
  RngStream rng(6);
  auto state = SpectralState::random(3, 2, rng);
  const Tensor u_before = state.u;
  const auto result = spectral_normalize(Tensor::matrix(3, 2), state, 20);
  EXPECT_EQ(result.weight, Tensor::matrix(3, 2));
  EXPECT_EQ(result.sigma, kSpectralFloor);
  EXPECT_EQ(state.u, u_before);
}

TEST(Spectral, RandomFourByFourAgainstJacobiOracle) {
  RngStream rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor w = random_tensor({4, 4}, rng);
    auto state = SpectralState::random(4, 4, rng);
    const auto result = spectral_normalize(w, state, 20);
    const double top = oracle::singular_values(to_rows(result.weight))[0];
    EXPECT_NEAR(top, 1, 1e-3);
  }
}

TEST(Spectral, UnitVectorAfterEveryUpdate) {
  RngStream rng(9);
  const Tensor w = random_tensor({7, 5}, rng);
  auto state = SpectralState::random(7, 5, rng);
  for (int i = 0; i < 30; ++i) {
    power_iteration(w, state, 1);
    double norm = 0;
    for (Real v : state.u.values()) norm += v * v;
    EXPECT_NEAR(std::sqrt(norm), 1, 1e-9);
  }
}

TEST(Spectral, EstimateMonotoneAndBoundedOnSpdMatrices) {
  RngStream rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 3 + rng.below(10);
    const Tensor a = random_tensor({n, n}, rng);
    Tensor spd = Tensor::matrix(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double s = i == j ? 0.1 : 0.0;
        for (std::size_t k = 0; k < n; ++k) s += a.at(i, k) * a.at(j, k);
        spd.at(i, j) = s;
      }
    const double truth = oracle::singular_values(to_rows(spd))[0];
    const auto start = SpectralState::random(n, n, rng);
    double previous = 0;
    for (int iters = 1; iters <= 12; ++iters) {
      auto state = start;
      const double est = power_iteration(spd, state, iters);
      EXPECT_GE(est, previous - 1e-12 * truth);
      EXPECT_LE(est, truth * (1 + 1e-12));
      previous = est;
    }
  }
}

TEST(Spectral, SingleIterationIsClassicPowerStep) {
  RngStream rng(12);
  const Tensor w = random_tensor({6, 4}, rng);
  auto state = SpectralState::random(6, 4, rng);
  // v <- W^T u / |W^T u|, u <- W v / |W v|
  std::vector<double> v(4), u(6);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t i = 0; i < 6; ++i) v[j] += w.at(i, j) * state.u[i];
  double nv = 0;
  for (double x : v) nv += x * x;
  for (double& x : v) x /= std::sqrt(nv);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 4; ++j) u[i] += w.at(i, j) * v[j];
  double nu = 0;
  for (double x : u) nu += x * x;
  const double sigma = power_iteration(w, state, 1);
  EXPECT_NEAR(sigma, std::sqrt(nu), 1e-12);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(state.u[i], u[i] / std::sqrt(nu), 1e-12);
}

TEST(Rng, SameSeedAndNameReplays) {
  RngStream a = RngStream(42).derive("noise");
  RngStream b = RngStream(42).derive("noise");
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  RngStream c = RngStream(42).derive("other");
  EXPECT_NE(RngStream(42).derive("noise").next_u64(), c.next_u64());
  RngStream d = RngStream(42).derive("noise");
  d.set_counter(17);
  RngStream e = RngStream(42).derive("noise");
  for (int i = 0; i < 17; ++i) e.next_u64();
  EXPECT_EQ(d.next_u64(), e.next_u64());
}

#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "rcalad/error.hpp"
#include "rcalad/gradcheck.hpp"
#include "rcalad/networks.hpp"

using namespace rcalad;

namespace {

Tensor random_tensor(std::size_t n, std::size_t d, RngStream& rng) {
  Tensor t = Tensor::matrix(n, d);
  for (auto& v : t.values()) v = rng.normal();
  return t;
}

// Hand count straight from the widths: in*out + out per layer, 2*width per BN.
std::size_t hand_count(std::size_t in, std::initializer_list<std::pair<std::size_t, bool>> layers) {
  std::size_t n = 0;
  for (auto [w, bn] : layers) {
    n += in * w + w + (bn ? 2 * w : 0);
    in = w;
  }
  return n;
}

std::vector<std::size_t> widths(const NetworkSpec& spec) {
  std::vector<std::size_t> out;
  for (const auto& l : spec.branches.at(0).layers) out.push_back(l.width);
  return out;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::io;
}

} // namespace

TEST(Build, TabularEncoderParameterCount) {
  RngStream rng(1);
  const BundleSpec spec = default_arch(ArchKind::arrhythmia, 274);
  const Network e = Network::build(spec.encoder, rng);
  EXPECT_EQ(e.parameter_count(), 111552u);
  EXPECT_EQ(e.parameter_count(), 274u * 256 + 256 + 256 * 128 + 128 + 128 * 64 + 64);
}

TEST(Build, EveryPublishedNetworkMatchesAnalyticCount) {
  for (auto [kind, dim] : {std::pair{ArchKind::arrhythmia, 274}, std::pair{ArchKind::thyroid, 6},
                           std::pair{ArchKind::musk, 166}, std::pair{ArchKind::kdd, 121},
                           std::pair{ArchKind::toy, 2}}) {
    RngStream rng(7);
    const BundleSpec spec = default_arch(kind, dim);
    const ModelBundle m = ModelBundle::build(spec, Toggles{}, rng);
    std::vector<const Network*> nets{&m.encoder, &m.generator};
    for (const Network* d : m.discriminators()) nets.push_back(d);
    ASSERT_EQ(nets.size(), 6u);
    for (const Network* n : nets)
      EXPECT_EQ(n->parameter_count(), n->spec().analytic_parameter_count())
          << to_string(kind) << " " << n->spec().name;
  }
}

TEST(Build, DiscriminatorCountsByHand) {
  const BundleSpec s = default_arch(ArchKind::arrhythmia, 274);
  // x-branch 274->128 (BN), z-branch 64->128, joint 256->256->1
  EXPECT_EQ(s.d_xz.analytic_parameter_count(),
            hand_count(274, {{128, true}}) + hand_count(64, {{128, false}}) +
                hand_count(256, {{256, false}, {1, false}}));
  EXPECT_EQ(s.d_xx.analytic_parameter_count(),
            hand_count(548, {{256, false}, {128, false}, {1, false}}));
  EXPECT_EQ(s.d_zz.analytic_parameter_count(),
            hand_count(128, {{64, false}, {32, false}, {1, false}}));
  EXPECT_EQ(s.d_xxzz.analytic_parameter_count(),
            hand_count(548, {{256, true}, {128, false}}) + hand_count(128, {{64, false}}) +
                hand_count(192, {{128, false}, {32, false}, {1, false}}));
}

TEST(DefaultArch, TabularLayout) {
  const BundleSpec s = default_arch(ArchKind::arrhythmia, 274);
  EXPECT_EQ(s.latent_dim, 64u);
  EXPECT_EQ(widths(s.encoder), (std::vector<std::size_t>{256, 128, 64}));
  const auto& enc = s.encoder.branches[0].layers;
  EXPECT_EQ(enc[0].activation, Activation::lrelu);
  EXPECT_EQ(enc[1].activation, Activation::lrelu);
  EXPECT_EQ(enc[2].activation, Activation::none);
  EXPECT_EQ(widths(s.generator), (std::vector<std::size_t>{128, 256, 274}));
  EXPECT_EQ(s.generator.branches[0].layers[0].activation, Activation::relu);
  EXPECT_EQ(s.generator.branches[0].layers[2].activation, Activation::none);
  for (const auto& l : enc) EXPECT_FALSE(l.spectral_norm);

  const auto& xz = s.d_xz;
  EXPECT_TRUE(xz.branches[0].layers[0].batch_norm);
  EXPECT_DOUBLE_EQ(xz.branches[1].layers[0].dropout, 0.5);
  EXPECT_EQ(xz.joint.back().activation, Activation::sigmoid);
  EXPECT_DOUBLE_EQ(s.d_xx.branches[0].layers[0].dropout, 0.2);
  EXPECT_EQ(s.d_xxzz.feature_width(), 32u);
  EXPECT_EQ(s.d_xx.feature_width(), 128u);
  EXPECT_EQ(s.d_zz.feature_width(), 32u);
  EXPECT_EQ(s.d_xz.feature_width(), 256u);
  for (const NetworkSpec* d : {&s.d_xz, &s.d_xx, &s.d_zz, &s.d_xxzz}) {
    for (const auto& b : d->branches)
      for (const auto& l : b.layers) EXPECT_TRUE(l.spectral_norm);
    for (const auto& l : d->joint) EXPECT_TRUE(l.spectral_norm);
  }
}

TEST(DefaultArch, KddLayoutKeepsPublishedLatentWidth) {
  const BundleSpec s = default_arch(ArchKind::kdd, 121);
  EXPECT_EQ(widths(s.generator), (std::vector<std::size_t>{64, 128, 121}));
  EXPECT_EQ(widths(s.encoder), (std::vector<std::size_t>{64, 1}));
  EXPECT_EQ(s.latent_dim, 1u);
  EXPECT_EQ(s.d_xxzz.feature_width(), 16u);
  const BundleSpec wider = default_arch(ArchKind::kdd, 121, 32);
  EXPECT_EQ(wider.latent_dim, 32u);
  EXPECT_EQ(widths(wider.encoder), (std::vector<std::size_t>{64, 32}));
  EXPECT_EQ(wider.d_zz.input_dims, (std::vector<std::size_t>{32, 32}));
}

TEST(DefaultArch, ToyAndGeneratorWidthFollowsInput) {
  const BundleSpec toy = default_arch(ArchKind::toy, 2);
  EXPECT_EQ(toy.latent_dim, 2u);
  EXPECT_EQ(widths(toy.encoder), (std::vector<std::size_t>{32, 16, 2}));
  EXPECT_EQ(widths(toy.generator), (std::vector<std::size_t>{16, 32, 2}));
  EXPECT_EQ(widths(default_arch(ArchKind::musk, 166).generator).back(), 166u);
  EXPECT_EQ(code_of([] { parse_arch_kind("cifar"); }), ErrorCode::config);
}

TEST(DefaultArch, ResizeKeepsHiddenLayers) {
  BundleSpec s = default_arch(ArchKind::arrhythmia, 274);
  resize_bundle(s, 10, 4);
  EXPECT_EQ(s.input_dim, 10u);
  EXPECT_EQ(widths(s.encoder), (std::vector<std::size_t>{256, 128, 4}));
  EXPECT_EQ(widths(s.generator), (std::vector<std::size_t>{128, 256, 10}));
  EXPECT_EQ(s.d_xxzz.input_dims, (std::vector<std::size_t>{10, 10, 4, 4}));
  EXPECT_EQ(s.d_xxzz.feature_width(), 32u);
}

TEST(Build, InvalidSpecsAreConfigErrors) {
  RngStream rng(0);
  EXPECT_EQ(code_of([&] { Network::build(NetworkSpec::mlp("n", 3, {LayerSpec{0}}), rng); }),
            ErrorCode::config);
  EXPECT_EQ(code_of([&] { Network::build(NetworkSpec::mlp("n", 3, {}), rng); }), ErrorCode::config);
  EXPECT_EQ(code_of([&] {
              Network::build(NetworkSpec::mlp("n", 3, {LayerSpec{2, Activation::none, false, 1.5}}),
                             rng);
            }),
            ErrorCode::config);
}

TEST(Forward, IdentityStub) {
  RngStream rng(0);
  NetworkSpec spec = NetworkSpec::mlp("stub", 2, {LayerSpec{2, Activation::lrelu}});
  Network net = Network::build(spec, rng);
  net.output_layer().weight.value = Tensor::identity(2);
  const Tensor x = Tensor::from_rows({{1, 2}, {-1, 3}});
  const Tensor in[] = {x};
  const Tensor y = net.infer(in);
  EXPECT_DOUBLE_EQ(y.at(0, 0), 1);
  EXPECT_DOUBLE_EQ(y.at(0, 1), 2);
  EXPECT_DOUBLE_EQ(y.at(1, 0), -0.2);
  EXPECT_DOUBLE_EQ(y.at(1, 1), 3);

  const Network id = identity_network("e", 3);
  const Tensor z = Tensor::from_rows({{0.5, -2, 7}});
  EXPECT_EQ(encode(id, z), z);
  EXPECT_EQ(generate(id, z), z);
}

TEST(Forward, ShapesAndWidthErrors) {
  RngStream rng(3);
  const BundleSpec spec = default_arch(ArchKind::toy, 2);
  const ModelBundle m = ModelBundle::build(spec, Toggles{}, rng);
  const Tensor x = random_tensor(5, 2, rng);
  EXPECT_EQ(encode(m.encoder, x).shape(), (Shape{5, 2}));
  EXPECT_EQ(generate(m.generator, x).shape(), (Shape{5, 2}));
  EXPECT_EQ(code_of([&] { encode(m.encoder, random_tensor(5, 3, rng)); }), ErrorCode::shape);
}

TEST(Discriminate, ArityProbRangeAndFeatures) {
  RngStream rng(4);
  const BundleSpec spec = default_arch(ArchKind::arrhythmia, 274);
  const ModelBundle m = ModelBundle::build(spec, Toggles{}, rng);
  const Tensor x = random_tensor(6, 274, rng);
  const Tensor z = random_tensor(6, 64, rng);
  const Tensor quad[] = {x, x, z, z};
  const auto out = discriminate(*m.d_xxzz, quad);
  EXPECT_EQ(out.features.shape(), (Shape{6, 32}));
  EXPECT_EQ(out.logit.shape(), (Shape{6, 1}));
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_GT(out.prob[i], 0);
    EXPECT_LT(out.prob[i], 1);
    EXPECT_NEAR(out.prob[i], 1 / (1 + std::exp(-out.logit[i])), 1e-15);
  }
  const Tensor pair[] = {x, x};
  EXPECT_EQ(code_of([&] { discriminate(*m.d_xxzz, pair); }), ErrorCode::contract);
  EXPECT_EQ(code_of([&] { discriminate(*m.d_xx, quad); }), ErrorCode::contract);
  const Tensor one[] = {x};
  EXPECT_EQ(code_of([&] { discriminate(m.d_xz, one); }), ErrorCode::contract);

  const Tensor xz[] = {x, z};
  EXPECT_EQ(discriminate(m.d_xz, xz).features.shape(), (Shape{6, 256}));
  const Tensor xx[] = {x, x};
  EXPECT_EQ(discriminate(*m.d_xx, xx).features.shape(), (Shape{6, 128}));
  const Tensor zz[] = {z, z};
  EXPECT_EQ(discriminate(*m.d_zz, zz).features.shape(), (Shape{6, 32}));
}

TEST(Forward, EvalModeIsPure) {
  RngStream rng(5);
  const BundleSpec spec = default_arch(ArchKind::toy, 2);
  ModelBundle m = ModelBundle::build(spec, Toggles{}, rng);
  // give batch norm non-trivial running stats first
  {
    Tape tape;
    Var x = tape.constant(random_tensor(16, 2, rng));
    Var z = tape.constant(random_tensor(16, 2, rng));
    const Var in[] = {x, x, z, z};
    RngStream drop(9);
    m.d_xxzz->forward(tape, in, Mode::train, drop, true);
  }
  Tensor x = random_tensor(8, 2, rng);
  for (std::size_t c = 0; c < 2; ++c) x.at(3, c) = x.at(0, c);
  const Tensor z1 = encode(m.encoder, x);
  const Tensor z2 = encode(m.encoder, x);
  EXPECT_EQ(z1, z2);
  for (std::size_t c = 0; c < 2; ++c) EXPECT_EQ(z1.at(0, c), z1.at(3, c));

  const Tensor q[] = {x, x, z1, z1};
  const auto a = discriminate(*m.d_xxzz, q);
  const auto b = discriminate(*m.d_xxzz, q);
  EXPECT_EQ(a.prob, b.prob);
  EXPECT_EQ(a.features, b.features);
  // a row's score does not depend on its batch neighbours
  const std::size_t first[] = {0};
  const Tensor q1[] = {x.rows_subset(first), x.rows_subset(first), z1.rows_subset(first),
                       z1.rows_subset(first)};
  EXPECT_NEAR(discriminate(*m.d_xxzz, q1).prob[0], a.prob[0], 1e-12);
}

TEST(Forward, TrainModeParameterGradients) {
  RngStream rng(6);
  const BundleSpec spec = default_arch(ArchKind::toy, 2);
  ModelBundle m = ModelBundle::build(spec, Toggles{}, rng);
  const Tensor x = random_tensor(6, 2, rng);
  const Tensor z = random_tensor(6, 2, rng);
  Network& d = *m.d_xxzz;
  auto params = d.parameters();
  const auto res = grad_check_parameters(
      [&](Tape& tape) {
        const Var in[] = {tape.constant(x), tape.constant(x), tape.constant(z), tape.constant(z)};
        RngStream drop(11);  // same mask every evaluation
        auto saved = d.branch_layers(0)[0].bn_stats;
        auto out = d.forward(tape, in, Mode::train, drop, true);
        d.branch_layers(0)[0].bn_stats = saved;
        return mean(out.logit);
      },
      params, 1e-5, 200);
  EXPECT_LT(res.max_relative_error, 1e-4);
}

TEST(Bundle, TogglesControlDiscriminators) {
  RngStream rng(8);
  const BundleSpec spec = default_arch(ArchKind::toy, 2);
  EXPECT_EQ(ModelBundle::build(spec, toggles_for(Variant::ali), rng).discriminators().size(), 1u);
  EXPECT_EQ(ModelBundle::build(spec, toggles_for(Variant::alice), rng).discriminators().size(), 2u);
  EXPECT_EQ(ModelBundle::build(spec, toggles_for(Variant::alad), rng).discriminators().size(), 3u);
  EXPECT_EQ(ModelBundle::build(spec, toggles_for(Variant::calad), rng).discriminators().size(), 4u);
  const auto r = ModelBundle::build(spec, toggles_for(Variant::ralad), rng);
  EXPECT_FALSE(r.d_xxzz.has_value());
  EXPECT_TRUE(toggles_for(Variant::ralad).use_sigma);
  EXPECT_EQ(parse_variant("rcalad"), Variant::rcalad);
  EXPECT_EQ(code_of([] { parse_variant("bigan"); }), ErrorCode::config);
}

TEST(Bundle, SharedNetworksIndependentOfToggles) {
  const BundleSpec spec = default_arch(ArchKind::toy, 2);
  RngStream a(12), b(12);
  const auto full = ModelBundle::build(spec, toggles_for(Variant::rcalad), a);
  const auto ali = ModelBundle::build(spec, toggles_for(Variant::ali), b);
  EXPECT_EQ(full.encoder.parameters()[0]->value, ali.encoder.parameters()[0]->value);
  EXPECT_EQ(full.d_xz.parameters()[0]->value, ali.d_xz.parameters()[0]->value);
}

TEST(Bundle, StateNamesAreUnique) {
  RngStream rng(13);
  const auto m = ModelBundle::build(default_arch(ArchKind::toy, 2), Toggles{}, rng);
  std::set<std::string> names;
  std::size_t count = 0;
  m.visit_state([&](const std::string& name, const Tensor&) {
    names.insert(name);
    ++count;
  });
  EXPECT_EQ(names.size(), count);
  EXPECT_TRUE(names.count("d_xxzz/xx/0/running_mean"));
  EXPECT_TRUE(names.count("d_xz/joint/1/sn_u"));
  EXPECT_TRUE(names.count("encoder/x/0/W"));
}

TEST(Init, ScaledGaussian) {
  RngStream rng(14);
  const Network n = Network::build(
      NetworkSpec::mlp("n", 400, {LayerSpec{300, Activation::lrelu}, LayerSpec{300, Activation::none}}),
      rng);
  auto var_of = [](const Tensor& t) {
    double s = 0;
    for (double v : t.values()) s += v * v;
    return s / t.size();
  };
  const auto p = n.parameters();
  EXPECT_NEAR(var_of(p[0]->value), 2.0 / 400, 0.05 * 2.0 / 400);
  EXPECT_NEAR(var_of(p[2]->value), 1.0 / 300, 0.05 * 1.0 / 300);
  for (double v : p[1]->value.values()) EXPECT_EQ(v, 0);
}

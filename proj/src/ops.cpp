#include "rcalad/ops.hpp"

#include <cmath>
#include <string>

#include "eigen_view.hpp"
#include "rcalad/error.hpp"

namespace rcalad {

namespace {

Tape& tape_of(Var v) {
  require(v.valid(), ErrorCode::contract, "operation on an empty Var");
  return *v.tape();
}

void check_same_tape(Var a, Var b) {
  require(a.tape() == b.tape(), ErrorCode::contract, "operands live on different tapes");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  require(a.shape() == b.shape(), ErrorCode::shape,
          std::string(op) + ": shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

Real sigmoid_scalar(Real x) {
  if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

template <class F>
Tensor map_values(const Tensor& in, F f) {
  Tensor out(in.shape());
  auto src = in.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

} // namespace

Activation parse_activation(std::string_view name) {
  if (name == "lrelu") return Activation::lrelu;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "none") return Activation::none;
  fail(ErrorCode::config, "unknown activation '" + std::string(name) + "'");
}

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::lrelu: return "lrelu";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::none: return "none";
  }
  return "none";
}

BatchNormStats BatchNormStats::fresh(std::size_t features) {
  return BatchNormStats{Tensor({features}, Real(0)), Tensor({features}, Real(1))};
}

Var affine(Var x, Var weight, Var bias) {
  check_same_tape(x, weight);
  check_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weight.value();
  const Tensor& bv = bias.value();
  require(wv.rank() == 2 && (xv.rank() == 1 || xv.rank() == 2) && xv.cols() == wv.rows() &&
              bv.size() == wv.cols(),
          ErrorCode::shape,
          "affine: input " + to_string(xv.shape()) + " incompatible with weight " +
              to_string(wv.shape()) + " and bias " + to_string(bv.shape()));
  const std::size_t n = xv.rows();
  const std::size_t out_dim = wv.cols();
  Tensor out(xv.rank() == 2 ? Shape{n, out_dim} : Shape{out_dim});
  if (n > 0) {
    auto y = detail::view(out);
    y.noalias() = detail::view(xv) * detail::view(wv);
    y.rowwise() += detail::vec(bv).transpose();
  }
  return tape_of(x).record(OpKind::affine, {x, weight, bias}, std::move(out),
                           [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    const Tensor& xin = ctx.input(0);
    const Tensor& w = ctx.input(1);
    if (g.empty()) return;
    if (ctx.needs(0)) {
      Tensor dx(xin.shape());
      detail::view(dx).noalias() = detail::view(g) * detail::view(w).transpose();
      ctx.accumulate(0, dx);
    }
    if (ctx.needs(1)) {
      Tensor dw(w.shape());
      detail::view(dw).noalias() = detail::view(xin).transpose() * detail::view(g);
      ctx.accumulate(1, dw);
    }
    if (ctx.needs(2)) {
      Tensor db({w.cols()});
      detail::vec(db) = detail::view(g).colwise().sum().transpose();
      ctx.accumulate(2, db);
    }
  });
}

Var activation(Activation kind, Var x, Real slope) {
  const Tensor& xv = x.value();
  Tensor out;
  switch (kind) {
    case Activation::lrelu:
      out = map_values(xv, [slope](Real v) { return v > 0 ? v : slope * v; });
      break;
    case Activation::relu:
      out = map_values(xv, [](Real v) { return v > 0 ? v : Real(0); });
      break;
    case Activation::tanh:
      out = map_values(xv, [](Real v) { return std::tanh(v); });
      break;
    case Activation::sigmoid:
      out = map_values(xv, sigmoid_scalar);
      break;
    case Activation::none:
      out = xv;
      break;
  }
  const OpKind op = kind == Activation::relu || kind == Activation::lrelu ? OpKind::rectifier
                                                                          : OpKind::activation;
  return tape_of(x).record(op, {x}, std::move(out),
                           [kind, slope](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    const Tensor& in = ctx.input(0);
    const Tensor& y = ctx.output();
    Tensor dx(in.shape());
    auto d = dx.values();
    auto gv = g.values();
    auto iv = in.values();
    auto yv = y.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
      switch (kind) {
        case Activation::lrelu: d[i] = iv[i] > 0 ? gv[i] : slope * gv[i]; break;
        case Activation::relu: d[i] = iv[i] > 0 ? gv[i] : Real(0); break;
        case Activation::tanh: d[i] = gv[i] * (Real(1) - yv[i] * yv[i]); break;
        case Activation::sigmoid: d[i] = gv[i] * yv[i] * (Real(1) - yv[i]); break;
        case Activation::none: d[i] = gv[i]; break;
      }
    }
    ctx.accumulate(0, dx);
  });
}

Var concat(std::span<const Var> parts, std::size_t axis) {
  require(!parts.empty(), ErrorCode::contract, "concat of zero parts");
  Tape& tape = tape_of(parts[0]);
  const Tensor& first = parts[0].value();
  const std::size_t rank = first.rank();
  require(rank == 1 || rank == 2, ErrorCode::shape, "concat supports rank 1 and 2 only");
  require(axis < rank, ErrorCode::shape, "concat axis out of range");
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    const Tensor& t = p.value();
    require(t.rank() == rank, ErrorCode::shape, "concat: mixed ranks");
    if (rank == 2) {
      const std::size_t off = 1 - axis;
      require(t.shape()[off] == first.shape()[off], ErrorCode::shape,
              "concat on axis " + std::to_string(axis) + ": " + to_string(first.shape()) +
                  " vs " + to_string(t.shape()));
    }
  }

  std::vector<std::size_t> extents;  // size of each part along `axis`
  std::size_t total = 0;
  for (const Var& p : parts) {
    extents.push_back(p.value().shape()[axis]);
    total += extents.back();
  }

  Tensor out;
  if (rank == 1) {
    out = Tensor({total});
    std::size_t at = 0;
    for (const Var& p : parts) {
      auto src = p.value().values();
      std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
      at += src.size();
    }
  } else if (axis == 0) {
    out = Tensor::matrix(total, first.cols());
    std::size_t at = 0;
    for (const Var& p : parts) {
      auto src = p.value().values();
      std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(at));
      at += src.size();
    }
  } else {
    const std::size_t n = first.rows();
    out = Tensor::matrix(n, total);
    std::size_t col = 0;
    for (const Var& p : parts) {
      const Tensor& t = p.value();
      for (std::size_t r = 0; r < n; ++r) {
        auto src = t.row(r);
        std::copy(src.begin(), src.end(), out.data() + r * total + col);
      }
      col += t.cols();
    }
  }

  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(OpKind::concat, std::move(inputs), std::move(out),
                     [extents, axis, rank](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    std::size_t offset = 0;
    for (std::size_t i = 0; i < extents.size(); ++i) {
      const Tensor& in = ctx.input(i);
      if (ctx.needs(i)) {
        Tensor piece(in.shape());
        if (rank == 1 || axis == 0) {
          const std::size_t width = rank == 1 ? 1 : in.cols();
          std::copy_n(g.data() + offset * width, in.size(), piece.data());
        } else {
          const std::size_t total_cols = g.cols();
          for (std::size_t r = 0; r < in.rows(); ++r) {
            std::copy_n(g.data() + r * total_cols + offset, in.cols(), piece.data() + r * in.cols());
          }
        }
        ctx.accumulate(i, piece);
      }
      offset += extents[i];
    }
  });
}

Var dropout(Var x, Real rate, Mode mode, RngStream& rng) {
  require(rate >= 0 && rate <= 1, ErrorCode::config,
          "dropout rate " + std::to_string(rate) + " outside [0,1]");
  if (mode == Mode::eval || rate == 0) return x;
  const Tensor& xv = x.value();
  Tensor mask(xv.shape());
  const Real keep_scale = rate < 1 ? Real(1) / (Real(1) - rate) : Real(0);
  for (auto& m : mask.values()) m = rng.uniform() >= rate ? keep_scale : Real(0);
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * mask[i];
  return tape_of(x).record(OpKind::dropout, {x}, std::move(out),
                           [mask = std::move(mask)](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    Tensor dx(g.shape());
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = g[i] * mask[i];
    ctx.accumulate(0, dx);
  });
}

Var batch_norm(Var x, Var gamma, Var beta, BatchNormStats& stats, Mode mode) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  const Tensor& xv = x.value();
  require(xv.rank() == 2, ErrorCode::shape, "batch_norm expects (batch, features)");
  const std::size_t n = xv.rows();
  const std::size_t d = xv.cols();
  require(gamma.value().size() == d && beta.value().size() == d &&
              stats.running_mean.size() == d && stats.running_var.size() == d,
          ErrorCode::shape,
          "batch_norm: input " + to_string(xv.shape()) + " vs parameters of width " +
              std::to_string(gamma.value().size()));
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();

  Tensor mean({d});
  Tensor inv_std({d});
  if (mode == Mode::train) {
    require(n >= 2, ErrorCode::degenerate_batch,
            "batch_norm in train mode needs at least 2 rows, got " + std::to_string(n));
    Tensor var({d});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) mean[c] += xv.at(r, c);
    for (std::size_t c = 0; c < d; ++c) mean[c] /= static_cast<Real>(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < d; ++c) {
        const Real delta = xv.at(r, c) - mean[c];
        var[c] += delta * delta;
      }
    for (std::size_t c = 0; c < d; ++c) {
      var[c] /= static_cast<Real>(n);
      inv_std[c] = Real(1) / std::sqrt(var[c] + stats.epsilon);
      stats.running_mean[c] = stats.momentum * stats.running_mean[c] + (1 - stats.momentum) * mean[c];
      stats.running_var[c] = stats.momentum * stats.running_var[c] + (1 - stats.momentum) * var[c];
    }
  } else {
    for (std::size_t c = 0; c < d; ++c) {
      mean[c] = stats.running_mean[c];
      inv_std[c] = Real(1) / std::sqrt(stats.running_var[c] + stats.epsilon);
    }
  }

  Tensor normalized(xv.shape());
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const Real h = (xv.at(r, c) - mean[c]) * inv_std[c];
      normalized.at(r, c) = h;
      out.at(r, c) = gv[c] * h + bv[c];
    }

  const bool batch_stats = mode == Mode::train;
  return tape_of(x).record(
      OpKind::batch_norm, {x, gamma, beta}, std::move(out),
      [normalized = std::move(normalized), inv_std = std::move(inv_std), batch_stats](
          BackwardContext& ctx) {
        const Tensor& g = ctx.grad_out();
        const Tensor& gam = ctx.input(1);
        const std::size_t rows = g.rows();
        const std::size_t cols = g.cols();
        Tensor dgamma({cols});
        Tensor dbeta({cols});
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            dgamma[c] += g.at(r, c) * normalized.at(r, c);
            dbeta[c] += g.at(r, c);
          }
        if (ctx.needs(0)) {
          Tensor dx(g.shape());
          if (batch_stats) {
            const Real nr = static_cast<Real>(rows);
            for (std::size_t c = 0; c < cols; ++c) {
              // dgamma[c] and dbeta[c] are sum(g*xhat) and sum(g)
              const Real k = gam[c] * inv_std[c] / nr;
              for (std::size_t r = 0; r < rows; ++r) {
                dx.at(r, c) = k * (nr * g.at(r, c) - dbeta[c] - normalized.at(r, c) * dgamma[c]);
              }
            }
          } else {
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c) dx.at(r, c) = g.at(r, c) * gam[c] * inv_std[c];
          }
          ctx.accumulate(0, dx);
        }
        if (ctx.needs(1)) ctx.accumulate(1, dgamma);
        if (ctx.needs(2)) ctx.accumulate(2, dbeta);
      });
}

Var spectral_norm(Var weight, const SpectralState& state) {
  const Tensor& w = weight.value();
  const Real sigma = spectral_sigma(w, state);
  if (!(sigma > kSpectralFloor)) {
    return tape_of(weight).record(OpKind::spectral_norm, {weight}, w,
                                  [](BackwardContext& ctx) { ctx.accumulate(0, ctx.grad_out()); });
  }
  Tensor out = w;
  for (auto& v : out.values()) v /= sigma;
  return tape_of(weight).record(
      OpKind::spectral_norm, {weight}, std::move(out),
      [sigma, u = state.u, v = state.v](BackwardContext& ctx) {
        const Tensor& g = ctx.grad_out();
        const Tensor& win = ctx.input(0);
        const Real inner = detail::vec(g).dot(detail::vec(win));
        Tensor dw(win.shape());
        auto d = detail::view(dw);
        d = detail::view(g) / sigma;
        d.noalias() -= (inner / (sigma * sigma)) * (detail::vec(u) * detail::vec(v).transpose());
        ctx.accumulate(0, dw);
      });
}

Var add(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return tape_of(a).record(OpKind::add, {a, b}, std::move(out), [](BackwardContext& ctx) {
    ctx.accumulate(0, ctx.grad_out());
    ctx.accumulate(1, ctx.grad_out());
  });
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  return tape_of(a).record(OpKind::sub, {a, b}, std::move(out), [](BackwardContext& ctx) {
    ctx.accumulate(0, ctx.grad_out());
    if (ctx.needs(1)) {
      Tensor neg = ctx.grad_out();
      for (auto& v : neg.values()) v = -v;
      ctx.accumulate(1, neg);
    }
  });
}

Var mul(Var a, Var b) {
  check_same_tape(a, b);
  check_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return tape_of(a).record(OpKind::mul, {a, b}, std::move(out), [](BackwardContext& ctx) {
    const Tensor& g = ctx.grad_out();
    if (ctx.needs(0)) {
      Tensor da = g;
      for (std::size_t i = 0; i < da.size(); ++i) da[i] *= ctx.input(1)[i];
      ctx.accumulate(0, da);
    }
    if (ctx.needs(1)) {
      Tensor db = g;
      for (std::size_t i = 0; i < db.size(); ++i) db[i] *= ctx.input(0)[i];
      ctx.accumulate(1, db);
    }
  });
}

Var scale(Var a, Real factor) {
  Tensor out = map_values(a.value(), [factor](Real v) { return v * factor; });
  return tape_of(a).record(OpKind::scale, {a}, std::move(out), [factor](BackwardContext& ctx) {
    ctx.accumulate(0, map_values(ctx.grad_out(), [factor](Real v) { return v * factor; }));
  });
}

Var log(Var a) {
  Tensor out = map_values(a.value(), [](Real v) { return std::log(v); });
  return tape_of(a).record(OpKind::log, {a}, std::move(out), [](BackwardContext& ctx) {
    Tensor d = ctx.grad_out();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] /= ctx.input(0)[i];
    ctx.accumulate(0, d);
  });
}

Var one_minus(Var a) {
  Tensor out = map_values(a.value(), [](Real v) { return Real(1) - v; });
  return tape_of(a).record(OpKind::one_minus, {a}, std::move(out), [](BackwardContext& ctx) {
    ctx.accumulate(0, map_values(ctx.grad_out(), [](Real v) { return -v; }));
  });
}

Var clamp(Var a, Real lo, Real hi) {
  Tensor out = map_values(a.value(), [lo, hi](Real v) { return v < lo ? lo : (v > hi ? hi : v); });
  return tape_of(a).record(OpKind::clamp, {a}, std::move(out), [lo, hi](BackwardContext& ctx) {
    Tensor d = ctx.grad_out();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const Real v = ctx.input(0)[i];
      if (v < lo || v > hi) d[i] = Real(0);
    }
    ctx.accumulate(0, d);
  });
}

Var sum(Var a) {
  Real total = 0;
  for (Real v : a.value().values()) total += v;
  return tape_of(a).record(OpKind::sum, {a}, Tensor::scalar(total), [](BackwardContext& ctx) {
    ctx.accumulate(0, Tensor(ctx.input(0).shape(), ctx.grad_out().item()));
  });
}

Var mean(Var a) {
  const std::size_t n = a.value().size();
  require(n > 0, ErrorCode::contract, "mean of an empty tensor");
  Real total = 0;
  for (Real v : a.value().values()) total += v;
  return tape_of(a).record(OpKind::mean, {a}, Tensor::scalar(total / static_cast<Real>(n)),
                           [n](BackwardContext& ctx) {
    ctx.accumulate(0, Tensor(ctx.input(0).shape(), ctx.grad_out().item() / static_cast<Real>(n)));
  });
}

} // namespace rcalad

#include "rcalad/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace rcalad {

namespace {

// Which side of every kink the recorded forward pass sits on: the input
// sign of each rectifier element, below / inside / above for clamps.
using KinkSignature = std::vector<std::int8_t>;

KinkSignature kink_signature(Tape& tape) {
  KinkSignature sig;
  for (std::size_t id = 0; id < tape.size(); ++id) {
    Var v = tape.node(id);
    const OpKind k = tape.kind(v);
    if (k != OpKind::rectifier && k != OpKind::clamp) continue;
    const auto& in = tape.value(tape.node(tape.inputs(v)[0])).values();
    const auto& out = tape.value(v).values();
    for (std::size_t i = 0; i < in.size(); ++i) {
      if (k == OpKind::rectifier)
        sig.push_back(in[i] > 0);
      else
        sig.push_back(out[i] == in[i] ? 0 : out[i] > in[i] ? -1 : 1);
    }
  }
  return sig;
}

struct Probe {
  Real value;
  KinkSignature sig;
};

Probe evaluate(const ScalarGraph& f, const Tensor& point) {
  Tape tape;
  const Real y = f(tape, tape.constant(point)).value().item();
  return {y, kink_signature(tape)};
}

void record(GradCheckResult& r, Real a, Real n, bool smooth) {
  const Real err = std::abs(a - n) / std::max<Real>(std::abs(a), Real(1e-8));
  r.max_relative_error = std::max(r.max_relative_error, err);
  if (smooth)
    r.smooth_max_relative_error = std::max(r.smooth_max_relative_error, err);
  else
    ++r.nonsmooth;
}

} // namespace

GradCheckResult grad_check(const ScalarGraph& f, const Tensor& point, Real step) {
  GradCheckResult result;
  KinkSignature base;
  {
    Tape tape;
    Var x = tape.variable(point);
    Var y = f(tape, x);
    tape.backward(y);
    result.analytic = tape.grad(x);
    base = kink_signature(tape);
  }
  result.numeric = Tensor(point.shape());
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    probe[i] = point[i] + step;
    const Probe up = evaluate(f, probe);
    probe[i] = point[i] - step;
    const Probe down = evaluate(f, probe);
    probe[i] = point[i];
    result.numeric[i] = (up.value - down.value) / (2 * step);
    record(result, result.analytic[i], result.numeric[i], up.sig == base && down.sig == base);
  }
  return result;
}

} // namespace rcalad

namespace rcalad {

GradCheckResult grad_check_parameters(const std::function<Var(Tape&)>& f,
                                      std::span<Parameter* const> params, Real step,
                                      std::size_t max_coordinates) {
  for (Parameter* p : params) p->zero_grad();
  KinkSignature base;
  {
    Tape tape;
    Var y = f(tape);
    tape.backward(y);
    base = kink_signature(tape);
  }
  std::vector<std::pair<Parameter*, std::size_t>> coords;
  for (Parameter* p : params)
    for (std::size_t i = 0; i < p->value.size(); ++i) coords.emplace_back(p, i);
  std::size_t stride = 1;
  if (max_coordinates > 0 && coords.size() > max_coordinates) {
    stride = (coords.size() + max_coordinates - 1) / max_coordinates;
  }

  GradCheckResult result;
  std::vector<Real> analytic, numeric;
  const auto eval = [&] {
    Tape tape;
    const Real y = f(tape).value().item();
    return Probe{y, kink_signature(tape)};
  };
  for (std::size_t k = 0; k < coords.size(); k += stride) {
    auto [p, i] = coords[k];
    const Real original = p->value[i];
    p->value[i] = original + step;
    const Probe up = eval();
    p->value[i] = original - step;
    const Probe down = eval();
    p->value[i] = original;
    const Real a = p->grad[i];
    const Real n = (up.value - down.value) / (2 * step);
    analytic.push_back(a);
    numeric.push_back(n);
    record(result, a, n, up.sig == base && down.sig == base);
  }
  result.analytic = Tensor::vector(std::move(analytic));
  result.numeric = Tensor::vector(std::move(numeric));
  return result;
}

} // namespace rcalad

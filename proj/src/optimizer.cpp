#include "rcalad/optimizer.hpp"

#include <cmath>

#include "rcalad/error.hpp"

namespace rcalad {

OptimizerState OptimizerState::for_shapes(const AdamConfig& config, std::span<const Shape> shapes) {
  OptimizerState s;
  s.config = config;
  for (const Shape& shape : shapes) {
    s.m.emplace_back(shape);
    s.v.emplace_back(shape);
  }
  return s;
}

OptimizerState make_optimizer_state(const AdamConfig& config, std::span<Parameter* const> params) {
  std::vector<Shape> shapes;
  for (const Parameter* p : params) shapes.push_back(p->value.shape());
  return OptimizerState::for_shapes(config, shapes);
}

void adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
               OptimizerState& state) {
  require(params.size() == grads.size() && params.size() == state.m.size() &&
              params.size() == state.v.size(),
          ErrorCode::contract, "adam_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    require(params[i]->shape() == grads[i]->shape() && params[i]->shape() == state.m[i].shape() &&
                params[i]->shape() == state.v[i].shape(),
            ErrorCode::contract,
            "adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                to_string(params[i]->shape()) + " vs gradient " + to_string(grads[i]->shape()));
  }

  const AdamConfig& c = state.config;
  state.t += 1;
  const Real t = static_cast<Real>(state.t);
  const Real correction1 = Real(1) - std::pow(c.beta1, t);
  const Real correction2 = Real(1) - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i]->values();
    auto g = grads[i]->values();
    auto m = state.m[i].values();
    auto v = state.v[i].values();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = c.beta1 * m[k] + (Real(1) - c.beta1) * g[k];
      v[k] = c.beta2 * v[k] + (Real(1) - c.beta2) * g[k] * g[k];
      if (c.lr == Real(0)) continue;
      const Real m_hat = m[k] / correction1;
      const Real v_hat = v[k] / correction2;
      p[k] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void adam_step(std::span<Parameter* const> params, OptimizerState& state) {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  for (Parameter* p : params) {
    if (p->grad.shape() != p->value.shape()) p->zero_grad();
    values.push_back(&p->value);
    grads.push_back(&p->grad);
  }
  adam_step(values, grads, state);
}

} // namespace rcalad

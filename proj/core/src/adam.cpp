#include "metaslot/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace metaslot {

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.first.emplace_back(p.numel(), 0.0);
    s.second.emplace_back(p.numel(), 0.0);
  }
  return s;
}

void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state, const OptimizerConfig& hyper) {
  if (grads.size() != params.size() || state.first.size() != params.size() ||
      state.second.size() != params.size()) {
    throw ShapeError("adam_step: parameter, gradient and moment counts differ");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(hyper.beta1, t);
  const double correction2 = 1.0 - std::pow(hyper.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    auto values = params[p].mutable_data();
    const auto& g = grads[p];
    auto& m = state.first[p];
    auto& v = state.second[p];
    if (g.size() != values.size() || m.size() != values.size() || v.size() != values.size()) {
      throw ShapeError("adam_step: gradient shape differs from parameter " + std::to_string(p));
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.eps);
    }
  }
}

}  // namespace metaslot

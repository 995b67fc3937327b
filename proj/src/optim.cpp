#include "headkd/optim.hpp"

#include <cmath>

#include "headkd/error.hpp"

namespace headkd {

OptimizerState OptimizerState::for_parameters(const std::vector<NamedParameter>& params, AdamWConfig config) {
  OptimizerState state;
  state.config = config;
  for (const auto& p : params) {
    state.first_moment.emplace_back(p.var.shape(), 0.0);
    state.second_moment.emplace_back(p.var.shape(), 0.0);
  }
  return state;
}

void adamw_step(std::vector<NamedParameter>& params, OptimizerState& state) {
  if (params.size() != state.first_moment.size()) {
    throw DimensionError("adamw_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.var.shape() != state.first_moment[i].shape()) {
      throw DimensionError("adamw_step: moment shape " + shape_str(state.first_moment[i].shape()) +
                           " does not match parameter '" + p.name + "' " + shape_str(p.var.shape()));
    }
    if (p.var.has_grad() && !p.var.grad().all_finite()) {
      throw NumericError("adamw_step: non-finite gradient in parameter '" + p.name + "'");
    }
  }

  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const double decay = 1.0 - c.learning_rate * c.weight_decay;

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& value = params[i].var.mutable_value();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has_grad = params[i].var.has_grad();
    for (std::size_t j = 0; j < value.numel(); ++j) {
      const double g = has_grad ? params[i].var.grad()[j] : 0.0;
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      value[j] = value[j] * decay - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

void zero_grads(std::vector<NamedParameter>& params) {
  for (auto& p : params) p.var.zero_grad();
}

}  // namespace headkd

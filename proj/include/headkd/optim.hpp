#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "headkd/autodiff.hpp"

namespace headkd {

struct NamedParameter {
  std::string name;
  Var var;
};

struct AdamWConfig {
  double learning_rate = 5e-5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers are parallel to the parameter list they were created for.
struct OptimizerState {
  AdamWConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  static OptimizerState for_parameters(const std::vector<NamedParameter>& params, AdamWConfig config);
};

// One AdamW update with decoupled weight decay and bias-corrected moments.
// A parameter without a gradient is treated as having a zero gradient.
// Throws NumericError naming the parameter if any gradient is not finite;
// nothing is modified in that case.
void adamw_step(std::vector<NamedParameter>& params, OptimizerState& state);

void zero_grads(std::vector<NamedParameter>& params);

}  // namespace headkd

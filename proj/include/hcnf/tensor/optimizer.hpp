#pragma once

#include <span>

#include "hcnf/tensor/parameter.hpp"

namespace hcnf {

struct OptimizerConfig {
  enum class Method { sgd, adam };
  Method method = Method::adam;
  double lr = 1e-3;
  double momentum = 0.0;  // sgd only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One in-place update of every parameter from its current gradient.
// Gradients are left untouched; a parameter without a gradient is a
// ContractError.
template <typename T>
void optimizer_step(std::span<Parameter<T>* const> params, const OptimizerConfig& cfg);

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace hcnf

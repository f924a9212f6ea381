#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hcnf/tensor/tensor.hpp"

namespace hcnf {

// A learned tensor plus the optimizer slots that belong to it.
template <typename T>
struct Parameter {
  Parameter() = default;
  explicit Parameter(Tensor<T> v) : value(std::move(v)) { value.set_requires_grad(true); }

  Tensor<T> value;
  std::vector<T> momentum;  // SGD velocity
  std::vector<T> moment1;   // Adam first moment
  std::vector<T> moment2;   // Adam second moment
  std::int64_t step = 0;

  void zero_grad() { value.clear_grad(); }
};

}  // namespace hcnf

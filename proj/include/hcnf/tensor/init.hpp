#pragma once

#include <cstdint>
#include <random>

#include "hcnf/tensor/tensor.hpp"

namespace hcnf {

using Rng = std::mt19937_64;

// Uniform(-sqrt(6/fan_in), sqrt(6/fan_in)), the relu-gain Kaiming bound.
template <typename T>
void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng);

template <typename T>
void uniform_fill(Tensor<T>& t, double lo, double hi, Rng& rng);

// Uniform double in [0,1) computed from raw engine output, so sequences do
// not depend on the standard library's distribution implementation.
double uniform01(Rng& rng);

// Uniform integer in [0, n) by rejection sampling on raw engine output.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

}  // namespace hcnf

#include "hcnf/tensor/init.hpp"

#include <cmath>
#include <limits>

namespace hcnf {

double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  HCNF_REQUIRE(n > 0, "uniform_index: empty range");
  // Largest multiple of n that fits, so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do v = rng();
  while (v >= limit);
  return v % n;
}

template <typename T>
void uniform_fill(Tensor<T>& t, double lo, double hi, Rng& rng) {
  for (auto& v : t.data()) v = static_cast<T>(lo + (hi - lo) * uniform01(rng));
}

template <typename T>
void kaiming_uniform(Tensor<T>& t, std::size_t fan_in, Rng& rng) {
  HCNF_REQUIRE(fan_in > 0, "fan_in must be positive");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  uniform_fill(t, -bound, bound, rng);
}

template void uniform_fill(Tensor<float>&, double, double, Rng&);
template void uniform_fill(Tensor<double>&, double, double, Rng&);
template void kaiming_uniform(Tensor<float>&, std::size_t, Rng&);
template void kaiming_uniform(Tensor<double>&, std::size_t, Rng&);

}  // namespace hcnf

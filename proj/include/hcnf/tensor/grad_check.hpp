#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hcnf/tensor/tape.hpp"

namespace hcnf {

struct GradCheckOptions {
  double step = 1e-5;
  // Gradients smaller than this are compared in absolute terms.
  double denom_floor = 1e-3;
  // 0 probes every element; otherwise a seeded random subset per input.
  std::size_t max_probes_per_input = 0;
  std::uint64_t seed = 0x5eed;
  // Also evaluate at +-2 step. When the central quotients over step and
  // 2 step disagree by more than the tolerance a kink lies within 2 step;
  // the probe then uses the second-order one-sided formula on the side whose
  // second difference is smaller.
  bool kink_aware = false;
  // Return true to exclude a probe (e.g. relu kinks).
  std::function<bool(std::size_t input, std::size_t index)> skip;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t probes = 0;
  std::size_t one_sided = 0;  // kink_aware probes that fell back to one side
  bool passed = false;
  std::string worst;  // "input i[j]: analytic a, numeric n"
};

using GradCheckFn = std::function<Tensor<double>(Tape<double>&, const std::vector<Tensor<double>>&)>;

// Compares reverse-mode gradients of a random projection of fn(inputs) with
// central finite differences. Inputs are perturbed in place, so fn may also
// reach them through other handles (model parameters).
GradCheckReport grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs, double tolerance,
                           const GradCheckOptions& opts = {});

}  // namespace hcnf

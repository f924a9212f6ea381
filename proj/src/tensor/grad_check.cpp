#include "hcnf/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hcnf/tensor/init.hpp"
#include "hcnf/tensor/ops.hpp"

namespace hcnf {

namespace {

double project(const Tensor<double>& y, const std::vector<double>& w) {
  double s = 0;
  for (std::size_t i = 0; i < y.numel(); ++i) s += w[i] * y[i];
  return s;
}

}  // namespace

GradCheckReport grad_check(const GradCheckFn& fn, std::vector<Tensor<double>> inputs, double tolerance,
                           const GradCheckOptions& opts) {
  Rng rng(opts.seed);
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.clear_grad();
  }

  std::vector<double> weights;
  {
    Tape<double> tape;
    Tensor<double> y = fn(tape, inputs);
    weights.resize(y.numel());
    for (auto& w : weights) w = 2.0 * uniform01(rng) - 1.0;
    Tensor<double> wt(y.shape(), weights);
    Tensor<double> loss = ops::sum(tape, ops::mul(tape, y, wt));
    tape.backward(loss);
  }

  auto eval = [&]() {
    Tape<double> tape(false);
    return project(fn(tape, inputs), weights);
  };

  const double f0 = opts.kink_aware ? eval() : 0.0;
  auto rel_gap = [&](double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), opts.denom_floor});
  };
  GradCheckReport rep;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& t = inputs[i];
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (opts.max_probes_per_input > 0 && idx.size() > opts.max_probes_per_input) {
      for (std::size_t k = 0; k < opts.max_probes_per_input; ++k) {
        const std::size_t j = k + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(idx.size() - k));
        std::swap(idx[k], idx[j]);
      }
      idx.resize(opts.max_probes_per_input);
    }
    for (const std::size_t j : idx) {
      if (opts.skip && opts.skip(i, j)) continue;
      const double analytic = t.has_grad() ? t.grad()[j] : 0.0;
      const double orig = t[j];
      const double h = opts.step;
      auto at = [&](double offset) {
        t[j] = orig + offset;
        const double f = eval();
        t[j] = orig;
        return f;
      };
      const double fp = at(h), fm = at(-h);
      double numeric = (fp - fm) / (2.0 * h);
      if (opts.kink_aware) {
        const double fp2 = at(2 * h), fm2 = at(-2 * h);
        const double wide = (fp2 - fm2) / (4.0 * h);
        if (rel_gap(numeric, wide) > tolerance) {
          const double bend_fwd = std::abs(fp2 - 2 * fp + f0), bend_back = std::abs(fm2 - 2 * fm + f0);
          numeric = bend_fwd <= bend_back ? (-3 * f0 + 4 * fp - fp2) / (2.0 * h) : (3 * f0 - 4 * fm + fm2) / (2.0 * h);
          ++rep.one_sided;
        }
      }
      const double abs_err = std::abs(analytic - numeric);
      const double rel = abs_err / std::max({std::abs(analytic), std::abs(numeric), opts.denom_floor});
      ++rep.probes;
      rep.max_abs_error = std::max(rep.max_abs_error, abs_err);
      if (rep.worst.empty() || rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        std::ostringstream os;
        os << "input " << i << "[" << j << "]: analytic " << analytic << ", numeric " << numeric;
        rep.worst = os.str();
      }
    }
  }
  rep.passed = rep.probes > 0 && rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace hcnf

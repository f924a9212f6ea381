#include "hcnf/tensor/optimizer.hpp"

#include <cmath>

namespace hcnf {

template <typename T>
void optimizer_step(std::span<Parameter<T>* const> params, const OptimizerConfig& cfg) {
  HCNF_REQUIRE(cfg.lr > 0, "learning rate must be positive");
  for (const auto* p : params)
    HCNF_REQUIRE(p->value.has_grad(), "parameter of shape " + shape_str(p->value.shape()) + " has no gradient");
  for (auto* p : params) {
    const std::size_t n = p->value.numel();
    auto w = p->value.data();
    auto g = p->value.grad();
    ++p->step;
    if (cfg.method == OptimizerConfig::Method::sgd) {
      if (cfg.momentum != 0.0) {
        if (p->momentum.size() != n) p->momentum.assign(n, T{0});
        for (std::size_t i = 0; i < n; ++i) {
          p->momentum[i] = static_cast<T>(cfg.momentum * p->momentum[i] + g[i]);
          w[i] -= static_cast<T>(cfg.lr * p->momentum[i]);
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) w[i] -= static_cast<T>(cfg.lr * g[i]);
      }
      continue;
    }
    if (p->moment1.size() != n) p->moment1.assign(n, T{0});
    if (p->moment2.size() != n) p->moment2.assign(n, T{0});
    const double t = static_cast<double>(p->step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = g[i];
      const double m = cfg.beta1 * p->moment1[i] + (1.0 - cfg.beta1) * gi;
      const double v = cfg.beta2 * p->moment2[i] + (1.0 - cfg.beta2) * gi * gi;
      p->moment1[i] = static_cast<T>(m);
      p->moment2[i] = static_cast<T>(v);
      w[i] = static_cast<T>(w[i] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps));
    }
  }
}

template void optimizer_step(std::span<Parameter<float>* const>, const OptimizerConfig&);
template void optimizer_step(std::span<Parameter<double>* const>, const OptimizerConfig&);

}  // namespace hcnf

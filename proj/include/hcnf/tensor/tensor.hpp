#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hcnf/core/error.hpp"

namespace hcnf {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s);

// Dense row-major array with an optional gradient buffer.
//
// Tensor is a shared handle: copies alias the same storage, which is what the
// tape relies on to route gradients back to the tensors an op consumed. Use
// clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    impl_->values.assign(shape_numel(shape), fill);
    impl_->shape = std::move(shape);
    impl_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : impl_(std::make_shared<Impl>()) {
    HCNF_REQUIRE(shape_numel(shape) == values.size(),
                 "tensor of shape " + shape_str(shape) + " cannot hold " +
                     std::to_string(values.size()) + " elements");
    impl_->shape = std::move(shape);
    impl_->values = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor scalar(T v, bool requires_grad = false) { return Tensor(Shape{1}, v, requires_grad); }

  bool defined() const noexcept { return impl_ != nullptr; }
  bool same(const Tensor& o) const noexcept { return impl_ == o.impl_; }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->values.size(); }

  std::span<T> data() { return impl_->values; }
  std::span<const T> data() const { return impl_->values; }
  T* ptr() { return impl_->values.data(); }
  const T* ptr() const { return impl_->values.data(); }
  T& operator[](std::size_t i) { return impl_->values[i]; }
  const T& operator[](std::size_t i) const { return impl_->values[i]; }

  T item() const {
    HCNF_REQUIRE(numel() == 1, "item() requires a single-element tensor, got " + shape_str(shape()));
    return impl_->values[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<T> grad() { return impl_->grad; }
  std::span<const T> grad() const { return impl_->grad; }
  // Gradient storage belongs to the shared node, so a const handle may still
  // accumulate into it.
  // Allocates a zero gradient if none exists and returns it.
  std::span<T> ensure_grad() const {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->values.size(), T{0});
    return impl_->grad;
  }
  void clear_grad() const { impl_->grad.clear(); }

  Tensor clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>(*impl_);
    return t;
  }

  // Deep copy of the values only.
  Tensor detach() const { return Tensor(shape(), impl_->values, false); }

  bool all_finite() const {
    for (const T v : impl_->values)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& src) {
  std::vector<To> v(src.numel());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<To>(src[i]);
  return Tensor<To>(src.shape(), std::move(v), src.requires_grad());
}

}  // namespace hcnf

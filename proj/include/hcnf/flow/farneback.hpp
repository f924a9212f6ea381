#pragma once

#include <array>
#include <vector>

#include "hcnf/image/image.hpp"

// Dense optical flow by polynomial expansion. Frames are single-channel float
// images in 8-bit intensity units (0..255); the 2x2 regularizer assumes that
// scale.
namespace hcnf::flow {

struct FlowParams {
  double pyramid_scale = 0.5;
  int levels = 3;
  int window = 13;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.1;
  double magnitude_clip = 8.0;

  // Throws ContractError naming the first violated field.
  void validate() const;
};

class FlowField {
 public:
  FlowField() = default;
  FlowField(int width, int height) : width_(width), height_(height), v_(2 * std::size_t(width) * height, 0.0f) {}

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  float& dx(int x, int y) { return v_[2 * (std::size_t(y) * width_ + x)]; }
  float& dy(int x, int y) { return v_[2 * (std::size_t(y) * width_ + x) + 1]; }
  float dx(int x, int y) const { return v_[2 * (std::size_t(y) * width_ + x)]; }
  float dy(int x, int y) const { return v_[2 * (std::size_t(y) * width_ + x) + 1]; }
  // Interleaved (dx, dy) per pixel, row-major.
  const std::vector<float>& values() const noexcept { return v_; }

  float max_magnitude() const;
  bool all_finite() const;

 private:
  int width_ = 0, height_ = 0;
  std::vector<float> v_;
};

// Per-pixel f(p) ~ p^T A p + b^T p + c in coordinates relative to the pixel,
// with p = (x, y). Stored as {a11, a22, a12, b1, b2, c}; A = [[a11, a12], [a12, a22]].
struct PolyExpansion {
  int width = 0, height = 0;
  std::vector<std::array<double, 6>> coeffs;

  const std::array<double, 6>& at(int x, int y) const { return coeffs[std::size_t(y) * width + x]; }
};

// Level 0 is the frame itself; each further level is smoothed and resampled
// by pyramid_scale. Stops early before a level would fall below poly_n.
std::vector<ImageF> build_pyramid(const ImageF& frame, const FlowParams& params);

// Gaussian-weighted least-squares fit of {1, x, y, x^2, y^2, xy} over the
// poly_n x poly_n neighbourhood, with edge replication at the border.
PolyExpansion poly_expansion(const ImageF& frame, int poly_n, double poly_sigma);

// One refinement of `prior`: frame-B coefficients are sampled at the
// prior-displaced position, the per-pixel 2x2 normal equations are averaged
// over a window x window box and solved with 1e-3 added to the diagonal.
FlowField flow_update_iteration(const PolyExpansion& a, const PolyExpansion& b, const FlowField& prior, int window);

// Coarse-to-fine flow from prev to next: next(p + d(p)) ~ prev(p).
FlowField farneback_flow(const ImageF& prev, const ImageF& next, const FlowParams& params = {});

// 3-channel [0,1] encoding: H = atan2(dy, dx) / 2pi wrapped to [0,1), S = 1,
// V = min(|d| / magnitude_clip, 1).
ImageF flow_to_hsv(const FlowField& flow, double magnitude_clip);

}  // namespace hcnf::flow

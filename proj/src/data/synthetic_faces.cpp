#include "hcnf/data/synthetic_faces.hpp"

#include <algorithm>
#include <cmath>

#include "hcnf/tensor/init.hpp"

namespace hcnf::data {

namespace {

// Feature geometry in face units: origin at the face centre, radius 1,
// v pointing down.
struct Expression {
  double brow_inner, brow_outer;  // vertical offsets of brow ends (negative raises)
  double eye_open;                // eye height multiplier
  double mouth_width;
  double mouth_bend;   // > 0 lifts both corners
  double mouth_smirk;  // > 0 lifts the right corner only
  double mouth_open;   // > 0 draws an open (filled) mouth of this height
};

Expression expression_for(Emotion e) {
  switch (e) {
    case Emotion::anger:
      return {0.12, -0.06, 0.8, 0.28, -0.04, 0.0, 0.0};
    case Emotion::disgust:
      return {0.06, 0.0, 0.45, 0.30, -0.12, -0.08, 0.0};
    case Emotion::fear:
      return {-0.12, -0.02, 1.4, 0.32, 0.0, 0.0, 0.08};
    case Emotion::happiness:
      return {0.0, 0.0, 0.6, 0.40, 0.20, 0.0, 0.0};
    case Emotion::sadness:
      return {-0.12, 0.05, 0.7, 0.30, -0.18, 0.0, 0.0};
    case Emotion::surprise:
      return {-0.16, -0.14, 1.5, 0.14, 0.0, 0.0, 0.18};
    case Emotion::contempt:
      return {0.0, 0.0, 0.9, 0.30, 0.0, 0.16, 0.0};
    case Emotion::neutral:
      return {0.0, 0.0, 1.0, 0.30, 0.0, 0.0, 0.0};
  }
  return {};
}

double seg_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double t = std::clamp(((px - ax) * dx + (py - ay) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
  return std::hypot(px - ax - t * dx, py - ay - t * dy);
}

// 1 inside a stroke of half-width w, fading to 0 over `aa`.
double ink(double dist, double w, double aa) { return std::clamp((w + aa - dist) / aa, 0.0, 1.0); }

double gaussian(Rng& rng) {
  const double u1 = std::max(uniform01(rng), 1e-12), u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * 3.141592653589793 * u2);
}

}  // namespace

ImageF render_synthetic_face(Emotion label, int size, std::uint64_t seed) {
  HCNF_REQUIRE(size >= 8, "render_synthetic_face: size must be >= 8");
  Rng rng(seed);
  auto jitter = [&](double amount) { return (2 * uniform01(rng) - 1) * amount; };

  Expression x = expression_for(label);
  x.brow_inner += jitter(0.03);
  x.brow_outer += jitter(0.03);
  x.eye_open *= 1 + jitter(0.15);
  x.mouth_width *= 1 + jitter(0.12);
  x.mouth_bend += jitter(0.04);
  x.mouth_smirk += jitter(0.03);
  if (x.mouth_open > 0) x.mouth_open *= 1 + jitter(0.2);

  const double s = size;
  const double cx = s / 2 + jitter(0.06 * s), cy = s / 2 + jitter(0.06 * s);
  const double radius = 0.42 * s * (1 + jitter(0.1));
  const double tilt = jitter(0.12);
  const double background = 0.25 + 0.3 * uniform01(rng), skin = 0.65 + 0.25 * uniform01(rng);
  const double feature = 0.05 + 0.15 * uniform01(rng);
  const double noise = 0.02 + 0.03 * uniform01(rng);
  const double aa = 1.5 / radius;  // about one pixel of anti-aliasing
  const double my = 0.45 + jitter(0.04);

  ImageF img(size, size, 1);
  const double ct = std::cos(tilt), st = std::sin(tilt);
  for (int py = 0; py < size; ++py)
    for (int px = 0; px < size; ++px) {
      const double rx = (px + 0.5 - cx) / radius, ry = (py + 0.5 - cy) / radius;
      const double u = ct * rx + st * ry, v = -st * rx + ct * ry;
      double value = background + 0.1 * ry;
      const double face = std::hypot(u / 0.8, v);
      value += (skin - value) * std::clamp((1.0 - face) / aa, 0.0, 1.0);

      double dark = 0;
      for (double side : {-1.0, 1.0}) {
        const double ex = 0.33 * side, ey = -0.18;
        const double e = std::hypot((u - ex) / 0.14, (v - ey) / (0.07 * x.eye_open));
        dark = std::max(dark, std::clamp((1.0 - e) / (aa / 0.07), 0.0, 1.0));
        const double d = seg_distance(u, v, 0.12 * side, -0.40 + x.brow_inner, 0.50 * side, -0.40 + x.brow_outer);
        dark = std::max(dark, ink(d, 0.035, aa));
      }
      if (x.mouth_open > 0) {
        const double m = std::hypot(u / x.mouth_width, (v - my) / x.mouth_open);
        dark = std::max(dark, std::clamp((1.0 - m) / (aa / x.mouth_open), 0.0, 1.0));
      } else if (std::abs(u) <= x.mouth_width + aa) {
        const double t = std::clamp(u / x.mouth_width, -1.0, 1.0);
        const double curve = my - x.mouth_bend * t * t - x.mouth_smirk * std::max(0.0, t) * t;
        dark = std::max(dark, ink(std::hypot(std::abs(v - curve), std::max(0.0, std::abs(u) - x.mouth_width)),
                                  0.035, aa));
      }
      value += (feature - value) * dark;
      img.at(px, py) = static_cast<float>(std::clamp(value + noise * gaussian(rng), 0.0, 1.0));
    }
  return img;
}

std::vector<Sample> synthetic_face_dataset(const std::vector<Emotion>& classes, std::size_t per_class, int size,
                                           std::uint64_t seed, Split split) {
  HCNF_REQUIRE(!classes.empty(), "synthetic_face_dataset: no classes");
  std::vector<Sample> out;
  out.reserve(classes.size() * per_class);
  Rng seeds(seed);
  for (std::size_t i = 0; i < per_class; ++i)
    for (Emotion e : classes) out.push_back({render_synthetic_face(e, size, seeds()), e, Source::synthetic, split});
  return out;
}

}  // namespace hcnf::data

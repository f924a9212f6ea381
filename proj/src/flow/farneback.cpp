#include "hcnf/flow/farneback.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "hcnf/core/parallel.hpp"

namespace hcnf::flow {

void FlowParams::validate() const {
  HCNF_REQUIRE(pyramid_scale > 0 && pyramid_scale < 1, "flow: pyramid_scale must lie in (0,1)");
  HCNF_REQUIRE(levels >= 1, "flow: levels must be >= 1");
  HCNF_REQUIRE(window >= 3 && window % 2 == 1, "flow: window must be an odd integer >= 3");
  HCNF_REQUIRE(iterations >= 1, "flow: iterations must be >= 1");
  HCNF_REQUIRE(poly_n >= 3 && poly_n % 2 == 1, "flow: poly_n must be an odd integer >= 3");
  HCNF_REQUIRE(poly_sigma > 0, "flow: poly_sigma must be positive");
  HCNF_REQUIRE(magnitude_clip > 0, "flow: magnitude_clip must be positive");
}

float FlowField::max_magnitude() const {
  float m = 0;
  for (std::size_t i = 0; i < v_.size(); i += 2) m = std::max(m, std::hypot(v_[i], v_[i + 1]));
  return m;
}

bool FlowField::all_finite() const {
  return std::all_of(v_.begin(), v_.end(), [](float v) { return std::isfinite(v); });
}

std::vector<ImageF> build_pyramid(const ImageF& frame, const FlowParams& params) {
  params.validate();
  HCNF_REQUIRE(frame.channels() == 1, "build_pyramid expects a single-channel frame");
  HCNF_REQUIRE(frame.width() >= params.poly_n && frame.height() >= params.poly_n,
               "build_pyramid: frame smaller than poly_n");
  std::vector<ImageF> pyr{frame};
  const double sigma = (1.0 / params.pyramid_scale - 1.0) * 0.5;
  while (static_cast<int>(pyr.size()) < params.levels) {
    const ImageF& prev = pyr.back();
    const int w = static_cast<int>(std::lround(prev.width() * params.pyramid_scale));
    const int h = static_cast<int>(std::lround(prev.height() * params.pyramid_scale));
    if (w < params.poly_n || h < params.poly_n) break;
    pyr.push_back(resize_bilinear(gaussian_blur(prev, sigma), w, h));
  }
  return pyr;
}

PolyExpansion poly_expansion(const ImageF& frame, int poly_n, double poly_sigma) {
  HCNF_REQUIRE(poly_n >= 3 && poly_n % 2 == 1, "poly_expansion: poly_n must be an odd integer >= 3");
  HCNF_REQUIRE(poly_sigma > 0, "poly_expansion: poly_sigma must be positive");
  HCNF_REQUIRE(frame.channels() == 1, "poly_expansion expects a single-channel frame");
  HCNF_REQUIRE(frame.width() >= poly_n && frame.height() >= poly_n, "poly_expansion: frame smaller than poly_n");

  // The fit is the same linear functional at every pixel: coeffs = (P^T W P)^-1 P^T W f.
  const int r = poly_n / 2, taps = poly_n * poly_n;
  Eigen::MatrixXd P(taps, 6);
  Eigen::VectorXd w(taps);
  for (int j = -r, k = 0; j <= r; ++j)
    for (int i = -r; i <= r; ++i, ++k) {
      P.row(k) << 1.0, i, j, double(i) * i, double(j) * j, double(i) * j;
      w[k] = std::exp(-(i * i + j * j) / (2 * poly_sigma * poly_sigma));
    }
  const Eigen::MatrixXd G = P.transpose() * w.asDiagonal() * P;
  const Eigen::MatrixXd F = G.ldlt().solve(P.transpose() * w.asDiagonal());  // 6 x taps

  PolyExpansion out{frame.width(), frame.height(), {}};
  out.coeffs.resize(std::size_t(frame.width()) * frame.height());
  parallel_for(frame.height(), [&](std::size_t y0, std::size_t y1) {
    std::vector<double> patch(taps);
    for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y)
      for (int x = 0; x < frame.width(); ++x) {
        for (int j = -r, k = 0; j <= r; ++j)
          for (int i = -r; i <= r; ++i, ++k) patch[k] = frame.clamped(x + i, y + j);
        Eigen::Map<const Eigen::VectorXd> f(patch.data(), taps);
        const Eigen::Matrix<double, 6, 1> c = F * f;
        // Basis order {1, x, y, x^2, y^2, xy}; the xy term splits across both off-diagonals of A.
        out.coeffs[std::size_t(y) * frame.width() + x] = {c[3], c[4], c[5] / 2, c[1], c[2], c[0]};
      }
  });
  return out;
}

namespace {

std::array<double, 5> sample_coeffs(const PolyExpansion& e, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto at = [&](int xi, int yi) -> const std::array<double, 6>& {
    return e.at(std::clamp(xi, 0, e.width - 1), std::clamp(yi, 0, e.height - 1));
  };
  const auto &p00 = at(x0, y0), &p10 = at(x0 + 1, y0), &p01 = at(x0, y0 + 1), &p11 = at(x0 + 1, y0 + 1);
  std::array<double, 5> s;
  for (int k = 0; k < 5; ++k)
    s[k] = (1 - fy) * ((1 - fx) * p00[k] + fx * p10[k]) + fy * ((1 - fx) * p01[k] + fx * p11[k]);
  return s;
}

// In-place box mean with edge replication over interleaved `ch`-channel rows.
void box_mean(std::vector<double>& v, int width, int height, int ch, int window) {
  const int r = window / 2;
  std::vector<double> tmp(v.size());
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int i = -r; i <= r; ++i) s += v[(std::size_t(y) * width + std::clamp(x + i, 0, width - 1)) * ch + c];
        tmp[(std::size_t(y) * width + x) * ch + c] = s;
      }
  const double norm = 1.0 / (double(window) * window);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < ch; ++c) {
        double s = 0;
        for (int j = -r; j <= r; ++j) s += tmp[(std::size_t(std::clamp(y + j, 0, height - 1)) * width + x) * ch + c];
        v[(std::size_t(y) * width + x) * ch + c] = s * norm;
      }
}

FlowField upsample(const FlowField& coarse, int width, int height) {
  ImageF dx(coarse.width(), coarse.height(), 1), dy(coarse.width(), coarse.height(), 1);
  for (int y = 0; y < coarse.height(); ++y)
    for (int x = 0; x < coarse.width(); ++x) {
      dx.at(x, y) = coarse.dx(x, y);
      dy.at(x, y) = coarse.dy(x, y);
    }
  const ImageF ux = resize_bilinear(dx, width, height), uy = resize_bilinear(dy, width, height);
  const float sx = float(width) / coarse.width(), sy = float(height) / coarse.height();
  FlowField out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      out.dx(x, y) = ux.at(x, y) * sx;
      out.dy(x, y) = uy.at(x, y) * sy;
    }
  return out;
}

}  // namespace

FlowField flow_update_iteration(const PolyExpansion& a, const PolyExpansion& b, const FlowField& prior, int window) {
  HCNF_REQUIRE(a.width == b.width && a.height == b.height && prior.width() == a.width &&
                   prior.height() == a.height,
               "flow_update_iteration: expansions and prior must share dimensions");
  HCNF_REQUIRE(window >= 1 && window % 2 == 1, "flow_update_iteration: window must be odd");
  const int W = a.width, H = a.height;
  // Per pixel: G = A^T A (g11, g12, g22) and h = A^T db.
  std::vector<double> gh(std::size_t(W) * H * 5);
  parallel_for(H, [&](std::size_t y0, std::size_t y1) {
    for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y)
      for (int x = 0; x < W; ++x) {
        const double dx = prior.dx(x, y), dy = prior.dy(x, y);
        const auto& c1 = a.at(x, y);
        const auto c2 = sample_coeffs(b, x + dx, y + dy);
        const double a11 = 0.5 * (c1[0] + c2[0]), a22 = 0.5 * (c1[1] + c2[1]), a12 = 0.5 * (c1[2] + c2[2]);
        const double db1 = -0.5 * (c2[3] - c1[3]) + a11 * dx + a12 * dy;
        const double db2 = -0.5 * (c2[4] - c1[4]) + a12 * dx + a22 * dy;
        double* o = &gh[(std::size_t(y) * W + x) * 5];
        o[0] = a11 * a11 + a12 * a12;
        o[1] = a12 * (a11 + a22);
        o[2] = a12 * a12 + a22 * a22;
        o[3] = a11 * db1 + a12 * db2;
        o[4] = a12 * db1 + a22 * db2;
      }
  });
  box_mean(gh, W, H, 5, window);

  FlowField out(W, H);
  parallel_for(H, [&](std::size_t y0, std::size_t y1) {
    for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y)
      for (int x = 0; x < W; ++x) {
        const double* g = &gh[(std::size_t(y) * W + x) * 5];
        const double g11 = g[0] + 1e-3, g22 = g[2] + 1e-3, g12 = g[1];
        const double det = g11 * g22 - g12 * g12;
        const double ux = (g22 * g[3] - g12 * g[4]) / det, uy = (g11 * g[4] - g12 * g[3]) / det;
        if (!(det > 0) || !std::isfinite(ux) || !std::isfinite(uy)) {
          out.dx(x, y) = prior.dx(x, y);
          out.dy(x, y) = prior.dy(x, y);
        } else {
          out.dx(x, y) = static_cast<float>(ux);
          out.dy(x, y) = static_cast<float>(uy);
        }
      }
  });
  return out;
}

FlowField farneback_flow(const ImageF& prev, const ImageF& next, const FlowParams& params) {
  params.validate();
  HCNF_REQUIRE(prev.width() == next.width() && prev.height() == next.height() && prev.channels() == next.channels(),
               "farneback_flow: frame dimensions differ");
  HCNF_REQUIRE(prev.channels() == 1, "farneback_flow expects single-channel frames");
  const auto pa = build_pyramid(prev, params), pb = build_pyramid(next, params);
  FlowField flow;
  for (int lvl = static_cast<int>(pa.size()) - 1; lvl >= 0; --lvl) {
    const int w = pa[lvl].width(), h = pa[lvl].height();
    flow = flow.width() == 0 ? FlowField(w, h) : upsample(flow, w, h);
    const auto ea = poly_expansion(pa[lvl], params.poly_n, params.poly_sigma);
    const auto eb = poly_expansion(pb[lvl], params.poly_n, params.poly_sigma);
    for (int it = 0; it < params.iterations; ++it) flow = flow_update_iteration(ea, eb, flow, params.window);
  }
  return flow;
}

ImageF flow_to_hsv(const FlowField& flow, double magnitude_clip) {
  HCNF_REQUIRE(magnitude_clip > 0, "flow_to_hsv: magnitude_clip must be positive");
  ImageF out(flow.width(), flow.height(), 3);
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      const double dx = flow.dx(x, y), dy = flow.dy(x, y);
      double h = std::atan2(dy, dx) / (2 * std::numbers::pi);
      if (h < 0) h += 1.0;
      if (h >= 1.0) h = 0.0;
      out.at(x, y, 0) = static_cast<float>(h);
      out.at(x, y, 1) = 1.0f;
      out.at(x, y, 2) = static_cast<float>(std::min(std::hypot(dx, dy) / magnitude_clip, 1.0));
    }
  return out;
}

}  // namespace hcnf::flow

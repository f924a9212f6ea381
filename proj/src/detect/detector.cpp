#include "hcnf/detect/detector.hpp"

#include <algorithm>
#include <cmath>

#include "hcnf/core/parallel.hpp"

namespace hcnf::detect {

double iou(const Detection& a, const Detection& b) {
  const double ix = std::max(0, std::min(a.x + a.side, b.x + b.side) - std::max(a.x, b.x));
  const double iy = std::max(0, std::min(a.y + a.side, b.y + b.side) - std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = double(a.side) * a.side + double(b.side) * b.side - inter;
  return uni > 0 ? inter / uni : 0.0;
}

namespace {

int iround(double v) { return static_cast<int>(std::lround(v)); }

struct ScaledRect {
  int dx, dy, w, h;
  double weight;
};

struct ScaledFeature {
  ScaledRect r[3];
  int n = 0;
};

ScaledFeature scale_feature(const HaarFeature& f, double s) {
  ScaledFeature out;
  double base = 0, mag = 0;
  for (const auto& r : f.rects) {
    out.r[out.n++] = {iround(r.x * s), iround(r.y * s), iround(r.w * s), iround(r.h * s), r.weight};
    base += r.weight * r.w * r.h;
    mag += std::abs(r.weight * r.w * r.h);
  }
  if (s != 1.0 && out.n > 1 && std::abs(base) <= 1e-9 * mag) {
    double rest = 0;
    for (int k = 1; k < out.n; ++k) rest += out.r[k].weight * out.r[k].w * out.r[k].h;
    out.r[0].weight = -rest / (double(out.r[0].w) * out.r[0].h);
  }
  return out;
}

double feature_value(const IntegralImage& ii, const ScaledFeature& f, int x, int y, double norm) {
  double acc = 0;
  for (int k = 0; k < f.n; ++k) {
    const auto& r = f.r[k];
    acc += r.weight * static_cast<double>(ii.rect_sum(x + r.dx, y + r.dy, r.w, r.h));
  }
  return acc * norm;
}

struct ScaledStump {
  ScaledFeature f;
  double threshold, left, right;
};

struct ScaledStage {
  double threshold;
  std::vector<ScaledStump> stumps;
};

std::vector<ScaledStage> scale_cascade(const Cascade& c, double s) {
  std::vector<ScaledStage> out;
  out.reserve(c.stages.size());
  for (const auto& st : c.stages) {
    ScaledStage ss{st.threshold, {}};
    ss.stumps.reserve(st.stumps.size());
    for (const auto& w : st.stumps) ss.stumps.push_back({scale_feature(w.feature, s), w.threshold, w.left, w.right});
    out.push_back(std::move(ss));
  }
  return out;
}

bool run_stages(const IntegralImage& ii, const std::vector<ScaledStage>& stages, const ScaledWindow& win) {
  const double norm = win.inv_std / win.norm_area;
  for (const auto& st : stages) {
    double sum = 0;
    for (const auto& s : st.stumps)
      sum += feature_value(ii, s.f, win.x, win.y, norm) < s.threshold ? s.left : s.right;
    if (sum < st.threshold) return false;
  }
  return true;
}

}  // namespace

ScaledWindow make_window(const IntegralImage& ii, const Cascade& cascade, int x, int y, double scale) {
  HCNF_REQUIRE(scale > 0, "window scale must be positive");
  ScaledWindow w;
  w.x = x;
  w.y = y;
  w.scale = scale;
  w.w = iround(cascade.window_w * scale);
  w.h = iround(cascade.window_h * scale);
  HCNF_REQUIRE(x >= 0 && y >= 0 && x + w.w <= ii.width() && y + w.h <= ii.height(),
               "scaled cascade window leaves the image");
  const int border = (cascade.window_w > 2 && cascade.window_h > 2) ? iround(scale) : 0;
  const int nx = x + border, ny = y + border, nw = w.w - 2 * border, nh = w.h - 2 * border;
  w.norm_area = double(nw) * nh;
  const double mean = ii.rect_sum(nx, ny, nw, nh) / w.norm_area;
  const double var = ii.rect_sq_sum(nx, ny, nw, nh) / w.norm_area - mean * mean;
  w.inv_std = 1.0 / std::max(std::sqrt(std::max(var, 0.0)), 1.0);
  return w;
}

double eval_haar_feature(const IntegralImage& ii, const HaarFeature& feature, const ScaledWindow& window) {
  const ScaledFeature f = scale_feature(feature, window.scale);
  for (int k = 0; k < f.n; ++k) {
    const auto& r = f.r[k];
    HCNF_REQUIRE(r.dx >= 0 && r.dy >= 0 && r.dx + r.w <= window.w && r.dy + r.h <= window.h && r.w > 0 && r.h > 0,
                 "haar feature exceeds the scaled window");
  }
  HCNF_REQUIRE(window.x + window.w <= ii.width() && window.y + window.h <= ii.height(),
               "scaled cascade window leaves the image");
  return feature_value(ii, f, window.x, window.y, window.inv_std / window.norm_area);
}

bool eval_cascade_window(const IntegralImage& ii, const Cascade& cascade, const ScaledWindow& window) {
  HCNF_REQUIRE(window.x >= 0 && window.y >= 0 && window.x + window.w <= ii.width() &&
                   window.y + window.h <= ii.height(),
               "scaled cascade window leaves the image");
  return run_stages(ii, scale_cascade(cascade, window.scale), window);
}

std::vector<Detection> detect_multiscale(const ImageU8& gray, const Cascade& cascade, const DetectParams& params) {
  HCNF_REQUIRE(params.scale_step > 1.0, "detect: scale_step must exceed 1");
  HCNF_REQUIRE(params.stride_fraction >= 0, "detect: stride_fraction must be non-negative");
  HCNF_REQUIRE(cascade.window_w == cascade.window_h, "detect: square cascade window required");
  HCNF_REQUIRE(gray.channels() == 1, "detect expects a grayscale image");
  std::vector<Detection> out;
  if (gray.width() < cascade.window_w || gray.height() < cascade.window_h) return out;
  const IntegralImage ii(gray);
  const int min_size =
      params.min_size > 0 ? params.min_size : iround(0.1 * std::min(gray.width(), gray.height()));

  for (double s = 1.0;; s *= params.scale_step) {
    const int side = iround(cascade.window_w * s);
    if (side > gray.width() || side > gray.height()) break;
    if (params.max_size > 0 && side > params.max_size) break;
    if (side < min_size) continue;
    const int stride = std::max(1, iround(params.stride_fraction * side));
    const auto stages = scale_cascade(cascade, s);
    const int rows = (gray.height() - side) / stride + 1, cols = (gray.width() - side) / stride + 1;
    const std::size_t chunks = std::max<std::size_t>(1, parallel_chunks(rows));
    std::vector<std::vector<Detection>> found(chunks);
    const std::size_t base = rows / chunks, extra = rows % chunks;
    parallel_for(rows, [&](std::size_t lo, std::size_t hi) {
      // Chunk boundaries are a pure function of (rows, chunks).
      std::size_t c = 0, start = 0;
      while (start != lo) start += base + (c++ < extra ? 1 : 0);
      for (std::size_t r = lo; r < hi; ++r)
        for (int ci = 0; ci < cols; ++ci) {
          const ScaledWindow w = make_window(ii, cascade, ci * stride, static_cast<int>(r) * stride, s);
          if (run_stages(ii, stages, w)) found[c].push_back({w.x, w.y, side, 1});
        }
    });
    for (auto& f : found) out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

std::vector<Detection> merge_detections(const std::vector<Detection>& raw, int min_neighbors, double iou_group) {
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    bool placed = false;
    for (auto& g : groups) {
      if (std::any_of(g.begin(), g.end(), [&](std::size_t j) { return iou(raw[i], raw[j]) >= iou_group; })) {
        g.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) groups.push_back({i});
  }
  std::vector<Detection> out;
  for (const auto& g : groups) {
    if (static_cast<int>(g.size()) < min_neighbors) continue;
    double sx = 0, sy = 0, ss = 0;
    for (std::size_t j : g) {
      sx += raw[j].x;
      sy += raw[j].y;
      ss += raw[j].side;
    }
    const double n = static_cast<double>(g.size());
    // floor(x + 0.5) + floor(side) never exceeds the members' common bound.
    out.push_back({static_cast<int>(std::floor(sx / n + 0.5)), static_cast<int>(std::floor(sy / n + 0.5)),
                   static_cast<int>(std::floor(ss / n)), static_cast<int>(g.size())});
  }
  std::stable_sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
    if (a.side != b.side) return a.side > b.side;
    if (a.y != b.y) return a.y < b.y;
    return a.x < b.x;
  });
  return out;
}

std::vector<Detection> detect_faces(const ImageU8& gray, const Cascade& cascade, const DetectParams& params) {
  return merge_detections(detect_multiscale(gray, cascade, params), params.min_neighbors, params.iou_group);
}

CropBox choose_crop_box(int width, int height, const std::vector<Detection>& detections, FaceTracker& tracker,
                        CropSource* source) {
  HCNF_REQUIRE(width > 0 && height > 0, "crop: empty frame");
  const int limit = std::min(width, height);
  auto clamp_box = [&](CropBox b) {
    b.side = std::clamp(b.side, 1, limit);
    b.x = std::clamp(b.x, 0, width - b.side);
    b.y = std::clamp(b.y, 0, height - b.side);
    return b;
  };
  if (!detections.empty()) {
    const Detection* best = &detections[0];
    for (const auto& d : detections)
      if (d.side > best->side) best = &d;
    const int side = iround(1.2 * best->side);
    CropBox b = clamp_box({iround(best->x + (best->side - side) / 2.0), iround(best->y + (best->side - side) / 2.0), side});
    tracker.last = b;
    if (source) *source = CropSource::detection;
    return b;
  }
  if (tracker.last) {
    if (source) *source = CropSource::tracker;
    return clamp_box(*tracker.last);
  }
  if (source) *source = CropSource::centre;
  return {(width - limit) / 2, (height - limit) / 2, limit};
}

ImageF crop_face(const ImageU8& frame, const std::vector<Detection>& detections, FaceTracker& tracker, int n,
                 CropSource* source) {
  HCNF_REQUIRE(!frame.empty(), "crop_face: empty frame");
  HCNF_REQUIRE(n >= 8, "crop_face: n must be >= 8");
  const CropBox b = choose_crop_box(frame.width(), frame.height(), detections, tracker, source);
  return crop_resize(frame, b.x, b.y, b.side, n);
}

}  // namespace hcnf::detect

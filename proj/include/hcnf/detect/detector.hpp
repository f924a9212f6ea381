#pragma once

#include <optional>
#include <vector>

#include "hcnf/detect/cascade.hpp"
#include "hcnf/detect/integral_image.hpp"
#include "hcnf/image/image.hpp"

namespace hcnf::detect {

// Square box in source-image pixels.
struct Detection {
  int x = 0, y = 0, side = 0;
  int neighbors = 1;
  bool operator==(const Detection&) const = default;
};

double iou(const Detection& a, const Detection& b);

// A cascade window placed at `origin` and magnified by `scale`, with its
// variance normalization precomputed. The normalization rect is the window
// minus a one-pixel border; inv_std = 1 / max(std, 1) over that rect.
struct ScaledWindow {
  int x = 0, y = 0;
  double scale = 1;
  int w = 0, h = 0;     // scaled window extent
  double norm_area = 1;  // scaled normalization-rect area
  double inv_std = 1;
};

// Throws ContractError when the scaled window leaves the image.
ScaledWindow make_window(const IntegralImage& ii, const Cascade& cascade, int x, int y, double scale);

// sum(weight * rect_sum) / norm_area * inv_std over the scaled rects. When the
// base feature is zero-sum the first rect's weight is re-derived after
// rounding so the scaled feature stays zero-sum.
double eval_haar_feature(const IntegralImage& ii, const HaarFeature& feature, const ScaledWindow& window);

bool eval_cascade_window(const IntegralImage& ii, const Cascade& cascade, const ScaledWindow& window);

struct DetectParams {
  double scale_step = 1.2;
  // Stride is max(1, round(stride_fraction * scaled window side)).
  double stride_fraction = 0.05;
  int min_size = 0;  // 0 selects 10% of min(width, height)
  int max_size = 0;  // 0 means unbounded
  int min_neighbors = 3;
  double iou_group = 0.3;
};

// Raw accepted windows over the scale ladder 1, s, s^2, ... in scan order.
std::vector<Detection> detect_multiscale(const ImageU8& gray, const Cascade& cascade, const DetectParams& params = {});

// Greedy single-link grouping in input order: a box joins the first group
// holding a member with IoU >= iou_group. Groups smaller than min_neighbors
// are dropped; survivors are averaged and sorted by descending side, then
// ascending (y, x).
std::vector<Detection> merge_detections(const std::vector<Detection>& raw, int min_neighbors, double iou_group = 0.3);

// detect_multiscale followed by merge_detections.
std::vector<Detection> detect_faces(const ImageU8& gray, const Cascade& cascade, const DetectParams& params = {});

struct CropBox {
  int x = 0, y = 0, side = 0;
  bool operator==(const CropBox&) const = default;
};

// Per-stream memory of the last crop box.
struct FaceTracker {
  std::optional<CropBox> last;
};

enum class CropSource { detection, tracker, centre };

// Largest detection expanded by 20% about its centre and clamped into the
// frame; falls back to the tracker's last box, then to the central square.
CropBox choose_crop_box(int width, int height, const std::vector<Detection>& detections, FaceTracker& tracker,
                        CropSource* source = nullptr);

// n x n crop of `frame` with pixels scaled to [0,1].
ImageF crop_face(const ImageU8& frame, const std::vector<Detection>& detections, FaceTracker& tracker, int n,
                 CropSource* source = nullptr);

}  // namespace hcnf::detect

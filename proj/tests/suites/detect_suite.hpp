#pragma once

// Reference face fixture shared by the detection tests and the acceptance runner.

#include <string>

#include "hcnf/detect/detector.hpp"
#include "hcnf/image/ppm.hpp"

namespace suite {

inline std::string fixture(const std::string& name) { return std::string(HCNF_FIXTURES) + "/" + name; }

// Frontal-face box for astronaut.ppm, produced offline by OpenCV 4.10
// CascadeClassifier::detectMultiScale (scale 1.2, minNeighbors 3, minSize 51)
// with the same cascade on the same luma image.
inline constexpr hcnf::detect::Detection kReferenceFace{177, 66, 95, 1};

struct DetectionCheck {
  std::size_t raw = 0, merged = 0, uniform = 0;
  double best_raw_iou = 0, best_merged_iou = 0;
};

inline DetectionCheck run_detection_check() {
  using namespace hcnf::detect;
  const Cascade cascade = load_cascade(fixture("haarcascade_frontalface_default.xml"));
  const auto gray = hcnf::to_gray(hcnf::read_ppm(fixture("astronaut.ppm")));
  DetectionCheck r;
  const auto raw = detect_multiscale(gray, cascade);
  r.raw = raw.size();
  for (const auto& d : raw) r.best_raw_iou = std::max(r.best_raw_iou, iou(d, kReferenceFace));
  const auto merged = merge_detections(raw, DetectParams{}.min_neighbors);
  r.merged = merged.size();
  for (const auto& d : merged) r.best_merged_iou = std::max(r.best_merged_iou, iou(d, kReferenceFace));
  r.uniform = detect_faces(hcnf::ImageU8(320, 240, 1, 128), cascade).size();
  return r;
}

}  // namespace suite

#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hcnf::detect {

struct HaarRect {
  int x = 0, y = 0, w = 0, h = 0;
  double weight = 0;
  bool operator==(const HaarRect&) const = default;
};

// 2-3 rects in base-window coordinates.
struct HaarFeature {
  std::vector<HaarRect> rects;
  bool operator==(const HaarFeature&) const = default;
};

// Stump: value < threshold selects `left`, otherwise `right`.
struct WeakClassifier {
  HaarFeature feature;
  double threshold = 0, left = 0, right = 0;
  bool operator==(const WeakClassifier&) const = default;
};

// A window passes the stage when its summed stump outputs reach `threshold`.
struct Stage {
  double threshold = 0;
  std::vector<WeakClassifier> stumps;
  bool operator==(const Stage&) const = default;
};

struct Cascade {
  int window_w = 24, window_h = 24;
  std::vector<Stage> stages;

  // Throws ContractError on any rect outside the window, a feature with
  // fewer than 2 or more than 3 rects, or an empty rect.
  void validate() const;
  std::size_t stump_count() const;
  bool operator==(const Cascade&) const = default;
};

enum class CascadeFormat { automatic, native_json, opencv_xml };

// opencv_xml accepts both the legacy stump-tree layout
// (stages/_/trees/_/_/feature) and the newer one (stages/_/weakClassifiers
// with a shared features table). Tilted features and deeper trees are
// rejected. Every failure is a ParseError naming the element or line; the
// returned cascade has passed validate().
Cascade load_cascade(const std::filesystem::path& path, CascadeFormat format = CascadeFormat::automatic);
Cascade parse_cascade(const std::string& text, CascadeFormat format = CascadeFormat::automatic,
                      const std::string& source = "<memory>");

// Native JSON:
// {"window":[w,h],"stages":[{"threshold":t,"stumps":[{"rects":[{"x","y","w","h","weight"}],
//   "threshold":t,"left":l,"right":r}]}]}
std::string to_native_json(const Cascade& cascade);
void save_cascade(const Cascade& cascade, const std::filesystem::path& path);

}  // namespace hcnf::detect

#pragma once

#include <array>
#include <cstddef>
#include <string_view>
#include <vector>

#include "hcnf/core/emotion.hpp"
#include "hcnf/image/image.hpp"

namespace hcnf::data {

enum class Source { fer2013, kdef, synthetic };
enum class Split { train, val, test };

std::string_view split_name(Split s);

// One labelled still. Images are kept at their native channel count
// (grayscale for FER-2013); batching replicates gray to 3 channels.
struct Sample {
  ImageF image;  // values in [0,1]
  Emotion label = Emotion::neutral;
  Source source = Source::synthetic;
  Split split = Split::train;
};

using ClassCounts = std::array<std::size_t, kNumEmotions>;

ClassCounts class_counts(const std::vector<Sample>& samples);

}  // namespace hcnf::data

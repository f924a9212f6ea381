#pragma once

#include <cstdint>
#include <vector>

#include "hcnf/data/sample.hpp"

namespace hcnf::data {

// Procedural line-drawing faces whose brows, eyes and mouth take a
// class-specific shape, with per-sample jitter in placement, proportions,
// contrast and noise. They give every one of the 8 classes (contempt
// included) labelled data for the self-contained training runs.
ImageF render_synthetic_face(Emotion label, int size, std::uint64_t seed);

// `per_class` faces for each of the given classes, interleaved by class.
std::vector<Sample> synthetic_face_dataset(const std::vector<Emotion>& classes, std::size_t per_class, int size,
                                           std::uint64_t seed, Split split = Split::train);

}  // namespace hcnf::data

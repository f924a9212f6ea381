#include "hcnf/data/batching.hpp"

#include <algorithm>

namespace hcnf::data {

std::vector<std::size_t> seeded_permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[uniform_index(rng, i)]);
  return p;
}

BatchIterator::BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool shuffle)
    : n_(n), batch_size_(batch_size), seed_(seed), shuffle_(shuffle) {
  HCNF_REQUIRE(n > 0, "batch iterator over an empty sample set");
  HCNF_REQUIRE(batch_size >= 1, "batch size must be >= 1");
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch(std::size_t e) const {
  std::vector<std::size_t> order;
  if (shuffle_) {
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ull * (e + 1)));
    order = seeded_permutation(n_, rng);
  } else {
    order.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) order[i] = i;
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n_; b += batch_size_)
    out.emplace_back(order.begin() + b, order.begin() + std::min(n_, b + batch_size_));
  return out;
}

Batch make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices, int n) {
  HCNF_REQUIRE(!indices.empty(), "make_batch: empty index list");
  HCNF_REQUIRE(n > 0, "make_batch: n must be positive");
  const std::size_t B = indices.size(), N = std::size_t(n), plane = N * N;
  Batch out{Tensor<float>(Shape{B, 3, N, N}), Tensor<float>(Shape{B, std::size_t(kNumEmotions)}), {}};
  for (std::size_t b = 0; b < B; ++b) {
    HCNF_REQUIRE(indices[b] < samples.size(), "make_batch: sample index out of range");
    const Sample& s = samples[indices[b]];
    HCNF_REQUIRE(s.image.channels() == 1 || s.image.channels() == 3, "make_batch: samples need 1 or 3 channels");
    const ImageF img = (s.image.width() == n && s.image.height() == n) ? s.image : resize_bilinear(s.image, n, n);
    float* dst = out.images.ptr() + b * 3 * plane;
    for (std::size_t c = 0; c < 3; ++c) {
      const int src_c = img.channels() == 1 ? 0 : static_cast<int>(c);
      for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] = img.pixels()[i * img.channels() + src_c];
    }
    const int label = static_cast<int>(s.label);
    out.targets[b * kNumEmotions + label] = 1.0f;
    out.labels.push_back(label);
  }
  return out;
}

std::vector<Sample> balanced_subset(const std::vector<Sample>& samples, std::span<const Emotion> classes,
                                    std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  const auto order = seeded_permutation(samples.size(), rng);
  ClassCounts taken{};
  std::vector<Sample> out;
  for (std::size_t i : order) {
    const Emotion e = samples[i].label;
    if (std::find(classes.begin(), classes.end(), e) == classes.end()) continue;
    if (taken[static_cast<int>(e)] == per_class) continue;
    ++taken[static_cast<int>(e)];
    out.push_back(samples[i]);
  }
  return out;
}

}  // namespace hcnf::data

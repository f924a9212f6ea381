#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hcnf/data/sample.hpp"
#include "hcnf/tensor/init.hpp"
#include "hcnf/tensor/tensor.hpp"

namespace hcnf::data {

// Fisher-Yates permutation of 0..n-1 driven by `rng`.
std::vector<std::size_t> seeded_permutation(std::size_t n, Rng& rng);

// Epoch-wise mini-batches over n items. Epoch e's order depends only on
// (seed, e); without shuffling it is 0..n-1. The last batch may be short.
class BatchIterator {
 public:
  BatchIterator(std::size_t n, std::size_t batch_size, std::uint64_t seed, bool shuffle = true);

  std::size_t size() const { return n_; }
  std::size_t batches_per_epoch() const { return (n_ + batch_size_ - 1) / batch_size_; }
  std::vector<std::vector<std::size_t>> epoch(std::size_t e) const;

 private:
  std::size_t n_, batch_size_;
  std::uint64_t seed_;
  bool shuffle_;
};

// [B,3,n,n] images (gray replicated, resized when needed) and one-hot
// [B,8] targets for the selected samples.
struct Batch {
  Tensor<float> images;
  Tensor<float> targets;
  std::vector<int> labels;
};

Batch make_batch(const std::vector<Sample>& samples, std::span<const std::size_t> indices, int n);

// Up to `per_class` samples of each listed class, chosen by a seeded
// permutation, returned in permutation order.
std::vector<Sample> balanced_subset(const std::vector<Sample>& samples, std::span<const Emotion> classes,
                                    std::size_t per_class, std::uint64_t seed);

}  // namespace hcnf::data

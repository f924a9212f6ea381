#pragma once

#include <cstdint>
#include <vector>

#include "hcnf/core/error.hpp"
#include "hcnf/tensor/tensor.hpp"

namespace hcnf {

// Interleaved (HWC) image.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    HCNF_REQUIRE(width >= 0 && height >= 0 && channels >= 1, "invalid image dimensions");
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }
  Image(int width, int height, int channels, std::vector<T> pixels)
      : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    HCNF_REQUIRE(pixels_.size() == static_cast<std::size_t>(width) * height * channels,
                 "pixel buffer does not match image dimensions");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return pixels_.empty(); }

  T& at(int x, int y, int c = 0) { return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c]; }
  const T& at(int x, int y, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
  }
  // Edge-replicated read.
  const T& clamped(int x, int y, int c = 0) const {
    x = x < 0 ? 0 : (x >= width_ ? width_ - 1 : x);
    y = y < 0 ? 0 : (y >= height_ ? height_ - 1 : y);
    return at(x, y, c);
  }

  std::vector<T>& pixels() noexcept { return pixels_; }
  const std::vector<T>& pixels() const noexcept { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  int width_ = 0, height_ = 0, channels_ = 1;
  std::vector<T> pixels_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageF = Image<float>;

// Luma 0.299 R + 0.587 G + 0.114 B. Single-channel input is returned as is.
ImageF to_gray(const ImageF& rgb);
ImageU8 to_gray(const ImageU8& rgb);

ImageF to_float(const ImageU8& img, float scale = 1.0f / 255.0f);

// Bilinear sample with edge replication at continuous pixel coordinates.
float sample_bilinear(const ImageF& img, float x, float y, int c = 0);

// Bilinear resize using pixel-centre alignment.
ImageF resize_bilinear(const ImageF& img, int width, int height);

// Bilinear crop of the square [x, x+side) x [y, y+side) resampled to n x n.
ImageF crop_resize(const ImageU8& img, double x, double y, double side, int n, float scale = 1.0f / 255.0f);

ImageF gaussian_blur(const ImageF& img, double sigma);

// [C,H,W] tensor from an HWC image.
template <typename T>
Tensor<T> image_to_chw(const ImageF& img);

}  // namespace hcnf

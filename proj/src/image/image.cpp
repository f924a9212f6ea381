#include "hcnf/image/image.hpp"

#include <algorithm>
#include <cmath>

namespace hcnf {

ImageF to_gray(const ImageF& rgb) {
  if (rgb.channels() == 1) return rgb;
  HCNF_REQUIRE(rgb.channels() == 3, "to_gray expects 1 or 3 channels");
  ImageF out(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x)
      out.at(x, y) = 0.299f * rgb.at(x, y, 0) + 0.587f * rgb.at(x, y, 1) + 0.114f * rgb.at(x, y, 2);
  return out;
}

ImageU8 to_gray(const ImageU8& rgb) {
  if (rgb.channels() == 1) return rgb;
  HCNF_REQUIRE(rgb.channels() == 3, "to_gray expects 1 or 3 channels");
  ImageU8 out(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y)
    for (int x = 0; x < rgb.width(); ++x) {
      const double v = 0.299 * rgb.at(x, y, 0) + 0.587 * rgb.at(x, y, 1) + 0.114 * rgb.at(x, y, 2);
      out.at(x, y) = static_cast<std::uint8_t>(std::min(255.0, std::floor(v + 0.5)));
    }
  return out;
}

ImageF to_float(const ImageU8& img, float scale) {
  std::vector<float> px(img.pixels().size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = img.pixels()[i] * scale;
  return ImageF(img.width(), img.height(), img.channels(), std::move(px));
}

float sample_bilinear(const ImageF& img, float x, float y, int c) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const float fx = x - x0, fy = y - y0;
  const float a = img.clamped(x0, y0, c), b = img.clamped(x0 + 1, y0, c);
  const float d = img.clamped(x0, y0 + 1, c), e = img.clamped(x0 + 1, y0 + 1, c);
  return (1 - fy) * ((1 - fx) * a + fx * b) + fy * ((1 - fx) * d + fx * e);
}

ImageF resize_bilinear(const ImageF& img, int width, int height) {
  HCNF_REQUIRE(width > 0 && height > 0 && !img.empty(), "resize_bilinear: empty image or target");
  if (width == img.width() && height == img.height()) return img;
  ImageF out(width, height, img.channels());
  const float sx = static_cast<float>(img.width()) / width, sy = static_cast<float>(img.height()) / height;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < img.channels(); ++c)
        out.at(x, y, c) = sample_bilinear(img, (x + 0.5f) * sx - 0.5f, (y + 0.5f) * sy - 0.5f, c);
  return out;
}

ImageF crop_resize(const ImageU8& img, double x, double y, double side, int n, float scale) {
  HCNF_REQUIRE(n > 0 && side > 0 && !img.empty(), "crop_resize: empty image or target");
  ImageF out(n, n, img.channels());
  const double step = side / n;
  for (int j = 0; j < n; ++j) {
    const double sy = y + (j + 0.5) * step - 0.5;
    const int y0 = static_cast<int>(std::floor(sy));
    const double fy = sy - y0;
    for (int i = 0; i < n; ++i) {
      const double sx = x + (i + 0.5) * step - 0.5;
      const int x0 = static_cast<int>(std::floor(sx));
      const double fx = sx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double v = (1 - fy) * ((1 - fx) * img.clamped(x0, y0, c) + fx * img.clamped(x0 + 1, y0, c)) +
                         fy * ((1 - fx) * img.clamped(x0, y0 + 1, c) + fx * img.clamped(x0 + 1, y0 + 1, c));
        out.at(i, j, c) = static_cast<float>(v) * scale;
      }
    }
  }
  return out;
}

ImageF gaussian_blur(const ImageF& img, double sigma) {
  if (sigma <= 0) return img;
  const int r = std::max(1, static_cast<int>(std::ceil(3 * sigma)));
  std::vector<float> k(2 * r + 1);
  double s = 0;
  for (int i = -r; i <= r; ++i) s += k[i + r] = static_cast<float>(std::exp(-i * i / (2 * sigma * sigma)));
  for (auto& v : k) v = static_cast<float>(v / s);
  ImageF tmp(img.width(), img.height(), img.channels()), out(img.width(), img.height(), img.channels());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        float acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * img.clamped(x + i, y, c);
        tmp.at(x, y, c) = acc;
      }
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        float acc = 0;
        for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp.clamped(x, y + i, c);
        out.at(x, y, c) = acc;
      }
  return out;
}

template <typename T>
Tensor<T> image_to_chw(const ImageF& img) {
  const std::size_t C = img.channels(), H = img.height(), W = img.width();
  Tensor<T> t(Shape{C, H, W});
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) t[(c * H + y) * W + x] = static_cast<T>(img.at(x, y, c));
  return t;
}

template Tensor<float> image_to_chw(const ImageF&);
template Tensor<double> image_to_chw(const ImageF&);

}  // namespace hcnf

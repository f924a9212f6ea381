#pragma once

#include <cstdint>
#include <vector>

#include "hcnf/image/image.hpp"

namespace hcnf::detect {

// Summed-area tables of an 8-bit grayscale image, (width+1) x (height+1) with
// a zero first row and column. Entry (x, y) holds the sum of all pixels with
// column < x and row < y.
class IntegralImage {
 public:
  explicit IntegralImage(const ImageU8& gray);

  int width() const noexcept { return width_; }    // source width
  int height() const noexcept { return height_; }  // source height

  std::int64_t sum_at(int x, int y) const { return sum_[std::size_t(y) * (width_ + 1) + x]; }
  std::int64_t sq_at(int x, int y) const { return sq_[std::size_t(y) * (width_ + 1) + x]; }

  // Sum over [x, x+w) x [y, y+h); the rectangle must lie inside the image.
  std::int64_t rect_sum(int x, int y, int w, int h) const {
    return sum_at(x + w, y + h) - sum_at(x, y + h) - sum_at(x + w, y) + sum_at(x, y);
  }
  std::int64_t rect_sq_sum(int x, int y, int w, int h) const {
    return sq_at(x + w, y + h) - sq_at(x, y + h) - sq_at(x + w, y) + sq_at(x, y);
  }

 private:
  int width_, height_;
  std::vector<std::int64_t> sum_, sq_;
};

inline IntegralImage integral_image(const ImageU8& gray) { return IntegralImage(gray); }

}  // namespace hcnf::detect

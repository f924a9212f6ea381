#include "hcnf/detect/integral_image.hpp"

namespace hcnf::detect {

IntegralImage::IntegralImage(const ImageU8& gray) : width_(gray.width()), height_(gray.height()) {
  HCNF_REQUIRE(!gray.empty(), "integral_image: empty image");
  HCNF_REQUIRE(gray.channels() == 1, "integral_image expects a single-channel image");
  const std::size_t stride = std::size_t(width_) + 1;
  sum_.assign(stride * (height_ + 1), 0);
  sq_.assign(stride * (height_ + 1), 0);
  for (int y = 0; y < height_; ++y) {
    std::int64_t row = 0, row_sq = 0;
    for (int x = 0; x < width_; ++x) {
      const std::int64_t v = gray.at(x, y);
      row += v;
      row_sq += v * v;
      sum_[(y + 1) * stride + x + 1] = sum_[y * stride + x + 1] + row;
      sq_[(y + 1) * stride + x + 1] = sq_[y * stride + x + 1] + row_sq;
    }
  }
}

}  // namespace hcnf::detect

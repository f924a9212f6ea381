#pragma once

#include <filesystem>
#include <string>

#include "hcnf/image/image.hpp"

namespace hcnf {

// Binary PPM (P6, maxval 255). Header comments are allowed. Errors are
// ParseError naming the file and byte offset.
ImageU8 read_ppm(const std::filesystem::path& path);
ImageU8 parse_ppm(const std::string& bytes, const std::string& source = "<memory>");

// Writes P6 for 3-channel images; single-channel images are replicated.
void write_ppm(const ImageU8& img, const std::filesystem::path& path);
std::string encode_ppm(const ImageU8& img);

// [0,1] float image quantized with round-to-nearest and clamping.
ImageU8 to_u8(const ImageF& img);

}  // namespace hcnf

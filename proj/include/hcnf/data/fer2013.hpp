#pragma once

#include <array>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "hcnf/data/sample.hpp"

namespace hcnf::data {

// FER-2013 class ids 0..6 in file order: angry, disgust, fear, happy, sad,
// surprise, neutral. Id 6 is neutral; contempt never occurs.
std::optional<Emotion> fer2013_label(int id);

struct FerOptions {
  // Strict mode throws on the first bad row; lenient mode skips it.
  bool strict = true;
  std::optional<Split> usage;  // keep only this split
  std::size_t max_rows = 0;    // 0 reads everything
};

struct FerLoadResult {
  std::vector<Sample> samples;
  std::size_t rows = 0;     // data rows read (excluding the header)
  std::size_t skipped = 0;  // lenient mode only
  std::vector<std::string> errors;  // one message per skipped row
  std::array<std::size_t, 3> split_rows{};  // valid rows per split, before the usage filter
  ClassCounts class_counts{};               // of the returned samples
};

// Header must be `emotion,pixels,Usage`. Each row holds 2304 space-separated
// values 0..255 forming a 48x48 row-major grayscale image. Row errors are
// ParseError with where() = "<source>:<line>".
FerLoadResult parse_fer2013_csv(std::istream& in, const std::string& source, const FerOptions& opts = {});
FerLoadResult load_fer2013_csv(const std::filesystem::path& path, const FerOptions& opts = {});

}  // namespace hcnf::data

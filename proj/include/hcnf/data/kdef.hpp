#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hcnf/data/sample.hpp"

namespace hcnf::data {

enum class KdefAngle { full_left, half_left, straight, half_right, full_right };

struct KdefName {
  char session = 'A';  // A or B
  char gender = 'F';   // F or M
  int id = 1;          // 1..35
  Emotion emotion = Emotion::neutral;
  KdefAngle angle = KdefAngle::straight;

  bool operator==(const KdefName&) const = default;
};

// Stem layout: session, gender, two-digit id, two-letter expression code,
// angle code (FL, HL, S, HR, FR), e.g. "AF01ANS" or "BM35SUFL". A trailing
// file extension is ignored. Errors are ParseError whose where() names the
// offending field ("session", "gender", "id", "expression", "angle").
KdefName parse_kdef_filename(std::string_view name);
std::string format_kdef_filename(const KdefName& k);

// Expression codes: AF fear, AN anger, DI disgust, HA happiness, NE neutral,
// SA sadness, SU surprise.
std::string_view kdef_expression_code(Emotion e);

// Loads every PPM whose stem parses as a KDEF name. Images are converted to
// gray and the central square is resampled to n x n. Other files are
// ignored; the count is reported.
struct KdefLoadResult {
  std::vector<Sample> samples;
  std::vector<KdefName> names;
  std::size_t ignored = 0;
};
KdefLoadResult load_kdef_dir(const std::filesystem::path& dir, int n = 48);

}  // namespace hcnf::data

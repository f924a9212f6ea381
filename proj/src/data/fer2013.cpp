#include "hcnf/data/fer2013.hpp"

#include <charconv>
#include <fstream>
#include <string_view>

namespace hcnf::data {

namespace {

constexpr int kFerSide = 48;
constexpr std::size_t kFerPixels = kFerSide * kFerSide;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

std::string_view unquote(std::string_view s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

std::optional<Split> usage_split(std::string_view u) {
  if (u == "Training") return Split::train;
  if (u == "PublicTest") return Split::val;
  if (u == "PrivateTest") return Split::test;
  return std::nullopt;
}

struct Row {
  Emotion label;
  Split split;
  std::vector<float> pixels;
};

Row parse_row(std::string_view line, const std::string& where) {
  const auto c1 = line.find(',');
  const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
  if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos)
    throw ParseError(where, "expected 3 comma-separated fields");
  const auto label_field = trim(line.substr(0, c1));
  int id = -1;
  auto [lp, lec] = std::from_chars(label_field.data(), label_field.data() + label_field.size(), id);
  const auto label = (lec == std::errc() && lp == label_field.data() + label_field.size()) ? fer2013_label(id)
                                                                                           : std::nullopt;
  if (!label) throw ParseError(where, "unknown emotion label '" + std::string(label_field) + "'");

  const auto usage = trim(line.substr(c2 + 1));
  const auto split = usage_split(unquote(usage));
  if (!split) throw ParseError(where, "unknown Usage '" + std::string(usage) + "'");

  Row row{*label, *split, {}};
  row.pixels.reserve(kFerPixels);
  const auto px = unquote(trim(line.substr(c1 + 1, c2 - c1 - 1)));
  const char* p = px.data();
  const char* end = px.data() + px.size();
  std::size_t count = 0;
  while (true) {
    while (p != end && *p == ' ') ++p;
    if (p == end) break;
    int v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    if (ec != std::errc() || (next != end && *next != ' '))
      throw ParseError(where, "malformed pixel value at position " + std::to_string(count + 1));
    if (v < 0 || v > 255)
      throw ParseError(where, "pixel value " + std::to_string(v) + " out of range 0..255 at position " +
                                  std::to_string(count + 1));
    ++count;
    if (row.pixels.size() < kFerPixels) row.pixels.push_back(static_cast<float>(v) / 255.0f);
    p = next;
  }
  if (count != kFerPixels)
    throw ParseError(where, "expected " + std::to_string(kFerPixels) + " pixel values, found " + std::to_string(count));
  return row;
}

}  // namespace

std::optional<Emotion> fer2013_label(int id) {
  static constexpr Emotion kMap[7] = {Emotion::anger,   Emotion::disgust,  Emotion::fear,   Emotion::happiness,
                                      Emotion::sadness, Emotion::surprise, Emotion::neutral};
  if (id < 0 || id > 6) return std::nullopt;
  return kMap[id];
}

FerLoadResult parse_fer2013_csv(std::istream& in, const std::string& source, const FerOptions& opts) {
  FerLoadResult out;
  std::string line;
  if (!std::getline(in, line)) throw ParseError(source + ":1", "empty file, expected header emotion,pixels,Usage");
  std::string_view header = trim(line);
  if (header.starts_with("\xEF\xBB\xBF")) header.remove_prefix(3);
  if (header != "emotion,pixels,Usage")
    throw ParseError(source + ":1", "expected header emotion,pixels,Usage, found '" + std::string(header) + "'");

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (opts.max_rows && out.rows == opts.max_rows) break;
    ++out.rows;
    const std::string where = source + ":" + std::to_string(line_no);
    Row row;
    try {
      row = parse_row(line, where);
    } catch (const ParseError& e) {
      if (opts.strict) throw;
      ++out.skipped;
      out.errors.push_back(e.what());
      continue;
    }
    ++out.split_rows[static_cast<int>(row.split)];
    if (opts.usage && *opts.usage != row.split) continue;
    ++out.class_counts[static_cast<int>(row.label)];
    out.samples.push_back({ImageF(kFerSide, kFerSide, 1, std::move(row.pixels)), row.label, Source::fer2013, row.split});
  }
  return out;
}

FerLoadResult load_fer2013_csv(const std::filesystem::path& path, const FerOptions& opts) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open FER-2013 CSV " + path.string());
  return parse_fer2013_csv(in, path.string(), opts);
}

}  // namespace hcnf::data

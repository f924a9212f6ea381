#include "hcnf/data/kdef.hpp"

#include <algorithm>
#include <cctype>

#include "hcnf/image/ppm.hpp"

namespace hcnf::data {

namespace {

struct ExpressionCode {
  std::string_view code;
  Emotion emotion;
};

constexpr ExpressionCode kExpressions[] = {
    {"AF", Emotion::fear},      {"AN", Emotion::anger},   {"DI", Emotion::disgust}, {"HA", Emotion::happiness},
    {"NE", Emotion::neutral},   {"SA", Emotion::sadness}, {"SU", Emotion::surprise},
};

constexpr std::string_view kAngleCodes[] = {"FL", "HL", "S", "HR", "FR"};

}  // namespace

std::string_view kdef_expression_code(Emotion e) {
  for (const auto& x : kExpressions)
    if (x.emotion == e) return x.code;
  throw ContractError("KDEF has no expression code for " + std::string(emotion_name(e)));
}

KdefName parse_kdef_filename(std::string_view name) {
  if (const auto slash = name.find_last_of('/'); slash != std::string_view::npos) name.remove_prefix(slash + 1);
  if (const auto dot = name.find('.'); dot != std::string_view::npos) name = name.substr(0, dot);
  const std::string full(name);
  auto fail = [&](const char* field, const std::string& what) -> KdefName {
    throw ParseError(field, "KDEF name '" + full + "': " + what);
  };
  if (name.size() < 7 || name.size() > 8) return fail("length", "expected 7 or 8 characters");

  KdefName k;
  k.session = name[0];
  if (k.session != 'A' && k.session != 'B') return fail("session", "session must be A or B");
  k.gender = name[1];
  if (k.gender != 'F' && k.gender != 'M') return fail("gender", "gender must be F or M");
  if (!std::isdigit(static_cast<unsigned char>(name[2])) || !std::isdigit(static_cast<unsigned char>(name[3])))
    return fail("id", "id must be two digits");
  k.id = (name[2] - '0') * 10 + (name[3] - '0');
  if (k.id < 1 || k.id > 35) return fail("id", "id must be 01..35");
  const auto expr = name.substr(4, 2);
  const auto* e = std::find_if(std::begin(kExpressions), std::end(kExpressions),
                               [&](const ExpressionCode& x) { return x.code == expr; });
  if (e == std::end(kExpressions)) return fail("expression", "unknown expression code '" + std::string(expr) + "'");
  k.emotion = e->emotion;
  const auto angle = name.substr(6);
  const auto* a = std::find(std::begin(kAngleCodes), std::end(kAngleCodes), angle);
  if (a == std::end(kAngleCodes)) return fail("angle", "unknown angle code '" + std::string(angle) + "'");
  k.angle = static_cast<KdefAngle>(a - std::begin(kAngleCodes));
  return k;
}

std::string format_kdef_filename(const KdefName& k) {
  HCNF_REQUIRE(k.session == 'A' || k.session == 'B', "KDEF session must be A or B");
  HCNF_REQUIRE(k.gender == 'F' || k.gender == 'M', "KDEF gender must be F or M");
  HCNF_REQUIRE(k.id >= 1 && k.id <= 35, "KDEF id must be 1..35");
  std::string s{k.session, k.gender, static_cast<char>('0' + k.id / 10), static_cast<char>('0' + k.id % 10)};
  s += kdef_expression_code(k.emotion);
  s += kAngleCodes[static_cast<int>(k.angle)];
  return s;
}

KdefLoadResult load_kdef_dir(const std::filesystem::path& dir, int n) {
  if (!std::filesystem::is_directory(dir)) throw IoError("KDEF directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  KdefLoadResult out;
  for (const auto& f : files) {
    if (f.extension() != ".ppm") {
      ++out.ignored;
      continue;
    }
    KdefName k;
    try {
      k = parse_kdef_filename(f.filename().string());
    } catch (const ParseError&) {
      ++out.ignored;
      continue;
    }
    const auto gray = to_gray(read_ppm(f));
    const int side = std::min(gray.width(), gray.height());
    out.samples.push_back({crop_resize(gray, (gray.width() - side) / 2.0, (gray.height() - side) / 2.0, side, n),
                           k.emotion, Source::kdef, Split::train});
    out.names.push_back(k);
  }
  return out;
}

}  // namespace hcnf::data

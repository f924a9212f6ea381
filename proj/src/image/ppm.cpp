#include "hcnf/image/ppm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace hcnf {

namespace {

struct Cursor {
  const std::string& s;
  std::size_t pos = 0;
  const std::string& src;

  [[noreturn]] void fail(const std::string& what) const {
    throw ParseError(src + ":byte " + std::to_string(pos), what);
  }

  void skip_space_and_comments() {
    while (pos < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos;
    long v = 0;
    while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) {
      v = v * 10 + (s[pos++] - '0');
      if (v > 1'000'000) fail(std::string(what) + " too large");
    }
    if (pos == start) fail(std::string("expected ") + what);
    return v;
  }
};

}  // namespace

ImageU8 parse_ppm(const std::string& bytes, const std::string& source) {
  Cursor c{bytes, 0, source};
  if (bytes.size() < 2 || bytes[0] != 'P') c.fail("not a PNM file");
  if (bytes[1] != '6') c.fail(std::string("P6 required, found P") + bytes[1]);
  c.pos = 2;
  const long w = c.number("width"), h = c.number("height"), maxval = c.number("maxval");
  if (w <= 0 || h <= 0) c.fail("image dimensions must be positive");
  if (maxval != 255) c.fail("maxval 255 required, found " + std::to_string(maxval));
  if (c.pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[c.pos])))
    c.fail("expected whitespace after maxval");
  ++c.pos;
  const std::size_t need = std::size_t(w) * h * 3;
  if (bytes.size() - c.pos < need)
    c.fail("truncated pixel data: need " + std::to_string(need) + " bytes, have " + std::to_string(bytes.size() - c.pos));
  std::vector<std::uint8_t> px(bytes.begin() + c.pos, bytes.begin() + c.pos + need);
  return ImageU8(static_cast<int>(w), static_cast<int>(h), 3, std::move(px));
}

ImageU8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_ppm(buf.str(), path.string());
}

std::string encode_ppm(const ImageU8& img) {
  HCNF_REQUIRE(!img.empty() && (img.channels() == 1 || img.channels() == 3), "encode_ppm: need 1 or 3 channels");
  std::string out = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  if (img.channels() == 3) {
    out.append(img.pixels().begin(), img.pixels().end());
  } else {
    for (std::uint8_t v : img.pixels()) out.append(3, static_cast<char>(v));
  }
  return out;
}

void write_ppm(const ImageU8& img, const std::filesystem::path& path) {
  const std::string bytes = encode_ppm(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
    throw IoError("cannot write " + path.string());
}

ImageU8 to_u8(const ImageF& img) {
  std::vector<std::uint8_t> px(img.pixels().size());
  for (std::size_t i = 0; i < px.size(); ++i)
    px[i] = static_cast<std::uint8_t>(std::clamp(std::floor(img.pixels()[i] * 255.0f + 0.5f), 0.0f, 255.0f));
  return ImageU8(img.width(), img.height(), img.channels(), std::move(px));
}

}  // namespace hcnf

#include "hcnf/data/video.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include "hcnf/image/ppm.hpp"
#include "hcnf/tensor/init.hpp"

namespace hcnf::data {

namespace {

void parse_meta(const std::filesystem::path& path, FrameSequence& seq) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  for (int line_no = 1; std::getline(in, line); ++line_no) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(where, "expected key=value");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "fps") {
      int fps = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), fps);
      if (ec != std::errc() || p != value.data() + value.size() || fps <= 0)
        throw ParseError(where, "fps must be a positive integer, found '" + value + "'");
      seq.fps = fps;
    } else if (key == "label") {
      const auto e = parse_emotion(value);
      if (!e) throw ParseError(where, "unknown label '" + value + "'");
      seq.label = e;
    } else {
      throw ParseError(where, "unknown meta key '" + key + "'");
    }
  }
}

struct Rotation {
  double c, s;
};

}  // namespace

FrameSequence load_frame_sequence(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("frame directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  bool has_meta = false;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto name = entry.path().filename().string();
    if (name == "meta") {
      has_meta = true;
    } else if (!name.starts_with(".")) {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) throw IoError("no frames in " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });

  FrameSequence seq;
  if (has_meta) parse_meta(dir / "meta", seq);
  for (const auto& f : files) {
    auto img = read_ppm(f);
    if (!seq.frames.empty() &&
        (img.width() != seq.frames[0].width() || img.height() != seq.frames[0].height()))
      throw ParseError(f.string(), "frame is " + std::to_string(img.width()) + "x" + std::to_string(img.height()) +
                                       ", expected " + std::to_string(seq.frames[0].width()) + "x" +
                                       std::to_string(seq.frames[0].height()) + " like " + files[0].filename().string());
    seq.frames.push_back(std::move(img));
  }
  return seq;
}

void save_frame_sequence(const FrameSequence& seq, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05zu.ppm", i);
    write_ppm(seq.frames[i], dir / name);
  }
  std::ofstream meta(dir / "meta", std::ios::trunc);
  meta << "fps=" << seq.fps << "\n";
  if (seq.label) meta << "label=" << emotion_name(*seq.label) << "\n";
  if (!meta) throw IoError("cannot write " + (dir / "meta").string());
}

ImageF apply_jitter(const ImageF& src, const AffineJitter& j) {
  const double th = j.theta_deg * std::numbers::pi / 180.0;
  const Rotation inv{std::cos(th), -std::sin(th)};
  const double cx = (src.width() - 1) / 2.0, cy = (src.height() - 1) / 2.0;
  ImageF out(src.width(), src.height(), src.channels());
  for (int y = 0; y < src.height(); ++y)
    for (int x = 0; x < src.width(); ++x) {
      const double dx = x - cx - j.tx, dy = y - cy - j.ty;
      const double sx = inv.c * dx - inv.s * dy + cx, sy = inv.s * dx + inv.c * dy + cy;
      for (int c = 0; c < src.channels(); ++c)
        out.at(x, y, c) = sample_bilinear(src, static_cast<float>(sx), static_cast<float>(sy), c);
    }
  return out;
}

double max_displacement(const AffineJitter& a, const AffineJitter& b, int width, int height) {
  // The displacement is affine in the source point, so its norm peaks at a corner.
  const double ta = a.theta_deg * std::numbers::pi / 180.0, tb = b.theta_deg * std::numbers::pi / 180.0;
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;
  double worst = 0;
  for (double qx : {-cx, cx})
    for (double qy : {-cy, cy}) {
      const double ax = std::cos(ta) * qx - std::sin(ta) * qy + a.tx, ay = std::sin(ta) * qx + std::cos(ta) * qy + a.ty;
      const double bx = std::cos(tb) * qx - std::sin(tb) * qy + b.tx, by = std::sin(tb) * qx + std::cos(tb) * qy + b.ty;
      worst = std::max(worst, std::hypot(bx - ax, by - ay));
    }
  return worst;
}

SynthMotion synth_motion_sequence(const ImageF& still, int length, double amplitude, std::uint64_t seed,
                                  std::optional<Emotion> label) {
  HCNF_REQUIRE(length >= 1, "synth_motion_sequence: length must be >= 1");
  HCNF_REQUIRE(amplitude >= 0, "synth_motion_sequence: amplitude must be >= 0");
  HCNF_REQUIRE(!still.empty() && (still.channels() == 1 || still.channels() == 3),
               "synth_motion_sequence: still must have 1 or 3 channels");
  Rng rng(seed);
  const double r_max = 0.5 * std::hypot(still.width() - 1, still.height() - 1);
  const double max_rot = kMaxJitterRotationDeg * std::numbers::pi / 180.0;
  // Each step spends at most half its displacement budget on rotation.
  const double step_rot = r_max > 0 ? std::min(max_rot / 6, 0.5 * amplitude / r_max) : 0.0;

  SynthMotion out;
  out.sequence.label = label;
  AffineJitter j;
  for (int k = 0; k < length; ++k) {
    if (k > 0) {
      const double dth = (2 * uniform01(rng) - 1) * step_rot;
      const double budget = std::max(0.0, amplitude - std::abs(dth) * r_max);
      const double m = uniform01(rng) * budget, phi = 2 * std::numbers::pi * uniform01(rng);
      // Clamping onto the box is non-expansive, so the step bound survives it.
      j.tx = std::clamp(j.tx + m * std::cos(phi), -amplitude, amplitude);
      j.ty = std::clamp(j.ty + m * std::sin(phi), -amplitude, amplitude);
      const double th = std::clamp(j.theta_deg * std::numbers::pi / 180.0 + dth, -max_rot, max_rot);
      j.theta_deg = th * 180.0 / std::numbers::pi;
    }
    out.trace.push_back(j);
    ImageF warped = k == 0 ? still : apply_jitter(still, j);
    ImageU8 frame = to_u8(warped);
    if (frame.channels() == 1) {
      ImageU8 rgb(frame.width(), frame.height(), 3);
      for (std::size_t i = 0; i < frame.pixels().size(); ++i)
        for (int c = 0; c < 3; ++c) rgb.pixels()[i * 3 + c] = frame.pixels()[i];
      frame = std::move(rgb);
    }
    out.sequence.frames.push_back(std::move(frame));
  }
  return out;
}

}  // namespace hcnf::data

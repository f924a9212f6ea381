#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "hcnf/core/emotion.hpp"
#include "hcnf/image/image.hpp"

namespace hcnf::data {

inline constexpr int kDefaultFps = 3;

struct FrameSequence {
  std::vector<ImageU8> frames;  // RGB, uniform size
  int fps = kDefaultFps;
  std::optional<Emotion> label;

  std::size_t size() const { return frames.size(); }
};

// Reads every regular file except `meta` (and dot-files) as a P6 frame, in
// lexicographic filename order. `meta` holds `fps=<int>` and optionally
// `label=<emotion name>`, one per line.
FrameSequence load_frame_sequence(const std::filesystem::path& dir);

// Writes frame_00000.ppm, ... and a meta file.
void save_frame_sequence(const FrameSequence& seq, const std::filesystem::path& dir);

// Per-frame warp parameters: the frame is the still translated by (tx, ty)
// and rotated by theta_deg about the image centre.
struct AffineJitter {
  double tx = 0, ty = 0, theta_deg = 0;
};

struct SynthMotion {
  FrameSequence sequence;
  std::vector<AffineJitter> trace;  // one per frame, trace[0] is the identity
};

inline constexpr double kMaxJitterRotationDeg = 3.0;

// Random walk of affine jitter applied to `still` with bilinear warping.
// |tx|, |ty| <= amplitude, |theta| <= 3 degrees, and no pixel moves more than
// `amplitude` px between consecutive frames. Gray stills are replicated to
// RGB.
SynthMotion synth_motion_sequence(const ImageF& still, int length, double amplitude, std::uint64_t seed,
                                  std::optional<Emotion> label = std::nullopt);

// Warps `src` by `j` (inverse mapping, edge replication).
ImageF apply_jitter(const ImageF& src, const AffineJitter& j);

// Largest displacement of any pixel of a width x height image between two
// warps.
double max_displacement(const AffineJitter& a, const AffineJitter& b, int width, int height);

}  // namespace hcnf::data

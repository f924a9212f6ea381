#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "hcnf/data/batching.hpp"
#include "hcnf/data/fer2013.hpp"
#include "hcnf/data/kdef.hpp"
#include "hcnf/data/synthetic_faces.hpp"
#include "hcnf/data/video.hpp"
#include "hcnf/image/ppm.hpp"
#include "suites/flow_suite.hpp"

using namespace hcnf;
using namespace hcnf::data;

namespace {

std::string pixels_row(std::size_t count, int value = 0) {
  std::string s;
  for (std::size_t i = 0; i < count; ++i) {
    if (i) s += ' ';
    s += std::to_string(value);
  }
  return s;
}

FerLoadResult parse(const std::string& csv, FerOptions opts = {}) {
  std::istringstream in(csv);
  return parse_fer2013_csv(in, "fer.csv", opts);
}

const std::string kHeader = "emotion,pixels,Usage\n";

std::filesystem::path fresh_dir(const std::string& name) {
  auto d = std::filesystem::temp_directory_path() / "hcnf_data_test" / name;
  std::filesystem::remove_all(d);
  std::filesystem::create_directories(d);
  return d;
}

ImageU8 solid(int w, int h, std::uint8_t v) { return ImageU8(w, h, 3, v); }

}  // namespace

TEST(Fer2013, LabelMapping) {
  const Emotion expect[7] = {Emotion::anger,   Emotion::disgust,  Emotion::fear,   Emotion::happiness,
                             Emotion::sadness, Emotion::surprise, Emotion::neutral};
  for (int i = 0; i < 7; ++i) EXPECT_EQ(fer2013_label(i), expect[i]);
  EXPECT_EQ(fer2013_label(6), Emotion::neutral);
  EXPECT_FALSE(fer2013_label(7).has_value());
  EXPECT_FALSE(fer2013_label(-1).has_value());
}

TEST(Fer2013, BlackHappyTrainingRow) {
  auto r = parse(kHeader + "3," + pixels_row(2304) + ",Training\n");
  ASSERT_EQ(r.samples.size(), 1u);
  const auto& s = r.samples[0];
  EXPECT_EQ(s.label, Emotion::happiness);
  EXPECT_EQ(s.split, Split::train);
  EXPECT_EQ(s.source, Source::fer2013);
  EXPECT_EQ(s.image.width(), 48);
  EXPECT_EQ(s.image.height(), 48);
  for (float v : s.image.pixels()) EXPECT_EQ(v, 0.0f);
}

TEST(Fer2013, PixelScalingAndRowMajorOrder) {
  std::vector<int> px(2304, 51);
  px[48 * 2 + 5] = 255;
  std::string row = "6,\"";
  for (std::size_t i = 0; i < px.size(); ++i) row += (i ? " " : "") + std::to_string(px[i]);
  row += "\",PrivateTest\r\n";
  auto r = parse(kHeader + row);
  ASSERT_EQ(r.samples.size(), 1u);
  EXPECT_EQ(r.samples[0].label, Emotion::neutral);
  EXPECT_EQ(r.samples[0].split, Split::test);
  EXPECT_FLOAT_EQ(r.samples[0].image.at(5, 2), 1.0f);
  EXPECT_FLOAT_EQ(r.samples[0].image.at(2, 5), 0.2f);
}

TEST(Fer2013, RowErrorsNameLineAndCount) {
  auto expect_error = [](const std::string& row, const std::string& needle) {
    try {
      parse(kHeader + "0," + pixels_row(2304) + ",Training\n" + row + "\n");
      ADD_FAILURE() << "expected ParseError for " << needle;
    } catch (const ParseError& e) {
      EXPECT_EQ(e.where(), "fer.csv:3");
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_error("1," + pixels_row(2303) + ",Training", "found 2303");
  expect_error("1," + pixels_row(2305) + ",Training", "found 2305");
  expect_error("1," + pixels_row(2303) + " 256,Training", "256 out of range");
  expect_error("7," + pixels_row(2304) + ",Training", "label '7'");
  expect_error("x," + pixels_row(2304) + ",Training", "label 'x'");
  expect_error("1," + pixels_row(2304) + ",Holdout", "Usage 'Holdout'");
  expect_error("1," + pixels_row(2304), "3 comma-separated fields");
  expect_error("1," + pixels_row(10) + " 1.5 " + pixels_row(2293) + ",Training", "position 11");
}

TEST(Fer2013, HeaderIsRequired) {
  try {
    parse("label,pixels,Usage\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), "fer.csv:1");
  }
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_NO_THROW(parse("\xEF\xBB\xBF" + kHeader));
}

TEST(Fer2013, StrictAbortsLenientSkipsAndCounts) {
  std::string csv = kHeader;
  csv += "0," + pixels_row(2304, 10) + ",Training\n";
  csv += "1," + pixels_row(2303, 10) + ",Training\n";
  csv += "2," + pixels_row(2304, 10) + ",PublicTest\n";
  csv += "9," + pixels_row(2304, 10) + ",Training\n";
  csv += "4," + pixels_row(2304, 10) + ",PrivateTest\n";
  csv += "\n";
  try {
    parse(csv);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.where(), "fer.csv:3");
  }
  FerOptions lenient;
  lenient.strict = false;
  auto r = parse(csv, lenient);
  EXPECT_EQ(r.rows, 5u);
  EXPECT_EQ(r.skipped, 2u);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_NE(r.errors[1].find("fer.csv:5"), std::string::npos);
  EXPECT_EQ(r.samples.size(), 3u);
  EXPECT_EQ(r.split_rows[0] + r.split_rows[1] + r.split_rows[2], r.rows - r.skipped);
  EXPECT_EQ(r.split_rows[1], 1u);

  lenient.usage = Split::val;
  auto v = parse(csv, lenient);
  ASSERT_EQ(v.samples.size(), 1u);
  EXPECT_EQ(v.samples[0].label, Emotion::fear);
  EXPECT_EQ(v.class_counts[static_cast<int>(Emotion::fear)], 1u);

  FerOptions capped;
  capped.max_rows = 1;
  EXPECT_EQ(parse(csv, capped).samples.size(), 1u);
}

TEST(Fer2013, RandomFilesLoadWithinInvariants) {
  std::mt19937_64 rng(3);
  const char* usages[] = {"Training", "PublicTest", "PrivateTest"};
  std::string csv = kHeader;
  std::array<std::size_t, 3> expect_split{};
  for (int r = 0; r < 40; ++r) {
    const int label = int(rng() % 7), usage = int(rng() % 3);
    ++expect_split[usage];
    csv += std::to_string(label) + ",";
    for (int i = 0; i < 2304; ++i) csv += (i ? " " : "") + std::to_string(rng() % 256);
    csv += std::string(",") + usages[usage] + "\n";
  }
  auto res = parse(csv);
  EXPECT_EQ(res.skipped, 0u);
  EXPECT_EQ(res.samples.size(), 40u);
  EXPECT_EQ(res.split_rows, expect_split);
  for (const auto& s : res.samples) {
    EXPECT_NE(s.label, Emotion::contempt);
    for (float v : s.image.pixels()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Fer2013, MissingFileIsIoError) { EXPECT_THROW(load_fer2013_csv("/nonexistent/fer.csv"), IoError); }

TEST(Kdef, ParsesDocumentedExamples) {
  EXPECT_EQ(parse_kdef_filename("AF01ANS"), (KdefName{'A', 'F', 1, Emotion::anger, KdefAngle::straight}));
  EXPECT_EQ(parse_kdef_filename("BM35SUFL"), (KdefName{'B', 'M', 35, Emotion::surprise, KdefAngle::full_left}));
  EXPECT_EQ(parse_kdef_filename("some/dir/AM12AFHR.JPG"),
            (KdefName{'A', 'M', 12, Emotion::fear, KdefAngle::half_right}));
}

TEST(Kdef, ErrorsNameTheField) {
  auto field_of = [](const char* name) {
    try {
      parse_kdef_filename(name);
    } catch (const ParseError& e) {
      return e.where();
    }
    return std::string("no error");
  };
  EXPECT_EQ(field_of("XX01ANS"), "session");
  EXPECT_EQ(field_of("AX01ANS"), "gender");
  EXPECT_EQ(field_of("AF36ANS"), "id");
  EXPECT_EQ(field_of("AF00ANS"), "id");
  EXPECT_EQ(field_of("AFx1ANS"), "id");
  EXPECT_EQ(field_of("AF01XXS"), "expression");
  EXPECT_EQ(field_of("AF01ANQ"), "angle");
  EXPECT_EQ(field_of("AF01ANSX"), "angle");
  EXPECT_EQ(field_of("AF01AN"), "length");
}

TEST(Kdef, RoundTripIsExhaustiveIdentity) {
  const Emotion expressions[] = {Emotion::fear,    Emotion::anger,   Emotion::disgust, Emotion::happiness,
                                 Emotion::neutral, Emotion::sadness, Emotion::surprise};
  std::set<std::string> names;
  for (char session : {'A', 'B'})
    for (char gender : {'F', 'M'})
      for (int id = 1; id <= 35; ++id)
        for (Emotion e : expressions)
          for (int a = 0; a < 5; ++a) {
            const KdefName k{session, gender, id, e, static_cast<KdefAngle>(a)};
            const auto s = format_kdef_filename(k);
            ASSERT_EQ(parse_kdef_filename(s), k) << s;
            names.insert(s);
          }
  EXPECT_EQ(names.size(), 2u * 2 * 35 * 7 * 5);
  EXPECT_THROW(kdef_expression_code(Emotion::contempt), ContractError);
}

TEST(Kdef, LoadsDirectoryAndIgnoresOthers) {
  const auto dir = fresh_dir("kdef");
  write_ppm(solid(60, 80, 200), dir / "AF01HAS.ppm");
  write_ppm(solid(60, 80, 100), dir / "BM02SAFR.ppm");
  write_ppm(solid(60, 80, 100), dir / "notes.ppm");
  std::ofstream(dir / "README") << "x";
  auto r = load_kdef_dir(dir, 32);
  ASSERT_EQ(r.samples.size(), 2u);
  EXPECT_EQ(r.ignored, 2u);
  EXPECT_EQ(r.samples[0].label, Emotion::happiness);
  EXPECT_EQ(r.samples[1].label, Emotion::sadness);
  EXPECT_EQ(r.samples[0].source, Source::kdef);
  EXPECT_EQ(r.samples[0].image.width(), 32);
  EXPECT_EQ(r.samples[0].image.channels(), 1);
  EXPECT_NEAR(r.samples[0].image.at(10, 10), 200 / 255.0f, 1e-6);
}

TEST(FrameSequence, SaveLoadNinetyFrames) {
  const auto dir = fresh_dir("ninety");
  FrameSequence seq;
  seq.fps = 5;
  seq.label = Emotion::contempt;
  for (int i = 0; i < 90; ++i) seq.frames.push_back(solid(16, 12, static_cast<std::uint8_t>(i)));
  save_frame_sequence(seq, dir);
  auto back = load_frame_sequence(dir);
  ASSERT_EQ(back.size(), 90u);
  EXPECT_EQ(back.fps, 5);
  EXPECT_EQ(back.label, Emotion::contempt);
  for (int i = 0; i < 90; ++i) EXPECT_EQ(back.frames[i], seq.frames[i]);
}

TEST(FrameSequence, DefaultsWithoutMeta) {
  const auto dir = fresh_dir("nometa");
  write_ppm(solid(8, 8, 1), dir / "b.ppm");
  write_ppm(solid(8, 8, 2), dir / "a.ppm");
  auto seq = load_frame_sequence(dir);
  EXPECT_EQ(seq.fps, 3);
  EXPECT_FALSE(seq.label.has_value());
  ASSERT_EQ(seq.size(), 2u);
  EXPECT_EQ(seq.frames[0].at(0, 0), 2);  // lexicographic: a.ppm first
}

TEST(FrameSequence, MixedSizesNameFirstOffender) {
  const auto dir = fresh_dir("mixed");
  write_ppm(solid(48, 48, 1), dir / "f0.ppm");
  write_ppm(solid(48, 48, 1), dir / "f1.ppm");
  write_ppm(solid(64, 64, 1), dir / "f2.ppm");
  write_ppm(solid(64, 64, 1), dir / "f3.ppm");
  try {
    load_frame_sequence(dir);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(e.where().find("f2.ppm"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("64x64"), std::string::npos);
  }
}

TEST(FrameSequence, AsciiPpmRejected) {
  const auto dir = fresh_dir("p3");
  std::ofstream(dir / "f0.ppm") << "P3\n1 1\n255\n0 0 0\n";
  try {
    load_frame_sequence(dir);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("P6 required"), std::string::npos) << e.what();
  }
}

TEST(FrameSequence, EmptyDirectoryAndBadMeta) {
  const auto dir = fresh_dir("empty");
  EXPECT_THROW(load_frame_sequence(dir), IoError);
  std::ofstream(dir / "meta") << "fps=3\n";
  EXPECT_THROW(load_frame_sequence(dir), IoError);
  write_ppm(solid(4, 4, 0), dir / "f.ppm");
  std::ofstream(dir / "meta", std::ios::trunc) << "fps=3\nlabel=joy\n";
  try {
    load_frame_sequence(dir);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(e.where().find("meta:2"), std::string::npos) << e.where();
  }
  std::ofstream(dir / "meta", std::ios::trunc) << "fps=0\n";
  EXPECT_THROW(load_frame_sequence(dir), ParseError);
}

TEST(SynthMotion, ZeroAmplitudeFramesAreIdentical) {
  const auto still = render_synthetic_face(Emotion::sadness, 48, 1);
  auto m = synth_motion_sequence(still, 6, 0.0, 2, Emotion::sadness);
  ASSERT_EQ(m.sequence.size(), 6u);
  EXPECT_EQ(m.sequence.label, Emotion::sadness);
  for (const auto& f : m.sequence.frames) EXPECT_EQ(f, m.sequence.frames[0]);
  auto f = flow::farneback_flow(to_float(to_gray(m.sequence.frames[0]), 1.0f),
                                to_float(to_gray(m.sequence.frames[5]), 1.0f));
  EXPECT_LT(f.max_magnitude(), 1e-3);
}

TEST(SynthMotion, SeededAndReproducible) {
  const auto still = render_synthetic_face(Emotion::anger, 32, 1);
  auto a = synth_motion_sequence(still, 10, 2.0, 7), b = synth_motion_sequence(still, 10, 2.0, 7);
  auto c = synth_motion_sequence(still, 10, 2.0, 8);
  EXPECT_EQ(a.sequence.frames, b.sequence.frames);
  EXPECT_NE(a.sequence.frames, c.sequence.frames);
  EXPECT_EQ(a.sequence.frames[0].channels(), 3);
  EXPECT_EQ(a.sequence.frames[0].width(), 32);
}

TEST(SynthMotion, PerStepDisplacementBoundedByAmplitude) {
  // Oracle: move every pixel centre by each logged warp and measure directly.
  const int W = 48, H = 40;
  for (double amp : {0.5, 2.0, 4.0}) {
    auto m = synth_motion_sequence(ImageF(W, H, 1, 0.5f), 30, amp, 11);
    ASSERT_EQ(m.trace.size(), 30u);
    EXPECT_EQ(m.trace[0].tx, 0.0);
    double worst = 0;
    for (std::size_t k = 0; k < m.trace.size(); ++k) {
      const auto& j = m.trace[k];
      EXPECT_LE(std::abs(j.tx), amp);
      EXPECT_LE(std::abs(j.ty), amp);
      EXPECT_LE(std::abs(j.theta_deg), 3.0);
      if (k == 0) continue;
      const auto& p = m.trace[k - 1];
      double step = 0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          auto move = [&](const AffineJitter& a, double& ox, double& oy) {
            const double t = a.theta_deg * std::numbers::pi / 180, qx = x - (W - 1) / 2.0, qy = y - (H - 1) / 2.0;
            ox = std::cos(t) * qx - std::sin(t) * qy + a.tx;
            oy = std::sin(t) * qx + std::cos(t) * qy + a.ty;
          };
          double ax, ay, bx, by;
          move(p, ax, ay);
          move(j, bx, by);
          step = std::max(step, std::hypot(bx - ax, by - ay));
        }
      EXPECT_LE(step, amp + 1e-9);
      EXPECT_NEAR(max_displacement(p, j, W, H), step, 1e-9);
      worst = std::max(worst, step);
    }
    EXPECT_GT(worst, 0.2 * amp);
  }
}

TEST(SynthMotion, MeasuredFlowBoundedByAmplitude) {
  // Smooth still in [0,1]; flow measured on 0..255 gray frames.
  suite::SmoothTexture tex(5, true);
  ImageF still = tex.render(48, 48);
  for (auto& v : still.pixels()) v = std::clamp(v / 255.0f, 0.0f, 1.0f);
  const double amp = 1.5;
  auto m = synth_motion_sequence(still, 8, amp, 3);
  for (std::size_t k = 1; k < m.sequence.size(); ++k) {
    auto f = flow::farneback_flow(to_float(to_gray(m.sequence.frames[k - 1]), 1.0f),
                                  to_float(to_gray(m.sequence.frames[k]), 1.0f));
    double worst = 0;
    for (int y = 8; y < 40; ++y)
      for (int x = 8; x < 40; ++x) worst = std::max(worst, std::hypot(double(f.dx(x, y)), double(f.dy(x, y))));
    EXPECT_LE(worst, amp + 0.5) << "step " << k;
  }
}

TEST(SynthMotion, LengthMustBePositive) {
  EXPECT_THROW(synth_motion_sequence(ImageF(8, 8, 1), 0, 1.0, 1), ContractError);
}

TEST(Batching, TenSamplesBatchFour) {
  BatchIterator it(10, 4, 1);
  auto e = it.epoch(0);
  ASSERT_EQ(e.size(), 3u);
  EXPECT_EQ(e[0].size(), 4u);
  EXPECT_EQ(e[1].size(), 4u);
  EXPECT_EQ(e[2].size(), 2u);
  EXPECT_EQ(it.batches_per_epoch(), 3u);
}

TEST(Batching, EveryEpochIsAPermutation) {
  for (std::size_t n : {1u, 7u, 64u, 1000u}) {
    BatchIterator it(n, 5, 42);
    for (std::size_t ep = 0; ep < 3; ++ep) {
      std::vector<std::size_t> all;
      for (const auto& b : it.epoch(ep)) all.insert(all.end(), b.begin(), b.end());
      ASSERT_EQ(all.size(), n);
      std::sort(all.begin(), all.end());
      for (std::size_t i = 0; i < n; ++i) ASSERT_EQ(all[i], i);
    }
  }
}

TEST(Batching, SeedDeterminesOrder) {
  BatchIterator a(1000, 32, 1), b(1000, 32, 1), c(1000, 32, 2);
  EXPECT_EQ(a.epoch(0), b.epoch(0));
  EXPECT_NE(a.epoch(0), c.epoch(0));
  EXPECT_NE(a.epoch(0), a.epoch(1));
  BatchIterator plain(5, 2, 1, false);
  EXPECT_EQ(plain.epoch(3), (std::vector<std::vector<std::size_t>>{{0, 1}, {2, 3}, {4}}));
}

TEST(Batching, RejectsEmptyAndZeroBatch) {
  EXPECT_THROW(BatchIterator(0, 4, 1), ContractError);
  EXPECT_THROW(BatchIterator(4, 0, 1), ContractError);
}

TEST(Batching, UniformIndexIsUnbiased) {
  Rng rng(9);
  std::array<int, 6> hist{};
  const int draws = 60000;
  for (int i = 0; i < draws; ++i) ++hist[uniform_index(rng, 6)];
  double chi2 = 0;
  for (int h : hist) chi2 += (h - draws / 6.0) * (h - draws / 6.0) / (draws / 6.0);
  EXPECT_LT(chi2, 20.5);  // p = 0.001 at 5 degrees of freedom
}

TEST(Batching, MakeBatchReplicatesGrayAndOneHots) {
  std::vector<Sample> samples;
  samples.push_back({ImageF(4, 4, 1, 0.25f), Emotion::fear, Source::synthetic, Split::train});
  ImageF rgb(4, 4, 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      rgb.at(x, y, 0) = 0.1f;
      rgb.at(x, y, 1) = 0.2f;
      rgb.at(x, y, 2) = 0.3f;
    }
  samples.push_back({rgb, Emotion::neutral, Source::synthetic, Split::train});
  std::vector<std::size_t> idx = {1, 0};
  auto b = make_batch(samples, idx, 4);
  EXPECT_EQ(b.images.shape(), (Shape{2, 3, 4, 4}));
  EXPECT_EQ(b.labels, (std::vector<int>{7, 2}));
  EXPECT_FLOAT_EQ(b.images[0 * 48 + 2 * 16 + 5], 0.3f);
  for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(b.images[48 + c * 16 + 7], 0.25f);
  for (int j = 0; j < 8; ++j) {
    EXPECT_EQ(b.targets[j], j == 7 ? 1.0f : 0.0f);
    EXPECT_EQ(b.targets[8 + j], j == 2 ? 1.0f : 0.0f);
  }
  EXPECT_EQ(make_batch(samples, idx, 8).images.shape(), (Shape{2, 3, 8, 8}));
}

TEST(Batching, BalancedSubsetTakesPerClass) {
  auto data = synthetic_face_dataset({Emotion::anger, Emotion::happiness, Emotion::sadness}, 10, 16, 1);
  const Emotion want[] = {Emotion::anger, Emotion::sadness};
  auto sub = balanced_subset(data, want, 4, 2);
  EXPECT_EQ(sub.size(), 8u);
  auto counts = class_counts(sub);
  EXPECT_EQ(counts[static_cast<int>(Emotion::anger)], 4u);
  EXPECT_EQ(counts[static_cast<int>(Emotion::sadness)], 4u);
  EXPECT_EQ(counts[static_cast<int>(Emotion::happiness)], 0u);
}

TEST(SyntheticFaces, DeterministicAndInRange) {
  for (int e = 0; e < kNumEmotions; ++e) {
    auto a = render_synthetic_face(static_cast<Emotion>(e), 48, 5);
    EXPECT_EQ(a, render_synthetic_face(static_cast<Emotion>(e), 48, 5));
    for (float v : a.pixels()) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
  auto d = synthetic_face_dataset({Emotion::anger, Emotion::contempt}, 3, 24, 9);
  ASSERT_EQ(d.size(), 6u);
  EXPECT_EQ(d[0].label, Emotion::anger);
  EXPECT_EQ(d[1].label, Emotion::contempt);
}

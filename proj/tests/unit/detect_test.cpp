#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include "hcnf/core/parallel.hpp"
#include "suites/detect_suite.hpp"

using namespace hcnf;
using namespace hcnf::detect;

namespace {

ImageU8 random_gray(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ImageU8 img(w, h, 1);
  for (auto& v : img.pixels()) v = static_cast<std::uint8_t>(rng() & 0xff);
  return img;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const Cascade& reference_cascade() {
  static const Cascade c = load_cascade(suite::fixture("haarcascade_frontalface_default.xml"));
  return c;
}

HaarFeature halves_lr(int w, int h) { return {{{0, 0, w / 2, h, 1.0}, {w / 2, 0, w / 2, h, -1.0}}}; }
HaarFeature halves_tb(int w, int h) { return {{{0, 0, w, h / 2, 1.0}, {0, h / 2, w, h / 2, -1.0}}}; }

// Legacy-layout equivalent of a two-stump, one-stage cascade.
const char* kLegacyXml = R"(<?xml version="1.0"?>
<opencv_storage>
<tiny type_id="opencv-haar-classifier">
  <size>24 24</size>
  <stages>
    <_>
      <!-- stage 0 -->
      <trees>
        <_>
          <_>
            <feature>
              <rects>
                <_>0 0 12 24 -1.</_>
                <_>12 0 12 24 1.</_></rects>
              <tilted>0</tilted></feature>
            <threshold>0.25</threshold>
            <left_val>-1.5</left_val>
            <right_val>2.</right_val></_></_>
        <_>
          <_>
            <feature>
              <rects>
                <_>2 2 20 20 -1.</_>
                <_>7 7 10 10 4.</_></rects>
              <tilted>0</tilted></feature>
            <threshold>-0.125</threshold>
            <left_val>0.5</left_val>
            <right_val>-0.75</right_val></_></_></trees>
      <stage_threshold>0.5</stage_threshold>
      <parent>-1</parent>
      <next>-1</next></_></stages></tiny>
</opencv_storage>
)";

const char* kNewXml = R"(<?xml version="1.0"?>
<opencv_storage>
<cascade type_id="opencv-cascade-classifier"><stageType>BOOST</stageType>
  <featureType>HAAR</featureType>
  <height>24</height>
  <width>24</width>
  <stageNum>1</stageNum>
  <stages>
    <_>
      <maxWeakCount>2</maxWeakCount>
      <stageThreshold>0.5</stageThreshold>
      <weakClassifiers>
        <_>
          <internalNodes>0 -1 1 0.25</internalNodes>
          <leafValues>-1.5 2.</leafValues></_>
        <_>
          <internalNodes>0 -1 0 -0.125</internalNodes>
          <leafValues>0.5 -0.75</leafValues></_></weakClassifiers></_></stages>
  <features>
    <_>
      <rects>
        <_>2 2 20 20 -1.</_>
        <_>7 7 10 10 4.</_></rects></_>
    <_>
      <rects>
        <_>0 0 12 24 -1.</_>
        <_>12 0 12 24 1.</_></rects></_></features></cascade>
</opencv_storage>
)";

Cascade tiny_expected() {
  Cascade c;
  c.stages.push_back({0.5,
                      {{{{{0, 0, 12, 24, -1.0}, {12, 0, 12, 24, 1.0}}}, 0.25, -1.5, 2.0},
                       {{{{2, 2, 20, 20, -1.0}, {7, 7, 10, 10, 4.0}}}, -0.125, 0.5, -0.75}}});
  return c;
}

}  // namespace

TEST(IntegralImage, TwoByTwoOnes) {
  IntegralImage ii(ImageU8(2, 2, 1, 1));
  const std::int64_t expect[3][3] = {{0, 0, 0}, {0, 1, 2}, {0, 2, 4}};
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) EXPECT_EQ(ii.sum_at(x, y), expect[y][x]);
}

TEST(IntegralImage, FullRectOfOnes) {
  IntegralImage ii(ImageU8(3, 3, 1, 1));
  EXPECT_EQ(ii.rect_sum(0, 0, 3, 3), 9);
  EXPECT_EQ(ii.rect_sq_sum(0, 0, 3, 3), 9);
}

TEST(IntegralImage, EveryRectMatchesDirectSummation) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const int W = seed == 1 ? 5 : 9, H = seed == 1 ? 5 : 7;
    auto img = random_gray(W, H, seed);
    IntegralImage ii(img);
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int h = 1; y + h <= H; ++h)
          for (int w = 1; x + w <= W; ++w) {
            std::int64_t s = 0, q = 0;
            for (int j = y; j < y + h; ++j)
              for (int i = x; i < x + w; ++i) {
                s += img.at(i, j);
                q += std::int64_t(img.at(i, j)) * img.at(i, j);
              }
            ASSERT_EQ(ii.rect_sum(x, y, w, h), s);
            ASSERT_EQ(ii.rect_sq_sum(x, y, w, h), q);
          }
  }
}

TEST(IntegralImage, ZeroBorderAndMonotone) {
  IntegralImage ii(random_gray(13, 11, 4));
  for (int x = 0; x <= 13; ++x) EXPECT_EQ(ii.sum_at(x, 0), 0);
  for (int y = 0; y <= 11; ++y) EXPECT_EQ(ii.sum_at(0, y), 0);
  for (int y = 1; y <= 11; ++y)
    for (int x = 1; x <= 13; ++x) {
      EXPECT_GE(ii.sum_at(x, y), ii.sum_at(x - 1, y));
      EXPECT_GE(ii.sum_at(x, y), ii.sum_at(x, y - 1));
    }
}

TEST(HaarFeature, ZeroSumFeatureOnConstantImage) {
  IntegralImage ii(ImageU8(40, 40, 1, 90));
  Cascade c;
  for (double s : {1.0, 1.2, 1.44}) {
    auto win = make_window(ii, c, 3, 5, s);
    EXPECT_NEAR(eval_haar_feature(ii, halves_lr(24, 24), win), 0.0, 1e-12);
    EXPECT_NEAR(eval_haar_feature(ii, {{{2, 2, 20, 20, -1.0}, {7, 7, 10, 10, 4.0}}}, win), 0.0, 1e-12);
  }
}

TEST(HaarFeature, HandComputedTwoRectValue) {
  // Rows 1..4 | 5..8 | 9..12 | 13..16. Left half sums to 60, right to 76.
  std::vector<std::uint8_t> px(16);
  for (int i = 0; i < 16; ++i) px[i] = static_cast<std::uint8_t>(i + 1);
  IntegralImage ii(ImageU8(4, 4, 1, px));
  Cascade c;
  c.window_w = c.window_h = 4;
  auto win = make_window(ii, c, 0, 0, 1.0);
  // Normalization rect is the inner 2x2 {6,7,10,11}: area 4, mean 8.5, variance 4.25.
  EXPECT_EQ(win.norm_area, 4.0);
  EXPECT_NEAR(win.inv_std, 1.0 / std::sqrt(4.25), 1e-15);
  // (60 - 76) / 4 / sqrt(4.25)
  EXPECT_NEAR(eval_haar_feature(ii, halves_lr(4, 4), win), -1.9402850002906638, 1e-12);
}

TEST(HaarFeature, ScaleInvariantUnderPixelReplication) {
  auto small = random_gray(30, 30, 9);
  ImageU8 big(60, 60, 1);
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 60; ++x) big.at(x, y) = small.at(x / 2, y / 2);
  IntegralImage is(small), ib(big);
  Cascade c;
  const HaarFeature features[] = {halves_lr(24, 24), halves_tb(24, 24),
                                  {{{3, 5, 9, 6, -1.0}, {6, 5, 3, 6, 3.0}}},
                                  {{{1, 2, 18, 9, -1.0}, {1, 5, 18, 3, 3.0}}}};
  for (const auto& f : features)
    EXPECT_NEAR(eval_haar_feature(is, f, make_window(is, c, 2, 3, 1.0)),
                eval_haar_feature(ib, f, make_window(ib, c, 4, 6, 2.0)), 1e-6);
}

TEST(HaarFeature, FeatureOutsideWindowIsContractError) {
  IntegralImage ii(ImageU8(40, 40, 1, 1));
  Cascade c;
  auto win = make_window(ii, c, 0, 0, 1.0);
  EXPECT_THROW(eval_haar_feature(ii, {{{20, 0, 10, 5, 1.0}, {0, 0, 2, 2, -1.0}}}, win), ContractError);
  EXPECT_THROW(make_window(ii, c, 20, 0, 1.0), ContractError);
}

TEST(CascadeWindow, EmptyCascadeAccepts) {
  IntegralImage ii(random_gray(30, 30, 1));
  Cascade c;
  EXPECT_TRUE(eval_cascade_window(ii, c, make_window(ii, c, 1, 2, 1.0)));
}

TEST(CascadeWindow, UnreachableStageThresholdRejects) {
  Cascade c;
  c.stages.push_back({2.5, {{halves_lr(24, 24), 0.0, 1.0, 1.0}, {halves_tb(24, 24), 0.0, 1.0, 1.0}}});
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    IntegralImage ii(random_gray(48, 40, seed));
    for (int y = 0; y + 24 <= 40; y += 4)
      for (int x = 0; x + 24 <= 48; x += 4) EXPECT_FALSE(eval_cascade_window(ii, c, make_window(ii, c, x, y, 1.0)));
  }
}

TEST(CascadeWindow, HandEvaluatedTwoToneImage) {
  // Left 12 columns 0, right 12 columns 200. Over the inner 22x22 rect:
  // mean 100, std 100, area 484.
  // Stump 1 (left minus right): -200*288/484/100 = -1.19 < 0 -> left = 1.0.
  // Stump 2 (top minus bottom): 0, not < 0 -> right = -0.5. Stage sum 0.5.
  ImageU8 img(24, 24, 1);
  for (int y = 0; y < 24; ++y)
    for (int x = 12; x < 24; ++x) img.at(x, y) = 200;
  IntegralImage ii(img);
  Cascade c;
  c.stages.push_back({0.4, {{halves_lr(24, 24), 0.0, 1.0, -1.0}, {halves_tb(24, 24), 0.0, 2.0, -0.5}}});
  auto win = make_window(ii, c, 0, 0, 1.0);
  EXPECT_NEAR(win.inv_std, 0.01, 1e-15);
  EXPECT_NEAR(eval_haar_feature(ii, halves_lr(24, 24), win), -200.0 * 288 / 484 / 100, 1e-12);
  EXPECT_TRUE(eval_cascade_window(ii, c, win));
  c.stages[0].threshold = 0.6;
  EXPECT_FALSE(eval_cascade_window(ii, c, win));

  // Mirrored: stump 1 flips to right = -1.0, stage sum -1.5.
  ImageU8 mirror(24, 24, 1);
  for (int y = 0; y < 24; ++y)
    for (int x = 0; x < 12; ++x) mirror.at(x, y) = 200;
  IntegralImage im(mirror);
  c.stages[0].threshold = -1.6;
  EXPECT_TRUE(eval_cascade_window(im, c, make_window(im, c, 0, 0, 1.0)));
  c.stages[0].threshold = -1.4;
  EXPECT_FALSE(eval_cascade_window(im, c, make_window(im, c, 0, 0, 1.0)));
}

TEST(CascadeWindow, AppendingStagesNeverTurnsRejectIntoAccept) {
  const Cascade& ref = reference_cascade();
  const auto gray = to_gray(read_ppm(suite::fixture("astronaut.ppm")));
  IntegralImage ii(gray);
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const double s = std::pow(1.2, std::uniform_int_distribution<int>(0, 12)(rng));
    const int side = static_cast<int>(std::lround(24 * s));
    const int x = std::uniform_int_distribution<int>(0, gray.width() - side)(rng);
    const int y = std::uniform_int_distribution<int>(0, gray.height() - side)(rng);
    Cascade prefix;
    bool prev = true;
    for (std::size_t k = 0; k <= 6; ++k) {
      if (k > 0) prefix.stages.push_back(ref.stages[k - 1]);
      const bool now = eval_cascade_window(ii, prefix, make_window(ii, prefix, x, y, s));
      EXPECT_FALSE(now && !prev);
      prev = now;
    }
  }
}

TEST(DetectMultiscale, ImageSmallerThanWindowIsEmpty) {
  EXPECT_TRUE(detect_multiscale(ImageU8(20, 30, 1, 7), reference_cascade()).empty());
}

TEST(DetectMultiscale, FindsTheFixtureFace) {
  auto r = suite::run_detection_check();
  EXPECT_GE(r.raw, 1u);
  EXPECT_GE(r.best_raw_iou, 0.5);
  EXPECT_GE(r.best_merged_iou, 0.5);
}

TEST(DetectMultiscale, UniformImageHasNoDetections) {
  EXPECT_TRUE(detect_multiscale(ImageU8(320, 240, 1, 128), reference_cascade()).empty());
}

TEST(DetectMultiscale, IndependentOfThreadCount) {
  const auto gray = to_gray(read_ppm(suite::fixture("astronaut.ppm")));
  set_num_threads(1);
  auto a = detect_multiscale(gray, reference_cascade());
  set_num_threads(3);
  auto b = detect_multiscale(gray, reference_cascade());
  set_num_threads(1);
  EXPECT_EQ(a, b);
}

TEST(MergeDetections, SingleBox) {
  auto out = merge_detections({{10, 20, 30, 1}}, 1);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], (Detection{10, 20, 30, 1}));
}

TEST(MergeDetections, TwoIdenticalBoxes) {
  auto out = merge_detections({{10, 20, 30, 1}, {10, 20, 30, 1}}, 2);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0], (Detection{10, 20, 30, 2}));
}

TEST(MergeDetections, DisjointBoxesBelowMinNeighbors) {
  EXPECT_TRUE(merge_detections({{0, 0, 30, 1}, {100, 100, 30, 1}}, 2).empty());
}

TEST(MergeDetections, OutputInBoundsAndSorted) {
  std::mt19937_64 rng(12);
  const int W = 200, H = 150;
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Detection> raw;
    const int n = std::uniform_int_distribution<int>(0, 25)(rng);
    for (int i = 0; i < n; ++i) {
      const int side = std::uniform_int_distribution<int>(24, 100)(rng);
      raw.push_back({std::uniform_int_distribution<int>(0, W - side)(rng),
                     std::uniform_int_distribution<int>(0, H - side)(rng), side, 1});
    }
    const int mn = std::uniform_int_distribution<int>(1, 4)(rng);
    auto out = merge_detections(raw, mn);
    for (std::size_t i = 0; i < out.size(); ++i) {
      EXPECT_GE(out[i].x, 0);
      EXPECT_GE(out[i].y, 0);
      EXPECT_LE(out[i].x + out[i].side, W);
      EXPECT_LE(out[i].y + out[i].side, H);
      EXPECT_GE(out[i].side, 24);
      EXPECT_GE(out[i].neighbors, mn);
      if (i) {
        EXPECT_GE(out[i - 1].side, out[i].side);
      }
    }
  }
}

TEST(CropFace, DetectionCoveringCentreRegionIsIdentityCrop) {
  // A 40 px detection expands by 20% to exactly the central 48x48 region.
  std::mt19937_64 rng(2);
  ImageU8 frame(96, 96, 3);
  for (auto& v : frame.pixels()) v = static_cast<std::uint8_t>(rng() & 0xff);
  FaceTracker tr;
  CropSource src;
  auto crop = crop_face(frame, {{28, 28, 40, 3}}, tr, 48, &src);
  EXPECT_EQ(src, CropSource::detection);
  ASSERT_EQ(crop.width(), 48);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 48; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_FLOAT_EQ(crop.at(x, y, c), frame.at(x + 24, y + 24, c) / 255.0f);
}

TEST(CropFace, FallsBackToLastBox) {
  FaceTracker tr;
  const auto first = choose_crop_box(640, 480, {{100, 80, 50, 3}}, tr);
  CropSource src;
  const auto second = choose_crop_box(640, 480, {}, tr, &src);
  EXPECT_EQ(src, CropSource::tracker);
  EXPECT_EQ(first, second);
  EXPECT_EQ(first, (CropBox{95, 75, 60}));
}

TEST(CropFace, CentralSquareWithoutAnyDetection) {
  FaceTracker tr;
  CropSource src;
  EXPECT_EQ(choose_crop_box(1920, 1080, {}, tr, &src), (CropBox{420, 0, 1080}));
  EXPECT_EQ(src, CropSource::centre);
  EXPECT_FALSE(tr.last.has_value());
  auto crop = crop_face(ImageU8(1920, 1080, 3, 10), {}, tr, 48);
  EXPECT_EQ(crop.width(), 48);
  EXPECT_EQ(crop.height(), 48);
}

TEST(CropFace, AlwaysNByN) {
  std::mt19937_64 rng(4);
  FaceTracker tr;
  for (int trial = 0; trial < 100; ++trial) {
    const int W = std::uniform_int_distribution<int>(1, 120)(rng), H = std::uniform_int_distribution<int>(1, 120)(rng);
    std::vector<Detection> dets;
    if (rng() % 2) dets.push_back({int(rng() % 200) - 50, int(rng() % 200) - 50, int(rng() % 300) + 1, 1});
    const int n = 8 + int(rng() % 40);
    auto crop = crop_face(ImageU8(W, H, 3, 50), dets, tr, n);
    EXPECT_EQ(crop.width(), n);
    EXPECT_EQ(crop.height(), n);
    for (float v : crop.pixels()) EXPECT_NEAR(v, 50 / 255.0f, 1e-6);
  }
}

TEST(CropFace, EmptyFrameIsContractError) {
  FaceTracker tr;
  EXPECT_THROW(crop_face(ImageU8(), {}, tr, 48), ContractError);
}

TEST(LoadCascade, ReferenceStructureMatchesDeclaredCounts) {
  // Independent reading: declared per-stage maxWeakCount values, scanned as text.
  const std::string xml = slurp(suite::fixture("haarcascade_frontalface_default.xml"));
  const auto stages_at = xml.find("<stages>");
  ASSERT_NE(stages_at, std::string::npos);
  std::vector<int> declared;
  const std::regex re("<maxWeakCount>(\\d+)</maxWeakCount>");
  for (auto it = std::sregex_iterator(xml.begin() + stages_at, xml.end(), re); it != std::sregex_iterator(); ++it)
    declared.push_back(std::stoi((*it)[1]));
  std::smatch m;
  ASSERT_TRUE(std::regex_search(xml, m, std::regex("<stageNum>(\\d+)</stageNum>")));
  const auto& c = reference_cascade();
  ASSERT_EQ(c.stages.size(), static_cast<std::size_t>(std::stoi(m[1])));
  ASSERT_EQ(declared.size(), c.stages.size());
  for (std::size_t s = 0; s < declared.size(); ++s) EXPECT_EQ(c.stages[s].stumps.size(), std::size_t(declared[s]));
  EXPECT_EQ(c.window_w, 24);
  EXPECT_EQ(c.window_h, 24);
}

TEST(LoadCascade, BothXmlLayoutsGiveTheSameCascade) {
  EXPECT_EQ(parse_cascade(kLegacyXml), tiny_expected());
  EXPECT_EQ(parse_cascade(kNewXml), tiny_expected());
}

TEST(LoadCascade, NativeJsonRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "hcnf_detect_test";
  std::filesystem::create_directories(dir);
  save_cascade(reference_cascade(), dir / "ref.json");
  EXPECT_EQ(load_cascade(dir / "ref.json", CascadeFormat::native_json), reference_cascade());
  save_cascade(tiny_expected(), dir / "tiny.json");
  EXPECT_EQ(load_cascade(dir / "tiny.json"), tiny_expected());
}

TEST(LoadCascade, ConvertedCascadeDetectsIdentically) {
  const auto gray = to_gray(read_ppm(suite::fixture("astronaut.ppm")));
  const Cascade converted = parse_cascade(to_native_json(reference_cascade()));
  EXPECT_EQ(detect_faces(gray, converted), detect_faces(gray, reference_cascade()));
}

TEST(LoadCascade, TruncatedXmlNamesTheLine) {
  const std::string xml = slurp(suite::fixture("haarcascade_frontalface_default.xml"));
  try {
    parse_cascade(xml.substr(0, xml.size() / 2), CascadeFormat::opencv_xml, "half.xml");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_TRUE(std::regex_match(e.where(), std::regex("half\\.xml:\\d+"))) << e.where();
  }
}

TEST(LoadCascade, TruncatedJsonNamesTheOffset) {
  const std::string js = to_native_json(tiny_expected());
  try {
    parse_cascade(js.substr(0, 60));
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(e.where().find("byte"), std::string::npos) << e.where();
  }
}

TEST(LoadCascade, RejectsNonStumpTiltedAndOutOfWindow) {
  std::string deep = kNewXml;
  deep.replace(deep.find("0 -1 1 0.25"), 11, "1 -1 1 0.25 0 -2 0 0.5");
  EXPECT_THROW(parse_cascade(deep), ParseError);

  std::string tilted = kLegacyXml;
  tilted.replace(tilted.find("<tilted>0</tilted>"), 18, "<tilted>1</tilted>");
  EXPECT_THROW(parse_cascade(tilted), ParseError);

  std::string outside = kNewXml;
  outside.replace(outside.find("7 7 10 10 4."), 12, "17 7 10 10 4.");
  try {
    parse_cascade(outside);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("outside"), std::string::npos) << e.what();
  }

  std::string two_nodes = kLegacyXml;
  two_nodes.replace(two_nodes.find("<right_val>2.</right_val>"), 25, "<right_node>1</right_node>");
  EXPECT_THROW(parse_cascade(two_nodes), ParseError);
}

TEST(LoadCascade, ParsingIsTotal) {
  std::mt19937_64 rng(77);
  const std::string seeds[] = {kLegacyXml, kNewXml, to_native_json(tiny_expected())};
  int parsed = 0, rejected = 0;
  for (const auto& seed : seeds)
    for (int trial = 0; trial < 400; ++trial) {
      std::string s = seed;
      switch (trial % 3) {
        case 0:
          s.resize(rng() % s.size());
          break;
        case 1:
          for (int k = 0; k < 3; ++k) s[rng() % s.size()] = static_cast<char>(rng() & 0xff);
          break;
        default:
          s[rng() % s.size()] = "0123456789-.e<>{}[]\" "[rng() % 21];
      }
      try {
        Cascade c = parse_cascade(s);
        EXPECT_NO_THROW(c.validate());
        ++parsed;
      } catch (const ParseError&) {
        ++rejected;
      } catch (const std::exception& e) {
        ADD_FAILURE() << "non-diagnostic exception: " << e.what();
      }
    }
  EXPECT_GT(rejected, 0);
  EXPECT_GT(parsed, 0);
}

TEST(LoadCascade, MissingFileIsIoError) {
  EXPECT_THROW(load_cascade("/nonexistent/cascade.xml"), IoError);
}

#include <gtest/gtest.h>

#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hcnf/nets/checkpoint.hpp"
#include "suites/nets_suite.hpp"

using namespace hcnf;
using namespace hcnf::nets;

namespace {

Tensor<float> random_frames(std::size_t b, int n, std::uint64_t seed, float lo = 0, float hi = 1) {
  Tensor<float> t(Shape{b, 3, std::size_t(n), std::size_t(n)});
  Rng rng(seed);
  uniform_fill(t, lo, hi, rng);
  return t;
}

ArchConfig tiny_arch() {
  ArchConfig a;
  a.width = 4;
  a.input_size = 12;
  return a;
}

std::filesystem::path temp_dir() {
  auto d = std::filesystem::temp_directory_path() / "hcnf_nets_test";
  std::filesystem::create_directories(d);
  return d;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void spit(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary | std::ios::trunc) << bytes;
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t reference_crc32(const std::string& s, std::size_t begin, std::size_t end) {
  std::uint32_t crc = 0xffffffffu;
  for (std::size_t i = begin; i < end; ++i) {
    crc ^= static_cast<std::uint8_t>(s[i]);
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xedb88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

double row_sum(const Tensor<float>& probs, std::size_t r) {
  double s = 0;
  for (std::size_t j = 0; j < probs.dim(1); ++j) s += probs[r * probs.dim(1) + j];
  return s;
}

template <typename T>
std::vector<T> values(const Tensor<T>& t) {
  return std::vector<T>(t.data().begin(), t.data().end());
}

}  // namespace

TEST(RgbCnn, EmbeddingAndHeadWidths) {
  Rng rng(1);
  RgbCnn<float> net(16, rng);
  Tape<float> tape(false);
  auto out = rgb_forward(tape, net, random_frames(2, 48, 3), Mode::eval);
  EXPECT_EQ(out.embedding.shape(), (Shape{2, 32}));
  EXPECT_EQ(out.logits.shape(), (Shape{2, 8}));
  auto p = ops::softmax(out.logits);
  for (std::size_t r = 0; r < 2; ++r) EXPECT_NEAR(row_sum(p, r), 1.0, 1e-6);
}

TEST(RgbCnn, InceptionWidthsSumToStageWidth) {
  EXPECT_EQ(InceptionWidths::for_output(16).total(), 64);
  EXPECT_EQ(InceptionWidths::for_output(32).total(), 128);
  EXPECT_EQ(InceptionWidths::for_output(4).total(), 16);
  Rng rng(1);
  InceptionBlock<float> block(16, InceptionWidths::for_output(16), rng);
  Tape<float> tape(false);
  EXPECT_EQ(block.forward(tape, Tensor<float>(Shape{1, 16, 24, 24}, 0.5f), Mode::eval).shape(),
            (Shape{1, 64, 24, 24}));
}

TEST(RgbCnn, EvalModeIsBitIdentical) {
  Rng rng(2);
  RgbCnn<float> net(8, rng);
  const auto x = random_frames(3, 16, 4);
  Tape<float> tape(false);
  auto a = rgb_forward(tape, net, x, Mode::eval);
  auto b = rgb_forward(tape, net, x, Mode::eval);
  EXPECT_EQ(values(a.embedding), values(b.embedding));
  EXPECT_EQ(values(a.logits), values(b.logits));
}

TEST(RgbCnn, WrongChannelCountIsContractError) {
  Rng rng(2);
  RgbCnn<float> rgb(4, rng);
  FlowCnn<float> flow(4, rng);
  Tape<float> tape(false);
  EXPECT_THROW(rgb_forward(tape, rgb, Tensor<float>(Shape{1, 1, 12, 12}), Mode::eval), ContractError);
  EXPECT_THROW(flow_forward(tape, flow, Tensor<float>(Shape{1, 4, 12, 12}), Mode::eval), ContractError);
  EXPECT_THROW(rgb_forward(tape, rgb, Tensor<float>(Shape{3, 12, 12}), Mode::eval), ContractError);
}

TEST(FlowCnn, EmbeddingWidth) {
  Rng rng(1);
  FlowCnn<float> net(16, rng);
  Tape<float> tape(false);
  auto out = flow_forward(tape, net, random_frames(1, 48, 5), Mode::eval);
  EXPECT_EQ(out.embedding.shape(), (Shape{1, 32}));
  EXPECT_EQ(out.logits.shape(), (Shape{1, 8}));
}

TEST(FlowCnn, ZeroFlowInputIsFinite) {
  Rng rng(1);
  FlowCnn<float> net(16, rng);
  // H = 0, S = 1, V = 0 everywhere.
  Tensor<float> hsv(Shape{4, 3, 48, 48});
  for (std::size_t b = 0; b < 4; ++b)
    std::fill_n(hsv.ptr() + (b * 3 + 1) * 48 * 48, 48 * 48, 1.0f);
  for (Mode mode : {Mode::eval, Mode::train}) {
    Tape<float> tape(false);
    auto out = flow_forward(tape, net, hsv, mode);
    EXPECT_TRUE(out.embedding.all_finite());
    EXPECT_TRUE(out.logits.all_finite());
  }
}

TEST(FlowCnn, ZeroResidualBranchPassesShortcutThrough) {
  Rng rng(3);
  ResidualBlock<float> block(8, 8, 1, rng);
  ASSERT_FALSE(block.projected);
  for (auto& v : block.conv1.conv.weight.value.data()) v = 0;
  for (auto& v : block.conv2.weight.value.data()) v = 0;
  Tensor<float> in(Shape{2, 8, 6, 6});
  Rng fill(9);
  uniform_fill(in, 0.0, 2.0, fill);
  for (Mode mode : {Mode::eval, Mode::train}) {
    Tape<float> tape(false);
    EXPECT_EQ(values(block.forward(tape, in, mode)), values(in));
  }
}

TEST(FlowCnn, ResidualOutputMatchesShortcutShape) {
  Rng rng(3);
  for (auto [cin, cout, stride] : {std::tuple{4, 4, 1}, std::tuple{4, 8, 2}, std::tuple{8, 16, 2}}) {
    ResidualBlock<float> block(cin, cout, stride, rng);
    EXPECT_EQ(block.projected, cin != cout || stride != 1);
    for (std::size_t side : {6u, 7u, 12u}) {
      Tape<float> tape(false);
      Tensor<float> x(Shape{1, std::size_t(cin), side, side}, 0.25f);
      const std::size_t out_side = (side + stride - 1) / stride;
      EXPECT_EQ(block.forward(tape, x, Mode::eval).shape(), (Shape{1, std::size_t(cout), out_side, out_side}));
    }
  }
}

TEST(LstmStack, StructureAndInitialisation) {
  Rng rng(4);
  LstmStack<float> stack(rng);
  ASSERT_EQ(stack.layers.size(), 3u);
  for (const auto& l : stack.layers) {
    EXPECT_EQ(l.hidden(), 64);
    EXPECT_EQ(l.w_ih.value.dim(0), 64u);
    for (int j = 0; j < 256; ++j) EXPECT_EQ(l.bias.value[j], (j >= 64 && j < 128) ? 1.0f : 0.0f) << j;
  }
  EXPECT_EQ(stack.classifier.in_features(), 64);
  EXPECT_EQ(stack.classifier.out_features(), 8);
  auto s = LstmState<float>::zeros(1);
  EXPECT_EQ(s.h.size(), 3u);
  EXPECT_EQ(s.h[0].shape(), (Shape{1, 64}));
}

TEST(LstmCell, ZeroEverythingGivesZeroOutput) {
  // i = o = sigmoid(0), f = sigmoid(1), g = tanh(0) = 0, so c' = f*0 + i*0 = 0
  // and h' = o * tanh(0) = 0.
  Rng rng(1);
  LstmLayer<double> layer(3, 2, rng);
  for (auto* p : {&layer.w_ih, &layer.w_hh})
    for (auto& v : p->value.data()) v = 0;
  Tape<double> tape(false);
  Tensor<double> zero_x(Shape{1, 3}), zero_h(Shape{1, 2});
  auto r = lstm_cell(tape, layer, zero_x, zero_h, zero_h);
  EXPECT_EQ(values(r.h), (std::vector<double>{0, 0}));
  EXPECT_EQ(values(r.c), (std::vector<double>{0, 0}));
}

TEST(LstmCell, HandEvaluatedScalarCase) {
  Rng rng(1);
  LstmLayer<double> layer(1, 1, rng);
  layer.w_ih.value = Tensor<double>(Shape{1, 4}, {0.5, -0.25, 1.5, 2.0});
  layer.w_hh.value = Tensor<double>(Shape{1, 4}, {-1.0, 0.75, 0.5, -0.5});
  layer.bias.value = Tensor<double>(Shape{4}, {0.1, 1.0, -0.2, 0.3});
  const double x = 0.8, h = -0.4, c = 0.6;
  Tape<double> tape(false);
  auto r = lstm_cell(tape, layer, Tensor<double>(Shape{1, 1}, {x}), Tensor<double>(Shape{1, 1}, {h}),
                     Tensor<double>(Shape{1, 1}, {c}));
  auto sig = [](double v) { return 1 / (1 + std::exp(-v)); };
  const double i = sig(0.5 * x - 1.0 * h + 0.1), f = sig(-0.25 * x + 0.75 * h + 1.0);
  const double g = std::tanh(1.5 * x + 0.5 * h - 0.2), o = sig(2.0 * x - 0.5 * h + 0.3);
  const double c2 = f * c + i * g;
  EXPECT_NEAR(r.c[0], c2, 1e-15);
  EXPECT_NEAR(r.h[0], o * std::tanh(c2), 1e-15);
}

TEST(LstmCell, WidthMismatchIsContractError) {
  Rng rng(1);
  LstmStack<float> stack(rng);
  Tape<float> tape(false);
  EXPECT_THROW(lstm_step(tape, stack, Tensor<float>(Shape{1, 63}), LstmState<float>::zeros(1)), ContractError);
  EXPECT_THROW(lstm_step(tape, stack, Tensor<float>(Shape{2, 64}), LstmState<float>::zeros(1)), ContractError);
  EXPECT_THROW(lstm_step(tape, stack, Tensor<float>(Shape{1, 64}), LstmState<float>::zeros(1, 2)), ContractError);
}

TEST(LstmStack, HiddenBoundedAndCellGrowsAtMostLinearly) {
  Rng rng(5);
  LstmStack<float> stack(rng);
  for (auto& l : stack.layers)
    for (auto& v : l.w_ih.value.data()) v *= 20;  // saturate the gates
  Tape<float> tape(false);
  auto state = LstmState<float>::zeros(2);
  for (int t = 1; t <= 150; ++t) {
    Tensor<float> x(Shape{2, 64});
    uniform_fill(x, -5.0, 5.0, rng);
    state = lstm_step(tape, stack, x, state).state;
    for (std::size_t l = 0; l < 3; ++l) {
      for (float v : state.h[l].data()) ASSERT_LE(std::abs(v), 1.0f);
      for (float v : state.c[l].data()) ASSERT_LE(std::abs(v), float(t) + 1e-4f);
    }
  }
}

TEST(LstmStack, ChunkedSequenceEqualsWhole) {
  Rng rng(6);
  LstmStack<float> stack(rng);
  Tensor<float> seq(Shape{20, 64});
  uniform_fill(seq, -1.0, 1.0, rng);
  Tape<float> tape(false);
  auto whole = lstm_sequence(tape, stack, seq, LstmState<float>::zeros(1));
  std::vector<float> first(seq.data().begin(), seq.data().begin() + 7 * 64);
  std::vector<float> second(seq.data().begin() + 7 * 64, seq.data().end());
  auto a = lstm_sequence(tape, stack, Tensor<float>(Shape{7, 64}, first), LstmState<float>::zeros(1));
  auto b = lstm_sequence(tape, stack, Tensor<float>(Shape{13, 64}, second), a.state);
  ASSERT_EQ(a.outputs.size() + b.outputs.size(), whole.outputs.size());
  for (std::size_t t = 0; t < 7; ++t) EXPECT_EQ(values(a.outputs[t]), values(whole.outputs[t]));
  for (std::size_t t = 0; t < 13; ++t) EXPECT_EQ(values(b.outputs[t]), values(whole.outputs[t + 7]));
  for (std::size_t l = 0; l < 3; ++l) {
    EXPECT_EQ(values(b.state.h[l]), values(whole.state.h[l]));
    EXPECT_EQ(values(b.state.c[l]), values(whole.state.c[l]));
  }
}

TEST(FusionModel, DefaultContractWidths) {
  FusionModel<float> model(ArchConfig{}, 7);
  Tape<float> tape(false);
  const auto rgb = random_frames(30, 48, 1), hsv = random_frames(30, 48, 2);
  auto features = fusion_features(tape, model, rgb, hsv, Mode::eval);
  EXPECT_EQ(features.shape(), (Shape{30, 64}));
  auto out = fusion_forward(tape, model, rgb, hsv, LstmState<float>::zeros(1), Mode::eval);
  ASSERT_EQ(out.probs.shape(), (Shape{1, 8}));
  EXPECT_NEAR(row_sum(out.probs, 0), 1.0, 1e-6);
  for (float p : out.probs.data()) EXPECT_GE(p, 0.0f);
}

TEST(FusionModel, GroupLengthOtherThanThirtyIsContractError) {
  FusionModel<float> model(tiny_arch(), 7);
  Tape<float> tape(false);
  for (std::size_t g : {29u, 31u, 1u})
    EXPECT_THROW(fusion_forward(tape, model, random_frames(g, 12, 1), random_frames(g, 12, 2),
                                LstmState<float>::zeros(1), Mode::eval),
                 ContractError);
  EXPECT_THROW(fusion_forward(tape, model, random_frames(30, 16, 1), random_frames(30, 16, 2),
                              LstmState<float>::zeros(1), Mode::eval),
               ContractError);
}

TEST(FusionModel, DifferentGroupsGiveDifferentDistributions) {
  FusionModel<float> model(tiny_arch(), 8);
  Tape<float> tape(false);
  auto a = fusion_forward(tape, model, random_frames(30, 12, 1), random_frames(30, 12, 2),
                          LstmState<float>::zeros(1), Mode::eval);
  auto b = fusion_forward(tape, model, random_frames(30, 12, 3), random_frames(30, 12, 4),
                          LstmState<float>::zeros(1), Mode::eval);
  double diff = 0;
  for (int j = 0; j < 8; ++j) diff += std::abs(a.probs[j] - b.probs[j]);
  EXPECT_GT(diff, 1e-4);
}

TEST(FusionModel, WindowChainingEqualsOnePass) {
  FusionModel<float> model(tiny_arch(), 9);
  Tape<float> tape(false);
  std::vector<Tensor<float>> feats;
  std::vector<std::vector<float>> chained;
  auto state = LstmState<float>::zeros(1);
  for (int k = 0; k < 3; ++k) {
    const auto rgb = random_frames(30, 12, 10 + k), hsv = random_frames(30, 12, 20 + k);
    feats.push_back(fusion_features(tape, model, rgb, hsv, Mode::eval));
    auto out = fusion_forward(tape, model, rgb, hsv, state, Mode::eval);
    chained.push_back(values(out.probs));
    state = out.state;
  }
  std::vector<float> all;
  for (auto& f : feats) all.insert(all.end(), f.data().begin(), f.data().end());
  auto pass = lstm_sequence(tape, model.lstm, Tensor<float>(Shape{90, 64}, all), LstmState<float>::zeros(1));
  for (int k = 0; k < 3; ++k) {
    auto probs = ops::softmax(model.lstm.classifier(tape, pass.outputs[30 * k + 29]));
    for (int j = 0; j < 8; ++j) EXPECT_NEAR(probs[j], chained[k][j], 1e-5);
  }
}

TEST(FusionModel, SwapBackbonesExchangesStreams) {
  auto arch = tiny_arch();
  arch.swap_backbones = true;
  FusionModel<float> model(arch, 10);
  const auto rgb = random_frames(30, 12, 1), hsv = random_frames(30, 12, 2);
  Tape<float> tape(false);
  auto f = fusion_features(tape, model, rgb, hsv, Mode::eval);
  auto a = flow_forward(tape, model.flow, rgb, Mode::eval).embedding;
  auto b = rgb_forward(tape, model.rgb, hsv, Mode::eval).embedding;
  for (std::size_t r = 0; r < 30; ++r)
    for (std::size_t j = 0; j < 32; ++j) {
      EXPECT_EQ(f[r * 64 + j], a[r * 32 + j]);
      EXPECT_EQ(f[r * 64 + 32 + j], b[r * 32 + j]);
    }
}

TEST(FusionModel, SameSeedSameParametersAndCloneIsIndependent) {
  FusionModel<float> a(tiny_arch(), 11), b(tiny_arch(), 11), c(tiny_arch(), 12);
  auto sa = a.state(), sb = b.state(), sc = c.state();
  ASSERT_EQ(sa.size(), sb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    EXPECT_EQ(sa[i].name, sb[i].name);
    EXPECT_EQ(values(sa[i].tensor), values(sb[i].tensor));
    any_diff = any_diff || values(sa[i].tensor) != values(sc[i].tensor);
  }
  EXPECT_TRUE(any_diff);
  auto copy = a.clone();
  copy.rgb.head.bias.value[0] += 1.0f;
  EXPECT_NE(copy.rgb.head.bias.value[0], a.rgb.head.bias.value[0]);
}

TEST(FusionModel, LabelPermutationLeavesLossUnchanged) {
  Rng rng(12);
  RgbCnn<double> net(4, rng);
  Tensor<double> x(Shape{5, 3, 12, 12});
  uniform_fill(x, 0.0, 1.0, rng);
  const int labels[5] = {0, 3, 7, 3, 5};
  const int perm[8] = {5, 2, 7, 0, 1, 6, 4, 3};
  auto loss_for = [&](const int* p) {
    Tensor<double> target(Shape{5, 8});
    for (int r = 0; r < 5; ++r) target[r * 8 + p[labels[r]]] = 1;
    Tape<double> tape(false);
    return ops::softmax_cross_entropy(tape, rgb_forward(tape, net, x, Mode::eval).logits, target).loss.item();
  };
  const int identity[8] = {0, 1, 2, 3, 4, 5, 6, 7};
  const double base = loss_for(identity);
  // Move head column j to perm[j].
  auto w = values(net.head.weight.value);
  auto b = values(net.head.bias.value);
  for (int r = 0; r < 32; ++r)
    for (int j = 0; j < 8; ++j) net.head.weight.value[r * 8 + perm[j]] = w[r * 8 + j];
  for (int j = 0; j < 8; ++j) net.head.bias.value[perm[j]] = b[j];
  EXPECT_NEAR(loss_for(perm), base, 1e-12);
}

TEST(WindowPrediction, ArgmaxTiesGoToLowestIndex) {
  EXPECT_EQ(argmax(std::vector<double>{0.1, 0.3, 0.3, 0.3}), 1);
  EXPECT_EQ(argmax(std::vector<double>(8, 0.125)), 0);
  std::vector<double> p = {0.05, 0.05, 0.1, 0.3, 0.1, 0.3, 0.05, 0.05};
  auto w = make_window_prediction(2, 60, 89, p);
  EXPECT_EQ(w.label, Emotion::happiness);
  EXPECT_EQ(w.window_index, 2);
  EXPECT_EQ(w.end_frame, 89);
  EXPECT_THROW(make_window_prediction(0, 0, 1, std::vector<double>(7, 0.1)), ContractError);
}

TEST(WindowPrediction, UniformLogitScalingKeepsLabel) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    auto logits = suite::random_tensor({1, 8}, rng, -4, 4);
    const double a = std::uniform_real_distribution<double>(0.05, 20)(rng);
    auto scaled = logits.clone();
    for (auto& v : scaled.data()) v *= a;
    auto p1 = values(ops::softmax(logits)), p2 = values(ops::softmax(scaled));
    EXPECT_EQ(make_window_prediction(0, 0, 29, p1).label, make_window_prediction(0, 0, 29, p2).label);
  }
}

TEST(NetsGradients, LstmCellAndStack) {
  for (const auto& c : suite::lstm_gradient_checks(1e-5, 21)) {
    EXPECT_TRUE(c.report.passed) << c.name << ": " << c.report.worst;
    EXPECT_LT(c.report.max_rel_error, 1e-5) << c.name;
  }
}

TEST(NetsGradients, InceptionAndResidualBlocks) {
  for (const auto& c : suite::block_gradient_checks(1e-5, 22)) {
    EXPECT_TRUE(c.report.passed) << c.name << ": " << c.report.worst;
    EXPECT_LT(c.report.max_rel_error, 1e-5) << c.name;
  }
}

TEST(NetsGradients, TinyFusionModel) {
  auto c = suite::tiny_fusion_check(1e-4, 23, 3);
  EXPECT_TRUE(c.report.passed) << c.report.worst;
  EXPECT_LT(c.report.max_rel_error, 1e-4);
}

TEST(Checkpoint, HandBuiltLayout) {
  const std::string bytes = encode_checkpoint({{"a", {2}, {1.0f, -2.0f}}});
  std::string expect("HCNF\x01\0\0\0\x01\0\0\0", 12);
  expect += std::string("\x01\0a\x01\x02\0\0\0", 8);
  expect += std::string("\0\0\x80\x3f\0\0\0\xc0", 8);
  const std::uint32_t crc = reference_crc32(expect, 12, expect.size());
  for (int i = 0; i < 4; ++i) expect.push_back(static_cast<char>(crc >> (8 * i)));
  EXPECT_EQ(bytes, expect);
  auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].name, "a");
  EXPECT_EQ(back[0].shape, (Shape{2}));
  EXPECT_EQ(back[0].values, (std::vector<float>{1.0f, -2.0f}));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const auto dir = temp_dir();
  FusionModel<float> model(tiny_arch(), 14);
  // Move batchnorm running statistics off their initial values.
  Tape<float> tape(false);
  fusion_forward(tape, model, random_frames(30, 12, 1), random_frames(30, 12, 2), LstmState<float>::zeros(1),
                 Mode::train);
  checkpoint_save(model, dir / "a.hcnf");
  auto loaded = checkpoint_load(dir / "a.hcnf");
  checkpoint_save(loaded, dir / "b.hcnf");
  EXPECT_EQ(slurp(dir / "a.hcnf"), slurp(dir / "b.hcnf"));
  EXPECT_EQ(loaded.arch.width, 4);
  EXPECT_EQ(loaded.arch.input_size, 12);
  const auto rgb = random_frames(30, 12, 3), hsv = random_frames(30, 12, 4);
  auto p1 = fusion_forward(tape, model, rgb, hsv, LstmState<float>::zeros(1), Mode::eval).probs;
  auto p2 = fusion_forward(tape, loaded, rgb, hsv, LstmState<float>::zeros(1), Mode::eval).probs;
  EXPECT_EQ(values(p1), values(p2));
  const auto header = slurp(dir / "a.hcnf").substr(0, 12);
  EXPECT_EQ(header.substr(0, 4), "HCNF");
  const auto st = model.state();
  EXPECT_EQ(static_cast<std::uint8_t>(header[8]), (st.size() + 1) & 0xff);
}

TEST(Checkpoint, CorruptionIsReported) {
  const auto dir = temp_dir();
  FusionModel<float> model(tiny_arch(), 15);
  checkpoint_save(model, dir / "good.hcnf");
  const std::string good = slurp(dir / "good.hcnf");
  auto expect_error = [&](const std::string& bytes, const std::string& needle) {
    spit(dir / "bad.hcnf", bytes);
    try {
      checkpoint_load(dir / "bad.hcnf");
      ADD_FAILURE() << "expected failure mentioning " << needle;
    } catch (const ParseError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  std::string magic = good;
  magic[0] = 'X';
  expect_error(magic, "\"HCNF\"");
  std::string version = good;
  version[4] = 2;
  expect_error(version, "version 2");
  expect_error(good.substr(0, good.size() / 2), "truncated");
  expect_error(good.substr(0, 10), "truncated");
  std::string flipped = good;
  flipped[good.size() / 2] ^= 0x10;
  expect_error(flipped, "CRC");
  EXPECT_THROW(checkpoint_load(dir / "does_not_exist.hcnf"), IoError);
}

TEST(Checkpoint, ShapeTableMismatchNamesTheTensor) {
  FusionModel<float> small(tiny_arch(), 16);
  auto arch8 = tiny_arch();
  arch8.width = 8;
  FusionModel<float> wide(arch8, 16);
  const auto dir = temp_dir();
  checkpoint_save(wide, dir / "wide.hcnf");
  try {
    checkpoint_load_into(small, dir / "wide.hcnf");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("'rgb.stem.conv.weight'"), std::string::npos) << e.what();
  }

  auto tensors = decode_checkpoint(slurp(dir / "wide.hcnf"));
  FusionModel<float> target(arch8, 1);
  auto missing = tensors;
  missing.erase(missing.begin() + 3);
  try {
    checkpoint_load_into(target, missing, "m");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("'" + tensors[3].name + "' missing"), std::string::npos) << e.what();
  }
  auto extra = tensors;
  extra.push_back({"rgb.ghost", {1}, {0.0f}});
  try {
    checkpoint_load_into(target, extra, "m");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("'rgb.ghost'"), std::string::npos) << e.what();
  }
  EXPECT_NO_THROW(checkpoint_load_into(target, tensors, "m"));
}

TEST(Checkpoint, DecodingIsTotal) {
  FusionModel<float> model(tiny_arch(), 17);
  const auto dir = temp_dir();
  checkpoint_save(model, dir / "f.hcnf");
  const std::string good = slurp(dir / "f.hcnf");
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 300; ++trial) {
    std::string s = good;
    if (trial % 2) {
      s.resize(rng() % s.size());
    } else {
      for (int k = 0; k < 2; ++k) s[rng() % std::min<std::size_t>(s.size(), 400)] = static_cast<char>(rng());
    }
    try {
      decode_checkpoint(s);
    } catch (const ParseError&) {
    } catch (const std::exception& e) {
      ADD_FAILURE() << "non-diagnostic exception: " << e.what();
    }
  }
}

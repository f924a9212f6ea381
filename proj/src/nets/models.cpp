#include "hcnf/nets/models.hpp"

#include <algorithm>
#include <cassert>

namespace hcnf::nets {

void ArchConfig::validate() const {
  HCNF_REQUIRE(width >= 4 && width % 4 == 0, "arch: width must be a positive multiple of 4, got " + std::to_string(width));
  HCNF_REQUIRE(input_size >= 4, "arch: input_size must be at least 4");
  HCNF_REQUIRE(group_size >= 1, "arch: group_size must be positive");
}

namespace {

template <typename T>
void require_frames(const Tensor<T>& x, const char* who) {
  HCNF_REQUIRE(x.defined() && x.rank() == 4, std::string(who) + ": expected [B,3,n,n], got " +
                                                 (x.defined() ? shape_str(x.shape()) : std::string("undefined")));
  HCNF_REQUIRE(x.dim(1) == 3, std::string(who) + ": expected 3 channels, got " + std::to_string(x.dim(1)));
}

#ifndef NDEBUG
template <typename T>
void debug_finite(const CnnOutput<T>& o) {
  assert(o.embedding.all_finite() && o.logits.all_finite());
}
#else
template <typename T>
void debug_finite(const CnnOutput<T>&) {}
#endif

}  // namespace

template <typename T>
InceptionBlock<T>::InceptionBlock(int cin, const InceptionWidths& w, Rng& rng)
    : b1(cin, w.b1, 1, 1, rng),
      b3_reduce(cin, w.b3_reduce, 1, 1, rng),
      b3(w.b3_reduce, w.b3, 3, 1, rng),
      b5_reduce(cin, w.b5_reduce, 1, 1, rng),
      b5(w.b5_reduce, w.b5, 5, 1, rng),
      pool_proj(cin, w.pool_proj, 1, 1, rng) {}

template <typename T>
Tensor<T> InceptionBlock<T>::forward(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
  auto p1 = b1(tape, x, mode);
  auto p3 = b3(tape, b3_reduce(tape, x, mode), mode);
  auto p5 = b5(tape, b5_reduce(tape, x, mode), mode);
  auto pp = pool_proj(tape, ops::max_pool2d(tape, x, 3, 1, 1), mode);
  return ops::concat_channels(tape, std::vector<Tensor<T>>{p1, p3, p5, pp});
}

template <typename T>
void InceptionBlock<T>::collect(StateDict<T>& out, const std::string& prefix) {
  b1.collect(out, prefix + ".b1");
  b3_reduce.collect(out, prefix + ".b3_reduce");
  b3.collect(out, prefix + ".b3");
  b5_reduce.collect(out, prefix + ".b5_reduce");
  b5.collect(out, prefix + ".b5");
  pool_proj.collect(out, prefix + ".pool_proj");
}

template <typename T>
ResidualBlock<T>::ResidualBlock(int cin, int cout, int stride, Rng& rng)
    : conv1(cin, cout, 3, stride, rng), conv2(cout, cout, 3, 1, 1, rng), bn2(cout), projected(cin != cout || stride != 1) {
  if (projected) {
    proj = Conv2d<T>(cin, cout, 1, stride, 0, rng);
    proj_bn = BatchNorm2d<T>(cout);
  }
}

template <typename T>
Tensor<T> ResidualBlock<T>::forward(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
  auto r = bn2(tape, conv2(tape, conv1(tape, x, mode)), mode);
  auto s = projected ? proj_bn(tape, proj(tape, x), mode) : x;
  HCNF_REQUIRE(r.shape() == s.shape(), "residual branch " + shape_str(r.shape()) + " does not match shortcut " +
                                           shape_str(s.shape()));
  return ops::relu(tape, ops::add(tape, r, s));
}

template <typename T>
void ResidualBlock<T>::collect(StateDict<T>& out, const std::string& prefix) {
  conv1.collect(out, prefix + ".conv1");
  conv2.collect(out, prefix + ".conv2");
  bn2.collect(out, prefix + ".bn2");
  if (projected) {
    proj.collect(out, prefix + ".proj");
    proj_bn.collect(out, prefix + ".proj_bn");
  }
}

template <typename T>
RgbCnn<T>::RgbCnn(int width_, Rng& rng) : width(width_), stem(3, width_, 3, 1, rng) {
  const auto w1 = InceptionWidths::for_output(width_);
  const auto w2 = InceptionWidths::for_output(2 * width_);
  blocks.emplace_back(width_, w1, rng);
  blocks.emplace_back(w1.total(), w1, rng);
  blocks.emplace_back(w1.total(), w2, rng);
  blocks.emplace_back(w2.total(), w2, rng);
  embed = Linear<T>(w2.total(), kEmbeddingWidth, rng);
  head = Linear<T>(kEmbeddingWidth, kNumEmotions, rng);
}

template <typename T>
void RgbCnn<T>::collect(StateDict<T>& out, const std::string& prefix) {
  stem.collect(out, prefix + ".stem");
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".inception" + std::to_string(i));
  embed.collect(out, prefix + ".embed");
  head.collect(out, prefix + ".head");
}

template <typename T>
FlowCnn<T>::FlowCnn(int width_, Rng& rng) : width(width_), stem(3, width_, 3, 1, rng) {
  int cin = width_;
  for (int stage = 0; stage < 3; ++stage) {
    const int cout = width_ << stage;
    blocks.emplace_back(cin, cout, stage == 0 ? 1 : 2, rng);
    blocks.emplace_back(cout, cout, 1, rng);
    cin = cout;
  }
  embed = Linear<T>(cin, kEmbeddingWidth, rng);
  head = Linear<T>(kEmbeddingWidth, kNumEmotions, rng);
}

template <typename T>
void FlowCnn<T>::collect(StateDict<T>& out, const std::string& prefix) {
  stem.collect(out, prefix + ".stem");
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect(out, prefix + ".res" + std::to_string(i / 2) + "_" + std::to_string(i % 2));
  embed.collect(out, prefix + ".embed");
  head.collect(out, prefix + ".head");
}

template <typename T>
CnnOutput<T> rgb_forward(Tape<T>& tape, RgbCnn<T>& model, const Tensor<T>& x, Mode mode) {
  require_frames(x, "rgb_forward");
  auto h = ops::max_pool2d(tape, model.stem(tape, x, mode), 2, 2);
  h = model.blocks[0].forward(tape, h, mode);
  h = model.blocks[1].forward(tape, h, mode);
  h = ops::max_pool2d(tape, h, 2, 2);
  h = model.blocks[2].forward(tape, h, mode);
  h = model.blocks[3].forward(tape, h, mode);
  CnnOutput<T> out;
  out.embedding = ops::relu(tape, model.embed(tape, ops::global_avg_pool(tape, h)));
  out.logits = model.head(tape, out.embedding);
  debug_finite(out);
  return out;
}

template <typename T>
CnnOutput<T> flow_forward(Tape<T>& tape, FlowCnn<T>& model, const Tensor<T>& x, Mode mode) {
  require_frames(x, "flow_forward");
  auto h = model.stem(tape, x, mode);
  for (auto& b : model.blocks) h = b.forward(tape, h, mode);
  CnnOutput<T> out;
  out.embedding = ops::relu(tape, model.embed(tape, ops::global_avg_pool(tape, h)));
  out.logits = model.head(tape, out.embedding);
  debug_finite(out);
  return out;
}

template <typename T>
LstmLayer<T>::LstmLayer(int in, int hidden, Rng& rng)
    : w_ih(Tensor<T>(Shape{std::size_t(in), std::size_t(4 * hidden)})),
      w_hh(Tensor<T>(Shape{std::size_t(hidden), std::size_t(4 * hidden)})),
      bias(Tensor<T>(Shape{std::size_t(4 * hidden)}, T{0})) {
  kaiming_uniform(w_ih.value, std::size_t(in), rng);
  kaiming_uniform(w_hh.value, std::size_t(hidden), rng);
  for (int j = hidden; j < 2 * hidden; ++j) bias.value[j] = T{1};
}

template <typename T>
void LstmLayer<T>::collect(StateDict<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".w_ih", w_ih.value, &w_ih});
  out.push_back({prefix + ".w_hh", w_hh.value, &w_hh});
  out.push_back({prefix + ".bias", bias.value, &bias});
}

template <typename T>
LstmState<T> LstmState<T>::zeros(std::size_t batch, int layers, int hidden) {
  LstmState s;
  for (int l = 0; l < layers; ++l) {
    s.h.emplace_back(Shape{batch, std::size_t(hidden)});
    s.c.emplace_back(Shape{batch, std::size_t(hidden)});
  }
  return s;
}

template <typename T>
CellOutput<T> lstm_cell(Tape<T>& tape, const LstmLayer<T>& layer, const Tensor<T>& x, const Tensor<T>& h,
                        const Tensor<T>& c) {
  const std::size_t H = layer.hidden();
  HCNF_REQUIRE(x.rank() == 2 && x.dim(1) == layer.w_ih.value.dim(0),
               "lstm: input width " + shape_str(x.shape()) + " does not match layer input " +
                   std::to_string(layer.w_ih.value.dim(0)));
  HCNF_REQUIRE(h.shape() == Shape({x.dim(0), H}) && c.shape() == Shape({x.dim(0), H}),
               "lstm: state shape " + shape_str(h.shape()) + " does not match [" + std::to_string(x.dim(0)) + "," +
                   std::to_string(H) + "]");
  auto gates = ops::add(tape, ops::linear(tape, x, layer.w_ih.value, layer.bias.value),
                        ops::linear(tape, h, layer.w_hh.value, Tensor<T>()));
  auto i = ops::sigmoid(tape, ops::slice_cols(tape, gates, 0, H));
  auto f = ops::sigmoid(tape, ops::slice_cols(tape, gates, H, 2 * H));
  auto g = ops::tanh(tape, ops::slice_cols(tape, gates, 2 * H, 3 * H));
  auto o = ops::sigmoid(tape, ops::slice_cols(tape, gates, 3 * H, 4 * H));
  CellOutput<T> out;
  out.c = ops::add(tape, ops::mul(tape, f, c), ops::mul(tape, i, g));
  out.h = ops::mul(tape, o, ops::tanh(tape, out.c));
  return out;
}

template <typename T>
LstmStack<T>::LstmStack(Rng& rng) {
  for (int l = 0; l < kLstmLayers; ++l) layers.emplace_back(l == 0 ? kFusionWidth : kLstmHidden, kLstmHidden, rng);
  classifier = Linear<T>(kLstmHidden, kNumEmotions, rng);
}

template <typename T>
void LstmStack<T>::collect(StateDict<T>& out, const std::string& prefix) {
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect(out, prefix + ".layer" + std::to_string(l));
  classifier.collect(out, prefix + ".classifier");
}

template <typename T>
StepOutput<T> lstm_step(Tape<T>& tape, const LstmStack<T>& stack, const Tensor<T>& x, const LstmState<T>& state) {
  HCNF_REQUIRE(state.h.size() == stack.layers.size() && state.c.size() == stack.layers.size(),
               "lstm_step: state has " + std::to_string(state.h.size()) + " layers, stack has " +
                   std::to_string(stack.layers.size()));
  StepOutput<T> out;
  Tensor<T> in = x;
  for (std::size_t l = 0; l < stack.layers.size(); ++l) {
    auto cell = lstm_cell(tape, stack.layers[l], in, state.h[l], state.c[l]);
    out.state.h.push_back(cell.h);
    out.state.c.push_back(cell.c);
    in = cell.h;
  }
  out.y = in;
  return out;
}

template <typename T>
SequenceOutput<T> lstm_sequence(Tape<T>& tape, const LstmStack<T>& stack, const Tensor<T>& seq, LstmState<T> state) {
  HCNF_REQUIRE(seq.rank() == 2, "lstm_sequence: expected [S,F], got " + shape_str(seq.shape()));
  SequenceOutput<T> out;
  for (std::size_t t = 0; t < seq.dim(0); ++t) {
    auto step = lstm_step(tape, stack, ops::row(tape, seq, t), state);
    out.outputs.push_back(step.y);
    state = std::move(step.state);
  }
  out.state = std::move(state);
  return out;
}

template <typename T>
FusionModel<T>::FusionModel(const ArchConfig& arch_, std::uint64_t seed) : arch(arch_) {
  arch.validate();
  Rng rng(seed);
  rgb = RgbCnn<T>(arch.width, rng);
  flow = FlowCnn<T>(arch.width, rng);
  lstm = LstmStack<T>(rng);
}

template <typename T>
FusionModel<T> FusionModel<T>::clone() const {
  FusionModel copy(arch, 0);
  auto src = const_cast<FusionModel*>(this)->state();
  auto dst = copy.state();
  for (std::size_t i = 0; i < src.size(); ++i) std::ranges::copy(src[i].tensor.data(), dst[i].tensor.data().begin());
  return copy;
}

template <typename T>
StateDict<T> FusionModel<T>::state() {
  StateDict<T> out;
  rgb.collect(out, "rgb");
  flow.collect(out, "flow");
  lstm.collect(out, "lstm");
  return out;
}

template <typename T>
Tensor<T> fusion_features(Tape<T>& tape, FusionModel<T>& model, const Tensor<T>& rgb_frames,
                          const Tensor<T>& hsv_frames, Mode mode) {
  require_frames(rgb_frames, "fusion rgb frames");
  require_frames(hsv_frames, "fusion hsv frames");
  HCNF_REQUIRE(rgb_frames.shape() == hsv_frames.shape(), "fusion: rgb frames " + shape_str(rgb_frames.shape()) +
                                                             " and hsv frames " + shape_str(hsv_frames.shape()) +
                                                             " differ");
  const auto n = static_cast<std::size_t>(model.arch.input_size);
  HCNF_REQUIRE(rgb_frames.dim(2) == n && rgb_frames.dim(3) == n,
               "fusion: frames must be " + std::to_string(n) + "x" + std::to_string(n));
  CnnOutput<T> a, b;
  if (model.arch.swap_backbones) {
    a = flow_forward(tape, model.flow, rgb_frames, mode);
    b = rgb_forward(tape, model.rgb, hsv_frames, mode);
  } else {
    a = rgb_forward(tape, model.rgb, rgb_frames, mode);
    b = flow_forward(tape, model.flow, hsv_frames, mode);
  }
  return ops::concat(tape, a.embedding, b.embedding);
}

template <typename T>
FusionOutput<T> fusion_forward(Tape<T>& tape, FusionModel<T>& model, const Tensor<T>& rgb_frames,
                               const Tensor<T>& hsv_frames, const LstmState<T>& state, Mode mode) {
  HCNF_REQUIRE(rgb_frames.rank() == 4 && rgb_frames.dim(0) == std::size_t(model.arch.group_size),
               "fusion_forward: a group must hold exactly " + std::to_string(model.arch.group_size) + " frames, got " +
                   (rgb_frames.rank() ? std::to_string(rgb_frames.dim(0)) : std::string("none")));
  auto features = fusion_features(tape, model, rgb_frames, hsv_frames, mode);
  auto seq = lstm_sequence(tape, model.lstm, features, state);
  FusionOutput<T> out;
  out.logits = model.lstm.classifier(tape, seq.outputs.back());
  out.probs = ops::softmax(out.logits);
  out.state = std::move(seq.state);
  return out;
}

int argmax(std::span<const double> values) {
  HCNF_REQUIRE(!values.empty(), "argmax of an empty vector");
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

WindowPrediction make_window_prediction(int window_index, int start_frame, int end_frame,
                                        std::span<const double> probs) {
  HCNF_REQUIRE(probs.size() == std::size_t(kNumEmotions),
               "window prediction needs " + std::to_string(kNumEmotions) + " probabilities");
  HCNF_REQUIRE(start_frame <= end_frame, "window prediction: start_frame after end_frame");
  WindowPrediction p;
  p.window_index = window_index;
  p.start_frame = start_frame;
  p.end_frame = end_frame;
  std::ranges::copy(probs, p.probs.begin());
  p.label = static_cast<Emotion>(argmax(probs));
  return p;
}

#define HCNF_INSTANTIATE_NETS(T)                                                                               \
  template struct InceptionBlock<T>;                                                                           \
  template struct ResidualBlock<T>;                                                                            \
  template struct RgbCnn<T>;                                                                                   \
  template struct FlowCnn<T>;                                                                                  \
  template struct LstmLayer<T>;                                                                                \
  template struct LstmState<T>;                                                                                \
  template struct LstmStack<T>;                                                                                \
  template struct FusionModel<T>;                                                                              \
  template CnnOutput<T> rgb_forward(Tape<T>&, RgbCnn<T>&, const Tensor<T>&, Mode);                             \
  template CnnOutput<T> flow_forward(Tape<T>&, FlowCnn<T>&, const Tensor<T>&, Mode);                           \
  template CellOutput<T> lstm_cell(Tape<T>&, const LstmLayer<T>&, const Tensor<T>&, const Tensor<T>&,          \
                                   const Tensor<T>&);                                                          \
  template StepOutput<T> lstm_step(Tape<T>&, const LstmStack<T>&, const Tensor<T>&, const LstmState<T>&);      \
  template SequenceOutput<T> lstm_sequence(Tape<T>&, const LstmStack<T>&, const Tensor<T>&, LstmState<T>);     \
  template Tensor<T> fusion_features(Tape<T>&, FusionModel<T>&, const Tensor<T>&, const Tensor<T>&, Mode);     \
  template FusionOutput<T> fusion_forward(Tape<T>&, FusionModel<T>&, const Tensor<T>&, const Tensor<T>&,       \
                                          const LstmState<T>&, Mode);

HCNF_INSTANTIATE_NETS(float)
HCNF_INSTANTIATE_NETS(double)

}  // namespace hcnf::nets

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "hcnf/core/emotion.hpp"
#include "hcnf/nets/layers.hpp"

namespace hcnf::nets {

inline constexpr int kEmbeddingWidth = 32;
inline constexpr int kFusionWidth = 2 * kEmbeddingWidth;
inline constexpr int kLstmLayers = 3;
inline constexpr int kLstmHidden = 64;

struct ArchConfig {
  // Base channel width c. RgbCnn stages run at c, 4c, 8c and FlowCnn stages
  // at c, 2c, 4c. Must be a positive multiple of 4.
  int width = 16;
  int input_size = 48;  // crop side n
  int group_size = 30;  // frames per fusion window
  // false: RGB crops -> inception net, HSV flow -> residual net.
  // true: the reverse assignment.
  bool swap_backbones = false;

  void validate() const;
};

template <typename T>
struct CnnOutput {
  Tensor<T> embedding;  // [B,32], post-relu penultimate activation
  Tensor<T> logits;     // [B,8], pretraining head
};

struct InceptionWidths {
  int b1, b3_reduce, b3, b5_reduce, b5, pool_proj;
  int total() const { return b1 + b3 + b5 + pool_proj; }
  // Widths for output 4*scale channels, e.g. scale 16 -> 16/16,24/8,12/12 = 64.
  static InceptionWidths for_output(int scale) {
    return {scale, scale, 3 * scale / 2, scale / 2, 3 * scale / 4, 3 * scale / 4};
  }
};

// Parallel 1x1, 1x1->3x3, 1x1->5x5 and maxpool->1x1 branches concatenated
// along channels. Spatial size is preserved.
template <typename T>
struct InceptionBlock {
  ConvBnRelu<T> b1, b3_reduce, b3, b5_reduce, b5, pool_proj;

  InceptionBlock() = default;
  InceptionBlock(int cin, const InceptionWidths& w, Rng& rng);
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, Mode mode);
  void collect(StateDict<T>& out, const std::string& prefix);
};

// relu(bn2(conv2(relu(bn1(conv1(x))))) + shortcut(x)). The shortcut is the
// identity unless the block changes width or stride, in which case it is a
// strided 1x1 conv + batchnorm.
template <typename T>
struct ResidualBlock {
  ConvBnRelu<T> conv1;
  Conv2d<T> conv2;
  BatchNorm2d<T> bn2;
  bool projected = false;
  Conv2d<T> proj;
  BatchNorm2d<T> proj_bn;

  ResidualBlock() = default;
  ResidualBlock(int cin, int cout, int stride, Rng& rng);
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& x, Mode mode);
  void collect(StateDict<T>& out, const std::string& prefix);
};

template <typename T>
struct RgbCnn {
  int width = 0;
  ConvBnRelu<T> stem;
  std::vector<InceptionBlock<T>> blocks;  // two at n/2, two at n/4
  Linear<T> embed, head;

  RgbCnn() = default;
  RgbCnn(int width, Rng& rng);
  void collect(StateDict<T>& out, const std::string& prefix);
};

template <typename T>
struct FlowCnn {
  int width = 0;
  ConvBnRelu<T> stem;
  std::vector<ResidualBlock<T>> blocks;  // 3 stages x 2 blocks
  Linear<T> embed, head;

  FlowCnn() = default;
  FlowCnn(int width, Rng& rng);
  void collect(StateDict<T>& out, const std::string& prefix);
};

// x: [B,3,n,n]. Wrong channel count is a ContractError.
template <typename T>
CnnOutput<T> rgb_forward(Tape<T>& tape, RgbCnn<T>& model, const Tensor<T>& x, Mode mode);
template <typename T>
CnnOutput<T> flow_forward(Tape<T>& tape, FlowCnn<T>& model, const Tensor<T>& x, Mode mode);

// Gates are packed [i | f | g | o] along the 4H axis.
template <typename T>
struct LstmLayer {
  Parameter<T> w_ih;  // [in,4H]
  Parameter<T> w_hh;  // [H,4H]
  Parameter<T> bias;  // [4H], forget slice initialised to 1

  LstmLayer() = default;
  LstmLayer(int in, int hidden, Rng& rng);
  int hidden() const { return static_cast<int>(w_hh.value.dim(0)); }
  void collect(StateDict<T>& out, const std::string& prefix);
};

template <typename T>
struct LstmState {
  std::vector<Tensor<T>> h, c;  // one [B,H] per layer

  static LstmState zeros(std::size_t batch, int layers = kLstmLayers, int hidden = kLstmHidden);
  std::size_t batch() const { return h.empty() ? 0 : h[0].dim(0); }
};

template <typename T>
struct CellOutput {
  Tensor<T> h, c;
};

// Standard LSTM cell:
//   [i f g o] = x W_ih + h W_hh + b
//   c' = sigmoid(f) * c + sigmoid(i) * tanh(g),  h' = sigmoid(o) * tanh(c')
template <typename T>
CellOutput<T> lstm_cell(Tape<T>& tape, const LstmLayer<T>& layer, const Tensor<T>& x, const Tensor<T>& h,
                        const Tensor<T>& c);

template <typename T>
struct LstmStack {
  std::vector<LstmLayer<T>> layers;
  Linear<T> classifier;  // 64 -> 8

  LstmStack() = default;
  explicit LstmStack(Rng& rng);
  void collect(StateDict<T>& out, const std::string& prefix);
};

template <typename T>
struct StepOutput {
  Tensor<T> y;  // top-layer h', [B,64]
  LstmState<T> state;
};

// One time step through all layers; layer l's h' is layer l+1's input.
template <typename T>
StepOutput<T> lstm_step(Tape<T>& tape, const LstmStack<T>& stack, const Tensor<T>& x, const LstmState<T>& state);

template <typename T>
struct SequenceOutput {
  std::vector<Tensor<T>> outputs;  // per step, [1,64]
  LstmState<T> state;
};

// seq: [S,64], one time step per row, batch 1.
template <typename T>
SequenceOutput<T> lstm_sequence(Tape<T>& tape, const LstmStack<T>& stack, const Tensor<T>& seq,
                                LstmState<T> state);

template <typename T>
struct FusionModel {
  ArchConfig arch;
  RgbCnn<T> rgb;
  FlowCnn<T> flow;
  LstmStack<T> lstm;

  FusionModel() = default;
  // Parameters are drawn from one engine seeded with `seed`, in the order
  // rgb, flow, lstm.
  FusionModel(const ArchConfig& arch, std::uint64_t seed);

  // Copies of a model alias its tensors; this makes an independent copy.
  FusionModel clone() const;

  // Every persistent tensor in a fixed order: rgb.*, flow.*, lstm.*.
  StateDict<T> state();
  std::vector<Parameter<T>*> parameters() { return parameters_of(state()); }
};

// Per-frame embeddings of both streams concatenated to [G,64]
// (RGB stream first).
template <typename T>
Tensor<T> fusion_features(Tape<T>& tape, FusionModel<T>& model, const Tensor<T>& rgb_frames,
                          const Tensor<T>& hsv_frames, Mode mode);

template <typename T>
struct FusionOutput {
  Tensor<T> logits;  // [1,8]
  Tensor<T> probs;   // [1,8], detached softmax
  LstmState<T> state;
};

// rgb_frames, hsv_frames: [G,3,n,n] with G = arch.group_size. The LSTM runs
// G steps from `state`; the last top-layer output feeds the classifier.
template <typename T>
FusionOutput<T> fusion_forward(Tape<T>& tape, FusionModel<T>& model, const Tensor<T>& rgb_frames,
                               const Tensor<T>& hsv_frames, const LstmState<T>& state, Mode mode);

struct WindowPrediction {
  int window_index = 0;
  int start_frame = 0, end_frame = 0;  // inclusive frame range
  std::array<double, kNumEmotions> probs{};
  Emotion label = Emotion::anger;
};

// Index of the largest value; ties go to the lowest index.
int argmax(std::span<const double> values);

WindowPrediction make_window_prediction(int window_index, int start_frame, int end_frame,
                                        std::span<const double> probs);

}  // namespace hcnf::nets

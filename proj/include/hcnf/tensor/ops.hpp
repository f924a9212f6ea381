#pragma once

#include <vector>

#include "hcnf/tensor/tape.hpp"
#include "hcnf/tensor/tensor.hpp"

// Differentiable tensor operations. Every op takes the tape it records onto;
// a non-recording tape (or inputs without requires_grad) gives a plain
// forward evaluation. Shape violations raise ContractError.
namespace hcnf::ops {

enum class Mode { train, eval };
enum class PoolMode { max, global_avg };

// Cross-correlation. x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], b: [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                 int stride = 1, int padding = 0);

// Max pooling over window x window patches. Padded cells never win; ties go to
// the first element in row-major window order.
template <typename T>
Tensor<T> max_pool2d(Tape<T>& tape, const Tensor<T>& x, int window, int stride, int padding = 0);

// [B,C,H,W] -> [B,C] spatial means.
template <typename T>
Tensor<T> global_avg_pool(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> pool2d(Tape<T>& tape, const Tensor<T>& x, PoolMode mode, int window, int stride) {
  return mode == PoolMode::max ? max_pool2d(tape, x, window, stride) : global_avg_pool(tape, x);
}

// x: [B,F], w: [F,G], b: [G] or undefined -> [B,G].
template <typename T>
Tensor<T> linear(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

template <typename T>
struct BatchNormStats {
  Tensor<T> mean;  // [C]
  Tensor<T> var;   // [C], unbiased running estimate
};

// Train mode normalizes with batch statistics and folds them into `running`
// with weight `momentum`; eval mode normalizes with `running`.
template <typename T>
Tensor<T> batchnorm2d(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& running, Mode mode, double momentum = 0.1, double eps = 1e-5);

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x);
template <typename T>
Tensor<T> tanh(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T s);
// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

// [B,F1] ++ [B,F2] -> [B,F1+F2].
template <typename T>
Tensor<T> concat(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);
// Channel concatenation of [B,Ci,H,W] tensors.
template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const std::vector<Tensor<T>>& parts);
// Columns [begin, end) of a [B,F] tensor.
template <typename T>
Tensor<T> slice_cols(Tape<T>& tape, const Tensor<T>& x, std::size_t begin, std::size_t end);
// Row `row` of a [B,F] tensor as [1,F].
template <typename T>
Tensor<T> row(Tape<T>& tape, const Tensor<T>& x, std::size_t row);
template <typename T>
Tensor<T> reshape(Tape<T>& tape, const Tensor<T>& x, Shape shape);

template <typename T>
struct SoftmaxCrossEntropy {
  Tensor<T> probs;  // [B,K]
  Tensor<T> loss;   // [1], mean negative log-likelihood
};

// targets must be one-hot rows. d(loss)/d(logits) = (probs - targets) / B.
template <typename T>
SoftmaxCrossEntropy<T> softmax_cross_entropy(Tape<T>& tape, const Tensor<T>& logits, const Tensor<T>& targets);

// Row-wise max-subtracted softmax, not differentiable.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

}  // namespace hcnf::ops

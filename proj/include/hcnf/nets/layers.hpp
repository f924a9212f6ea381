#pragma once

#include <string>
#include <vector>

#include "hcnf/tensor/init.hpp"
#include "hcnf/tensor/ops.hpp"
#include "hcnf/tensor/parameter.hpp"

namespace hcnf::nets {

using ops::Mode;

// One named tensor of a model's persistent state. `param` is null for
// buffers (batchnorm running statistics). `tensor` aliases the model's
// storage, so writing into it updates the model.
template <typename T>
struct StateEntry {
  std::string name;
  Tensor<T> tensor;
  Parameter<T>* param = nullptr;
};

template <typename T>
using StateDict = std::vector<StateEntry<T>>;

template <typename T>
std::vector<Parameter<T>*> parameters_of(const StateDict<T>& state) {
  std::vector<Parameter<T>*> out;
  for (const auto& e : state)
    if (e.param) out.push_back(e.param);
  return out;
}

// Bias-free convolution; every conv in the zoo feeds a batchnorm.
template <typename T>
struct Conv2d {
  Parameter<T> weight;  // [Cout,Cin,k,k]
  int stride = 1, padding = 0;

  Conv2d() = default;
  Conv2d(int cin, int cout, int k, int stride_, int padding_, Rng& rng)
      : weight(Tensor<T>(Shape{std::size_t(cout), std::size_t(cin), std::size_t(k), std::size_t(k)})),
        stride(stride_),
        padding(padding_) {
    kaiming_uniform(weight.value, std::size_t(cin) * k * k, rng);
  }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return ops::conv2d(tape, x, weight.value, Tensor<T>(), stride, padding);
  }

  void collect(StateDict<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight.value, &weight});
  }
};

template <typename T>
struct BatchNorm2d {
  Parameter<T> gamma, beta;
  ops::BatchNormStats<T> running;

  BatchNorm2d() = default;
  explicit BatchNorm2d(int c)
      : gamma(Tensor<T>(Shape{std::size_t(c)}, T{1})),
        beta(Tensor<T>(Shape{std::size_t(c)}, T{0})),
        running{Tensor<T>(Shape{std::size_t(c)}, T{0}), Tensor<T>(Shape{std::size_t(c)}, T{1})} {}

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
    return ops::batchnorm2d(tape, x, gamma.value, beta.value, running, mode);
  }

  void collect(StateDict<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", gamma.value, &gamma});
    out.push_back({prefix + ".beta", beta.value, &beta});
    out.push_back({prefix + ".running_mean", running.mean, nullptr});
    out.push_back({prefix + ".running_var", running.var, nullptr});
  }
};

template <typename T>
struct Linear {
  Parameter<T> weight;  // [in,out]
  Parameter<T> bias;    // [out]

  Linear() = default;
  Linear(int in, int out, Rng& rng)
      : weight(Tensor<T>(Shape{std::size_t(in), std::size_t(out)})), bias(Tensor<T>(Shape{std::size_t(out)}, T{0})) {
    kaiming_uniform(weight.value, std::size_t(in), rng);
  }

  int in_features() const { return static_cast<int>(weight.value.dim(0)); }
  int out_features() const { return static_cast<int>(weight.value.dim(1)); }

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x) const {
    return ops::linear(tape, x, weight.value, bias.value);
  }

  void collect(StateDict<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", weight.value, &weight});
    out.push_back({prefix + ".bias", bias.value, &bias});
  }
};

// conv -> batchnorm -> relu
template <typename T>
struct ConvBnRelu {
  Conv2d<T> conv;
  BatchNorm2d<T> bn;

  ConvBnRelu() = default;
  ConvBnRelu(int cin, int cout, int k, int stride, Rng& rng) : conv(cin, cout, k, stride, k / 2, rng), bn(cout) {}

  Tensor<T> operator()(Tape<T>& tape, const Tensor<T>& x, Mode mode) {
    return ops::relu(tape, bn(tape, conv(tape, x), mode));
  }

  void collect(StateDict<T>& out, const std::string& prefix) {
    conv.collect(out, prefix + ".conv");
    bn.collect(out, prefix + ".bn");
  }
};

}  // namespace hcnf::nets

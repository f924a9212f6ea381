#pragma once

#include <functional>
#include <vector>

#include "hcnf/tensor/tensor.hpp"

namespace hcnf {

// Ordered record of the differentiable operations executed while recording.
//
// Ops append their backward closure after computing their output, so the
// record is in topological order by construction; backward() walks it in
// reverse and runs each closure once.
template <typename T>
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // True when an op on these inputs should be recorded.
  template <typename... Ts>
  bool wants(const Ts&... inputs) const {
    return recording_ && (... || (inputs.defined() && inputs.requires_grad()));
  }

  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse. Gradients
  // accumulate into every requires_grad tensor reachable from the loss.
  void backward(Tensor<T>& loss) {
    HCNF_REQUIRE(loss.defined() && loss.numel() == 1,
                 "backward() requires a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    HCNF_REQUIRE(loss.requires_grad(), "loss is not connected to any recorded operation");
    auto g = loss.ensure_grad();
    g[0] += T{1};
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  bool recording_;
  std::vector<std::function<void()>> nodes_;
};

template <typename T>
void backward(Tensor<T>& loss, Tape<T>& tape) {
  tape.backward(loss);
}

}  // namespace hcnf

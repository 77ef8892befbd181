#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spikereg/layers.hpp"

namespace spikereg {

struct InputSpec {
  Index channels = 3;
  Index height = 32;
  Index width = 32;
};

template <typename Scalar>
struct NetworkOutput {
  Tensor<Scalar> logits;  // [N, B, classes]
  std::vector<SpikeTrain<Scalar>> spike_trains;
};

/// Ordered layers plus the registry of their trainable parameters.
template <typename Scalar>
class LayerStack {
 public:
  explicit LayerStack(std::vector<LayerPtr<Scalar>> layers, std::optional<InputSpec> input = std::nullopt)
      : root_(std::move(layers)), input_(input) {
    root_.collect_parameters("", parameters_);
    root_.collect_buffers("", buffers_);
    std::unordered_set<const void*> seen;
    for (const auto& p : parameters_) {
      if (!seen.insert(p.tensor.node().get()).second) {
        throw ConfigurationError("parameter registered twice: " + p.name);
      }
    }
  }

  LayerStack(LayerStack&&) noexcept = default;
  LayerStack& operator=(LayerStack&&) noexcept = default;

  /// Runs the stack over input[N, B, ...] for N clocked steps; neuron state
  /// starts at zero. Stateless layers process all steps at once, IF layers
  /// integrate step by step.
  NetworkOutput<Scalar> forward(const Tensor<Scalar>& sequence, SpikeMode mode = SpikeMode::heaviside) {
    ForwardContext<Scalar> ctx;
    ctx.spike_mode = mode;
    Tensor<Scalar> out = run(sequence, ctx);
    return {reshape(out, sequence_shape(sequence, out)), std::move(ctx.spike_trains)};
  }

  std::vector<Parameter<Scalar>>& parameters() { return parameters_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return parameters_; }
  std::vector<NamedBuffer<Scalar>>& buffers() { return buffers_; }

  Index parameter_count() const {
    Index n = 0;
    for (const auto& p : parameters_) n += p.tensor.numel();
    return n;
  }

  void set_training(bool training) {
    training_ = training;
    root_.set_training(training);
  }
  bool training() const { return training_; }

  void zero_grad() {
    for (auto& p : parameters_) p.tensor.zero_grad();
  }

  /// Leaf layers (containers excluded) in execution order.
  std::vector<Layer<Scalar>*> leaves() {
    std::vector<Layer<Scalar>*> out;
    root_.visit([&](Layer<Scalar>& l) {
      if (l.kind() != "sequential" && l.kind() != "sew_residual") out.push_back(&l);
    });
    return out;
  }

  std::size_t count(const std::string& kind) {
    std::size_t n = 0;
    root_.visit([&](Layer<Scalar>& l) { n += l.kind() == kind ? 1 : 0; });
    return n;
  }

  Sequential<Scalar>& root() { return root_; }
  const std::optional<InputSpec>& input_spec() const { return input_; }

  /// Initializes every weight-normalized layer from one minibatch, in
  /// execution order, with one forward pass per layer. Running statistics of
  /// any norm layers are left as they were.
  void data_dependent_init(const Tensor<Scalar>& sequence) {
    std::vector<Layer<Scalar>*> targets;
    for (Layer<Scalar>* l : leaves()) {
      if (l->weight_normalized()) targets.push_back(l);
    }
    if (targets.empty()) throw UsageError("data-dependent init needs weight-normalized layers");
    std::vector<Buffer<Scalar>> saved;
    for (auto& b : buffers_) saved.push_back(*b.data);
    NoGradGuard guard;
    for (Layer<Scalar>* target : targets) {
      ForwardContext<Scalar> ctx;
      ctx.init_target = target;
      run(sequence, ctx);
      if (!ctx.init_applied) throw UsageError("data-dependent init did not reach layer " + target->kind());
    }
    for (std::size_t i = 0; i < buffers_.size(); ++i) *buffers_[i].data = saved[i];
  }

 private:
  Tensor<Scalar> run(const Tensor<Scalar>& sequence, ForwardContext<Scalar>& ctx) {
    if (sequence.rank() < 3) {
      throw UsageError("network input must be [N, B, ...], got " + shape_string(sequence.shape()));
    }
    if (input_) {
      const Shape expect{sequence.dim(0), sequence.dim(1), input_->channels, input_->height, input_->width};
      if (sequence.shape() != expect) {
        throw ConfigurationError("network input " + shape_string(sequence.shape()) + " does not match " +
                                 shape_string(expect));
      }
    }
    ctx.time_steps = sequence.dim(0);
    Shape folded{sequence.dim(0) * sequence.dim(1)};
    folded.insert(folded.end(), sequence.shape().begin() + 2, sequence.shape().end());
    return root_.forward(reshape(sequence, folded), ctx);
  }

  static Shape sequence_shape(const Tensor<Scalar>& sequence, const Tensor<Scalar>& out) {
    Shape shape{sequence.dim(0), sequence.dim(1)};
    shape.insert(shape.end(), out.shape().begin() + 1, out.shape().end());
    return shape;
  }

  Sequential<Scalar> root_;
  std::optional<InputSpec> input_;
  std::vector<Parameter<Scalar>> parameters_;
  std::vector<NamedBuffer<Scalar>> buffers_;
  bool training_ = true;
};

/// BPTT unroll: (per-step outputs [N, B, ...], spike trains of every IF layer).
template <typename Scalar>
NetworkOutput<Scalar> unroll(LayerStack<Scalar>& stack, const Tensor<Scalar>& input_sequence,
                             SpikeMode mode = SpikeMode::heaviside) {
  if (input_sequence.rank() == 0 || input_sequence.dim(0) < 1) throw UsageError("unroll needs N >= 1");
  return stack.forward(input_sequence, mode);
}

}  // namespace spikereg

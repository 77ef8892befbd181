#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "spikereg/neuron.hpp"
#include "spikereg/normalization.hpp"
#include "spikereg/ops.hpp"

namespace spikereg {

/// What a trainable tensor is for; decides weight-decay eligibility.
enum class ParamRole { weight, bias, norm_affine, wn_direction, wn_magnitude };

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
  ParamRole role;

  // The effective weight of a weight-normalized layer has ||w_c|| = |g_c|, so
  // its squared L2 norm is carried by the magnitudes, not the directions.
  bool decays() const { return role == ParamRole::weight || role == ParamRole::wn_magnitude; }
};

/// Non-trainable state that still belongs in a checkpoint (running statistics).
template <typename Scalar>
struct NamedBuffer {
  std::string name;
  Buffer<Scalar>* data;
};

/// Binary spike record of one IF layer, shape [N, B, K].
template <typename Scalar>
struct SpikeTrain {
  Tensor<Scalar> values;

  Index time_steps() const { return values.dim(0); }
  Index batch() const { return values.dim(1); }
  Index neurons() const { return values.dim(2); }
};

template <typename Scalar>
struct ForwardContext {
  Index time_steps = 1;
  SpikeMode spike_mode = SpikeMode::heaviside;
  std::vector<SpikeTrain<Scalar>> spike_trains;
  const void* init_target = nullptr;
  bool init_applied = false;
};

/// Layers see activations with time folded into the leading axis:
/// [N*B, ...] in time-major order. Only IF layers carry state across steps.
template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>& ctx) = 0;
  virtual std::string kind() const = 0;
  virtual void collect_parameters(const std::string& /*prefix*/, std::vector<Parameter<Scalar>>& /*out*/) {}
  virtual void collect_buffers(const std::string& /*prefix*/, std::vector<NamedBuffer<Scalar>>& /*out*/) {}
  virtual void set_training(bool /*training*/) {}
  // Pre-order walk; containers override to recurse into their children.
  virtual void visit(const std::function<void(Layer&)>& fn) { fn(*this); }
  virtual bool weight_normalized() const { return false; }
};

template <typename Scalar>
using LayerPtr = std::unique_ptr<Layer<Scalar>>;

/// Kaiming-style uniform init with bound sqrt(6 / fan_in).
template <typename Scalar>
Tensor<Scalar> kaiming_uniform(const Shape& shape, Index fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Buffer<Scalar> values(numel(shape));
  for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<Scalar>(dist(rng));
  return Tensor<Scalar>(shape, std::move(values), true);
}

/// Weight of a conv or FC layer: either a plain tensor or a weight-norm pair.
template <typename Scalar>
class WeightSource {
 public:
  WeightSource(Tensor<Scalar> weight, bool normalized) {
    if (normalized) {
      wn_ = WeightNormParam<Scalar>::from_weight(weight);
    } else {
      weight_ = std::move(weight);
    }
  }

  bool normalized() const { return wn_.direction.defined(); }
  Tensor<Scalar> effective() const { return normalized() ? weight_normalize(wn_) : weight_; }
  WeightNormParam<Scalar>& wn() { return wn_; }
  const Shape& shape() const { return normalized() ? wn_.direction.shape() : weight_.shape(); }

  void collect(const std::string& prefix, std::vector<Parameter<Scalar>>& out) const {
    if (normalized()) {
      out.push_back({prefix + "weight_v", wn_.direction, ParamRole::wn_direction});
      out.push_back({prefix + "weight_g", wn_.magnitude, ParamRole::wn_magnitude});
    } else {
      out.push_back({prefix + "weight", weight_, ParamRole::weight});
    }
  }

  /// Same weight with unit per-channel norm (g = 1), detached.
  Tensor<Scalar> unit_direction() const {
    NoGradGuard guard;
    WeightNormParam<Scalar> unit{wn_.direction.detach(), Tensor<Scalar>::ones({wn_.direction.dim(0)})};
    return weight_normalize(unit);
  }

 private:
  Tensor<Scalar> weight_;
  WeightNormParam<Scalar> wn_;
};

template <typename Scalar>
class Conv2d final : public Layer<Scalar> {
 public:
  struct Options {
    Index in_channels, out_channels, kernel;
    Index stride = 1, padding = 0, groups = 1;
    bool bias = false;
    bool weight_norm = false;
  };

  Conv2d(const Options& o, std::mt19937_64& rng)
      : options_(o),
        weight_(make_weight(o, rng), o.weight_norm) {
    if (o.bias) bias_ = Tensor<Scalar>::zeros({o.out_channels}, true);
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>& ctx) override {
    const Conv2dOptions conv{options_.stride, options_.padding, options_.groups};
    if (ctx.init_target == this) {
      // Data-dependent init: statistics of the unit-norm, bias-free response.
      auto [g, b] = data_dependent_targets(conv2d(x.detach(), weight_.unit_direction(), Tensor<Scalar>(), conv));
      weight_.wn().magnitude.mutable_values() = g;
      bias_.mutable_values() = b;
      ctx.init_applied = true;
    }
    return conv2d(x, weight_.effective(), bias_, conv);
  }

  std::string kind() const override { return "conv2d"; }
  bool weight_normalized() const override { return weight_.normalized(); }
  const Options& options() const { return options_; }
  WeightSource<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<Scalar>>& out) override {
    weight_.collect(prefix, out);
    if (bias_.defined()) out.push_back({prefix + "bias", bias_, ParamRole::bias});
  }

 private:
  static Tensor<Scalar> make_weight(const Options& o, std::mt19937_64& rng) {
    if (o.groups < 1 || o.in_channels % o.groups != 0 || o.out_channels % o.groups != 0) {
      throw ConfigurationError("conv " + std::to_string(o.in_channels) + "->" + std::to_string(o.out_channels) +
                               " channels not divisible by groups " + std::to_string(o.groups));
    }
    if (o.weight_norm && !o.bias) throw ConfigurationError("weight-normalized conv layers carry a bias");
    const Index fan_in = (o.in_channels / o.groups) * o.kernel * o.kernel;
    return kaiming_uniform<Scalar>({o.out_channels, o.in_channels / o.groups, o.kernel, o.kernel}, fan_in, rng);
  }

  Options options_;
  WeightSource<Scalar> weight_;
  Tensor<Scalar> bias_;
};

template <typename Scalar>
class Linear final : public Layer<Scalar> {
 public:
  Linear(Index in_features, Index out_features, bool weight_norm, std::mt19937_64& rng)
      : in_(in_features),
        out_(out_features),
        weight_(kaiming_uniform<Scalar>({out_features, in_features}, in_features, rng), weight_norm),
        bias_(Tensor<Scalar>::zeros({out_features}, true)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>& ctx) override {
    if (x.rank() != 2 || x.dim(1) != in_) {
      throw ConfigurationError("linear layer expects [M, " + std::to_string(in_) + "], got " + shape_string(x.shape()));
    }
    if (ctx.init_target == this) {
      auto [g, b] = data_dependent_targets(linear(x.detach(), weight_.unit_direction(), Tensor<Scalar>()));
      weight_.wn().magnitude.mutable_values() = g;
      bias_.mutable_values() = b;
      ctx.init_applied = true;
    }
    return linear(x, weight_.effective(), bias_);
  }

  std::string kind() const override { return "linear"; }
  bool weight_normalized() const override { return weight_.normalized(); }
  Index in_features() const { return in_; }
  Index out_features() const { return out_; }
  WeightSource<Scalar>& weight() { return weight_; }
  Tensor<Scalar>& bias() { return bias_; }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<Scalar>>& out) override {
    weight_.collect(prefix, out);
    out.push_back({prefix + "bias", bias_, ParamRole::bias});
  }

 private:
  Index in_, out_;
  WeightSource<Scalar> weight_;
  Tensor<Scalar> bias_;
};

template <typename Scalar>
class BatchNorm final : public Layer<Scalar> {
 public:
  BatchNorm(Index channels, NormVariant variant) : state_(BatchNormState<Scalar>::create(channels, variant)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>&) override {
    return batch_norm_forward(state_, x);
  }

  std::string kind() const override { return "batch_norm"; }
  void set_training(bool training) override { state_.training = training; }
  BatchNormState<Scalar>& state() { return state_; }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<Scalar>>& out) override {
    out.push_back({prefix + "gamma", state_.gamma, ParamRole::norm_affine});
    out.push_back({prefix + "beta", state_.beta, ParamRole::norm_affine});
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<Scalar>>& out) override {
    out.push_back({prefix + "running_mean", &state_.running_mean});
    out.push_back({prefix + "running_var", &state_.running_var});
  }

 private:
  BatchNormState<Scalar> state_;
};

/// Integrate-and-fire population; records its spike train in the context.
template <typename Scalar>
class IFNeuron final : public Layer<Scalar> {
 public:
  explicit IFNeuron(IFOptions<Scalar> options = {}) : options_(options) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>& ctx) override {
    IFOptions<Scalar> options = options_;
    options.mode = ctx.spike_mode;
    Tensor<Scalar> spikes = integrate_and_fire(x, ctx.time_steps, options);
    const Index batch = x.dim(0) / ctx.time_steps;
    ctx.spike_trains.push_back({reshape(spikes, {ctx.time_steps, batch, x.numel() / x.dim(0)})});
    return spikes;
  }

  std::string kind() const override { return "if"; }
  const IFOptions<Scalar>& options() const { return options_; }

 private:
  IFOptions<Scalar> options_;
};

template <typename Scalar>
class MaxPool2d final : public Layer<Scalar> {
 public:
  MaxPool2d(Index kernel, Index stride) : kernel_(kernel), stride_(stride) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>&) override {
    return maxpool2d(x, kernel_, stride_);
  }
  std::string kind() const override { return "maxpool2d"; }

 private:
  Index kernel_, stride_;
};

/// Spatial average per step; averaging over time happens on the logits, which
/// is the same map because the classifier that follows is linear.
template <typename Scalar>
class GlobalAvgPool final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>&) override { return global_avg_pool2d(x); }
  std::string kind() const override { return "global_avg_pool"; }
};

template <typename Scalar>
class Flatten final : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>&) override { return flatten(x); }
  std::string kind() const override { return "flatten"; }
};

template <typename Scalar>
class Sequential : public Layer<Scalar> {
 public:
  Sequential() = default;
  explicit Sequential(std::vector<LayerPtr<Scalar>> layers) : layers_(std::move(layers)) {}

  Sequential& add(LayerPtr<Scalar> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>& ctx) override {
    Tensor<Scalar> h = x;
    for (auto& layer : layers_) h = layer->forward(h, ctx);
    return h;
  }

  std::string kind() const override { return "sequential"; }

  void collect_parameters(const std::string& prefix, std::vector<Parameter<Scalar>>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->collect_parameters(prefix + std::to_string(i) + ".", out);
    }
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<Scalar>>& out) override {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      layers_[i]->collect_buffers(prefix + std::to_string(i) + ".", out);
    }
  }
  void set_training(bool training) override {
    for (auto& layer : layers_) layer->set_training(training);
  }
  void visit(const std::function<void(Layer<Scalar>&)>& fn) override {
    fn(*this);
    for (auto& layer : layers_) layer->visit(fn);
  }

  std::size_t size() const { return layers_.size(); }
  Layer<Scalar>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<LayerPtr<Scalar>> layers_;
};

/// Spike-element-wise residual with ADD: out = F(s) + s. With binary input
/// spikes and a spiking body, outputs lie in {0, 1, 2}.
template <typename Scalar>
class SewResidual final : public Layer<Scalar> {
 public:
  explicit SewResidual(std::vector<LayerPtr<Scalar>> body) : body_(std::move(body)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, ForwardContext<Scalar>& ctx) override {
    Tensor<Scalar> fx = body_.forward(x, ctx);
    if (fx.shape() != x.shape()) {
      throw ConfigurationError("SEW block: residual branch " + shape_string(fx.shape()) + " vs shortcut " +
                               shape_string(x.shape()));
    }
    return add(fx, x);
  }

  std::string kind() const override { return "sew_residual"; }
  void collect_parameters(const std::string& prefix, std::vector<Parameter<Scalar>>& out) override {
    body_.collect_parameters(prefix, out);
  }
  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<Scalar>>& out) override {
    body_.collect_buffers(prefix, out);
  }
  void set_training(bool training) override { body_.set_training(training); }
  void visit(const std::function<void(Layer<Scalar>&)>& fn) override {
    fn(*this);
    body_.visit(fn);
  }
  Sequential<Scalar>& body() { return body_; }

 private:
  Sequential<Scalar> body_;
};

}  // namespace spikereg

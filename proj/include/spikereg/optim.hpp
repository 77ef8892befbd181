#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "spikereg/layers.hpp"

namespace spikereg {

enum class OptimizerKind { sgd, adamw };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer_kind(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd;
  double lr = 0.1;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled into the gradient for SGD, decoupled for AdamW.
  double weight_decay = 0.0;

  void validate() const;
};

struct ScheduleConfig {
  double lr_max = 0.1;
  double lr_min = 0.0;
  int t_max = 1;

  void validate() const;
};

/// eta(t) = eta_min + (eta_max - eta_min) (1 + cos(pi t / T_max)) / 2, stepped per epoch.
double cosine_lr(const ScheduleConfig& schedule, int epoch);

/// SGD with momentum and coupled weight decay, or AdamW with decoupled
/// decay. Decay only touches parameters whose role is decay-eligible.
template <typename Scalar>
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, std::vector<Parameter<Scalar>> params)
      : config_(config), params_(std::move(params)) {
    config_.validate();
    for (const auto& p : params_) {
      first_.push_back(Buffer<Scalar>::Zero(p.tensor.numel()));
      if (config_.kind == OptimizerKind::adamw) second_.push_back(Buffer<Scalar>::Zero(p.tensor.numel()));
    }
  }

  void set_lr(double lr) { config_.lr = lr; }
  double lr() const { return config_.lr; }
  std::int64_t step_count() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }
  const std::vector<Parameter<Scalar>>& parameters() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  void step() {
    for (const auto& p : params_) {
      if (!p.tensor.has_grad()) throw UsageError("optimizer step: parameter '" + p.name + "' has no gradient");
    }
    ++steps_;
    if (config_.kind == OptimizerKind::sgd) {
      sgd_step();
    } else {
      adamw_step();
    }
  }

  /// Momentum / moment buffers plus the step counter, by parameter name.
  std::vector<std::pair<std::string, Buffer<Scalar>>> state() const {
    std::vector<std::pair<std::string, Buffer<Scalar>>> out;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.emplace_back("optim." + params_[i].name + ".m1", first_[i]);
      if (!second_.empty()) out.emplace_back("optim." + params_[i].name + ".m2", second_[i]);
    }
    out.emplace_back("optim.step", Buffer<Scalar>::Constant(1, static_cast<Scalar>(steps_)));
    return out;
  }

  void load_state(const std::vector<std::pair<std::string, Buffer<Scalar>>>& state) {
    auto find = [&](const std::string& name) -> const Buffer<Scalar>& {
      for (const auto& [key, value] : state) {
        if (key == name) return value;
      }
      throw UsageError("optimizer state is missing '" + name + "'");
    };
    for (std::size_t i = 0; i < params_.size(); ++i) {
      first_[i] = checked(find("optim." + params_[i].name + ".m1"), first_[i].size(), params_[i].name);
      if (!second_.empty()) second_[i] = checked(find("optim." + params_[i].name + ".m2"), second_[i].size(), params_[i].name);
    }
    steps_ = static_cast<std::int64_t>(find("optim.step")[0]);
  }

 private:
  static Buffer<Scalar> checked(const Buffer<Scalar>& b, Index size, const std::string& name) {
    if (b.size() != size) throw UsageError("optimizer state for '" + name + "' has the wrong size");
    return b;
  }

  void sgd_step() {
    const Scalar lr = static_cast<Scalar>(config_.lr);
    const Scalar mu = static_cast<Scalar>(config_.momentum);
    const Scalar decay = static_cast<Scalar>(config_.weight_decay);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i].tensor.mutable_values();
      Buffer<Scalar> g = params_[i].tensor.grad();
      if (decay != Scalar(0) && params_[i].decays()) g += decay * w;
      first_[i] = mu * first_[i] + g;
      w -= lr * first_[i];
    }
  }

  void adamw_step() {
    const Scalar lr = static_cast<Scalar>(config_.lr);
    const Scalar b1 = static_cast<Scalar>(config_.beta1);
    const Scalar b2 = static_cast<Scalar>(config_.beta2);
    const Scalar eps = static_cast<Scalar>(config_.eps);
    const Scalar decay = static_cast<Scalar>(config_.weight_decay);
    const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(steps_));
    const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(steps_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& w = params_[i].tensor.mutable_values();
      const auto& g = params_[i].tensor.grad();
      first_[i] = b1 * first_[i] + (Scalar(1) - b1) * g;
      second_[i] = b2 * second_[i] + (Scalar(1) - b2) * g.square();
      Buffer<Scalar> update = (first_[i] / c1) / ((second_[i] / c2).sqrt() + eps);
      if (decay != Scalar(0) && params_[i].decays()) update += decay * w;
      w -= lr * update;
    }
  }

  OptimizerConfig config_;
  std::vector<Parameter<Scalar>> params_;
  std::vector<Buffer<Scalar>> first_;
  std::vector<Buffer<Scalar>> second_;
  std::int64_t steps_ = 0;
};

}  // namespace spikereg

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "spikereg/layers.hpp"
#include "spikereg/ops.hpp"

namespace spikereg {

enum class WeightDecayMode { none, loss_term, optimizer_coupled, optimizer_decoupled };
enum class PenaltyOrder { square, first };

std::string to_string(WeightDecayMode m);
std::string to_string(PenaltyOrder o);
WeightDecayMode parse_weight_decay_mode(const std::string& name);
PenaltyOrder parse_penalty_order(const std::string& name);

struct RegularizerConfig {
  WeightDecayMode weight_decay_mode = WeightDecayMode::none;
  double weight_decay = 0.0;
  double spike_penalty_weight = 0.0;
  PenaltyOrder spike_penalty_order = PenaltyOrder::square;

  void validate() const;
  // Coefficient on ||w||^2 inside the loss; zero unless decay is a loss term.
  double loss_weight_decay() const { return weight_decay_mode == WeightDecayMode::loss_term ? weight_decay : 0.0; }
};

/// Scalar parts of one minibatch objective. `total` is composed exactly as
/// task_loss + l2_term + spike_term with l2_term = lambda * l2_raw and
/// spike_term = penalty_weight * spike_raw.
struct LossReport {
  double task_loss = 0;
  double l2_raw = 0;
  double spike_raw = 0;
  double l2_term = 0;
  double spike_term = 0;
  double total = 0;
  double spike_rate = 0;
};

/// Softmax cross-entropy of time-averaged logits[N, B, C], averaged over the batch.
template <typename Scalar>
Tensor<Scalar> cross_entropy_time_mean(const Tensor<Scalar>& logits, std::span<const int> labels) {
  if (logits.rank() != 3) {
    throw ConfigurationError("cross_entropy_time_mean: logits must be [N, B, C], got " + shape_string(logits.shape()));
  }
  const Index steps = logits.dim(0), batch = logits.dim(1), classes = logits.dim(2);
  if (static_cast<Index>(labels.size()) != batch) {
    throw ConfigurationError("cross_entropy_time_mean: " + std::to_string(labels.size()) + " labels for batch " +
                             std::to_string(batch));
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      throw DataError("label " + std::to_string(labels[i]) + " at batch index " + std::to_string(i) +
                      " outside [0, " + std::to_string(classes) + ")");
    }
  }
  RowMatrix<Scalar> avg = RowMatrix<Scalar>::Zero(batch, classes);
  for (Index t = 0; t < steps; ++t) {
    avg += detail::ConstMatMap<Scalar>(logits.values().data() + t * batch * classes, batch, classes);
  }
  avg /= static_cast<Scalar>(steps);
  RowMatrix<Scalar> probs(batch, classes);
  Scalar loss = 0;
  for (Index b = 0; b < batch; ++b) {
    const Scalar top = avg.row(b).maxCoeff();
    auto shifted = (avg.row(b).array() - top).eval();
    const Scalar log_z = std::log(shifted.exp().sum());
    probs.row(b) = (shifted - log_z).exp().matrix();
    loss -= shifted[labels[static_cast<std::size_t>(b)]] - log_z;
  }
  loss /= static_cast<Scalar>(batch);
  std::vector<int> targets(labels.begin(), labels.end());
  return make_result<Scalar>(
      "cross_entropy_time_mean", {1}, Buffer<Scalar>::Constant(1, loss), {logits.node()},
      [probs = std::move(probs), targets = std::move(targets), steps, batch, classes](Node<Scalar>& self) {
        const auto& in = self.inputs[0];
        if (!in->requires_grad) return;
        RowMatrix<Scalar> d = probs;
        for (Index b = 0; b < batch; ++b) d(b, targets[static_cast<std::size_t>(b)]) -= Scalar(1);
        d *= self.grad[0] / static_cast<Scalar>(batch * steps);
        auto& dx = in->grad_buffer();
        for (Index t = 0; t < steps; ++t) {
          detail::MatMap<Scalar>(dx.data() + t * batch * classes, batch, classes) += d;
        }
      });
}

/// Class index with the largest time-averaged logit for every sample.
template <typename Scalar>
std::vector<int> predict(const Tensor<Scalar>& logits) {
  const Index steps = logits.dim(0), batch = logits.dim(1), classes = logits.dim(2);
  RowMatrix<Scalar> avg = RowMatrix<Scalar>::Zero(batch, classes);
  for (Index t = 0; t < steps; ++t) {
    avg += detail::ConstMatMap<Scalar>(logits.values().data() + t * batch * classes, batch, classes);
  }
  std::vector<int> out(static_cast<std::size_t>(batch));
  for (Index b = 0; b < batch; ++b) {
    Index best = 0;
    avg.row(b).maxCoeff(&best);
    out[static_cast<std::size_t>(b)] = static_cast<int>(best);
  }
  return out;
}

/// Sum of squared entries of every decay-eligible parameter (biases and norm
/// affines excluded).
template <typename Scalar>
Tensor<Scalar> l2_penalty(const std::vector<Parameter<Scalar>>& params) {
  Tensor<Scalar> total;
  for (const auto& p : params) {
    if (!p.decays()) continue;
    Tensor<Scalar> term = sum(square(p.tensor));
    total = total.defined() ? add(total, term) : term;
  }
  return total.defined() ? total : Tensor<Scalar>::zeros({1});
}

/// Mean over layers of L_r = 1/(2KN) sum_n sum_k S_k[n]^2 (or S_k[n] for the
/// first-order variant), also averaged over the batch. With the square order a
/// silent neuron (S = 0) receives no gradient.
template <typename Scalar>
Tensor<Scalar> spike_penalty(const std::vector<SpikeTrain<Scalar>>& trains, PenaltyOrder order) {
  if (trains.empty()) throw UsageError("spike_penalty: no spike trains recorded");
  Tensor<Scalar> total;
  for (const auto& train : trains) {
    const Tensor<Scalar>& s = train.values;
    Tensor<Scalar> layer = scale(mean(order == PenaltyOrder::square ? square(s) : s), Scalar(0.5));
    total = total.defined() ? add(total, layer) : layer;
  }
  return scale(total, Scalar(1) / static_cast<Scalar>(trains.size()));
}

/// Running (sum, count) over spike entries, for rates pooled across batches.
struct SpikeTally {
  double spikes = 0;
  double entries = 0;

  template <typename Scalar>
  void add(const std::vector<SpikeTrain<Scalar>>& trains) {
    for (const auto& t : trains) {
      spikes += static_cast<double>(t.values.values().sum());
      entries += static_cast<double>(t.values.numel());
    }
  }
  double rate() const { return entries > 0 ? spikes / entries : 0.0; }
};

/// Mean spike value over all layers, neurons, time steps and samples.
template <typename Scalar>
double spike_rate(const std::vector<SpikeTrain<Scalar>>& trains) {
  if (trains.empty()) throw UsageError("spike_rate: no spike trains recorded");
  SpikeTally tally;
  tally.add(trains);
  return tally.rate();
}

template <typename Scalar>
struct Objective {
  Tensor<Scalar> total;
  LossReport report;
};

/// Task loss plus the configured penalties, as one differentiable scalar.
template <typename Scalar>
Objective<Scalar> compose_objective(const Tensor<Scalar>& logits, std::span<const int> labels,
                                    const std::vector<SpikeTrain<Scalar>>& trains,
                                    const std::vector<Parameter<Scalar>>& params, const RegularizerConfig& reg) {
  Objective<Scalar> out;
  Tensor<Scalar> task = cross_entropy_time_mean(logits, labels);
  out.total = task;
  out.report.task_loss = static_cast<double>(task.item());
  const double lambda = reg.loss_weight_decay();
  if (lambda > 0) {
    Tensor<Scalar> l2 = l2_penalty(params);
    out.report.l2_raw = static_cast<double>(l2.item());
    out.total = add(out.total, scale(l2, static_cast<Scalar>(lambda)));
  }
  if (!trains.empty()) {
    out.report.spike_rate = spike_rate(trains);
    if (reg.spike_penalty_weight > 0) {
      Tensor<Scalar> penalty = spike_penalty(trains, reg.spike_penalty_order);
      out.report.spike_raw = static_cast<double>(penalty.item());
      out.total = add(out.total, scale(penalty, static_cast<Scalar>(reg.spike_penalty_weight)));
    }
  }
  out.report.l2_term = lambda * out.report.l2_raw;
  out.report.spike_term = reg.spike_penalty_weight * out.report.spike_raw;
  out.report.total = static_cast<double>(out.total.item());
  return out;
}

}  // namespace spikereg

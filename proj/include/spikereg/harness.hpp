#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spikereg/architectures.hpp"
#include "spikereg/checkpoint.hpp"
#include "spikereg/config.hpp"
#include "spikereg/data.hpp"
#include "spikereg/metrics.hpp"
#include "spikereg/objectives.hpp"
#include "spikereg/optim.hpp"

namespace spikereg {

struct EpochStats {
  double train_loss = 0;
  double train_accuracy = 0;
  double train_spike_rate = 0;
  double l2_term = 0;
  double spike_term = 0;
};

struct EvalResult {
  double accuracy = 0;
  double spike_rate = 0;
};

/// Model + optimizer + regularizers of one run.
template <typename Scalar>
class Trainer {
 public:
  explicit Trainer(const ExperimentConfig& config)
      : config_(config),
        model_(build_network<Scalar>(config.network())),
        optimizer_(config.optimizer_settings(), model_.parameters()) {
    config_.validate();
  }

  LayerStack<Scalar>& model() { return model_; }
  Optimizer<Scalar>& optimizer() { return optimizer_; }
  const ExperimentConfig& config() const { return config_; }

  /// One pass over `data`: forward, objective, backward and an optimizer step
  /// per minibatch. The visiting order is a seeded shuffle keyed on the epoch.
  EpochStats train_epoch(const std::vector<DatasetRecord>& data, int epoch) {
    if (data.empty()) throw UsageError("train_epoch: empty training set");
    model_.set_training(true);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{static_cast<std::uint64_t>(config_.run.seed), static_cast<std::uint64_t>(epoch), std::uint64_t{0x7a11}};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);

    EpochStats stats;
    SpikeTally tally;
    std::size_t correct = 0;
    std::vector<DatasetRecord> augmented;
    const std::size_t batch = static_cast<std::size_t>(config_.run.batch_size);
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + batch);
      std::vector<const DatasetRecord*> records;
      std::vector<int> labels;
      augmented.clear();
      augmented.reserve(end - begin);  // records[] points into it
      for (std::size_t i = begin; i < end; ++i) {
        const DatasetRecord& r = data[order[i]];
        if (config_.run.augment) {
          augmented.push_back(augment(r, rng));
          records.push_back(&augmented.back());
        } else {
          records.push_back(&r);
        }
        labels.push_back(r.label);
      }
      Tensor<Scalar> input = encode_batch<Scalar>(records, config_.run.time_steps, config_.run.normalization);
      NetworkOutput<Scalar> out = model_.forward(input);
      Objective<Scalar> objective =
          compose_objective(out.logits, labels, out.spike_trains, model_.parameters(), config_.regularizer);
      if (!std::isfinite(objective.report.total)) {
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + ", lr " + format_g6(optimizer_.lr()));
      }
      optimizer_.zero_grad();
      backward(objective.total);
      optimizer_.step();

      const double weight = static_cast<double>(end - begin);
      stats.train_loss += objective.report.task_loss * weight;
      stats.l2_term += objective.report.l2_term * weight;
      stats.spike_term += objective.report.spike_term * weight;
      tally.add(out.spike_trains);
      const auto predicted = predict(out.logits);
      for (std::size_t i = 0; i < labels.size(); ++i) correct += predicted[i] == labels[i] ? 1 : 0;
    }
    const double n = static_cast<double>(data.size());
    stats.train_loss /= n;
    stats.l2_term /= n;
    stats.spike_term /= n;
    stats.train_accuracy = 100.0 * static_cast<double>(correct) / n;
    stats.train_spike_rate = tally.rate();
    return stats;
  }

  /// Accuracy (%) and spike rate with running statistics; mutates nothing.
  EvalResult evaluate(const std::vector<DatasetRecord>& data) {
    if (data.empty()) throw UsageError("evaluate: empty dataset");
    const bool was_training = model_.training();
    model_.set_training(false);
    NoGradGuard guard;
    SpikeTally tally;
    std::size_t correct = 0;
    const std::size_t batch = static_cast<std::size_t>(config_.run.batch_size);
    for (std::size_t begin = 0; begin < data.size(); begin += batch) {
      const std::size_t end = std::min(data.size(), begin + batch);
      std::vector<const DatasetRecord*> records;
      for (std::size_t i = begin; i < end; ++i) records.push_back(&data[i]);
      NetworkOutput<Scalar> out =
          model_.forward(encode_batch<Scalar>(records, config_.run.time_steps, config_.run.normalization));
      tally.add(out.spike_trains);
      const auto predicted = predict(out.logits);
      for (std::size_t i = 0; i < records.size(); ++i) correct += predicted[i] == records[i]->label ? 1 : 0;
    }
    model_.set_training(was_training);
    return {100.0 * static_cast<double>(correct) / static_cast<double>(data.size()), tally.rate()};
  }

  Checkpoint checkpoint(std::uint64_t epoch) {
    Checkpoint ck;
    ck.epoch = epoch;
    ck.config_text = to_config_text(config_);
    for (const auto& p : model_.parameters()) ck.tensors.push_back(to_record(p.name, p.tensor.shape(), p.tensor.values()));
    for (const auto& b : model_.buffers()) ck.tensors.push_back(to_record(b.name, {b.data->size()}, *b.data));
    for (const auto& [name, value] : optimizer_.state()) ck.tensors.push_back(to_record(name, {value.size()}, value));
    return ck;
  }

  void restore(const Checkpoint& ck) {
    for (auto& p : model_.parameters()) {
      const auto& t = ck.find(p.name);
      if (t.shape != p.tensor.shape()) throw FormatError("checkpoint tensor '" + p.name + "' has the wrong shape");
      p.tensor.mutable_values() = from_record(t);
    }
    for (auto& b : model_.buffers()) {
      const auto& t = ck.find(b.name);
      if (static_cast<Index>(t.values.size()) != b.data->size()) {
        throw FormatError("checkpoint buffer '" + b.name + "' has the wrong size");
      }
      *b.data = from_record(t);
    }
    std::vector<std::pair<std::string, Buffer<Scalar>>> state;
    for (const auto& t : ck.tensors) {
      if (t.name.rfind("optim.", 0) == 0) state.emplace_back(t.name, from_record(t));
    }
    optimizer_.load_state(state);
  }

 private:
  static CheckpointTensor to_record(const std::string& name, const Shape& shape, const Buffer<Scalar>& values) {
    CheckpointTensor t{name, shape, std::vector<double>(static_cast<std::size_t>(values.size()))};
    for (Index i = 0; i < values.size(); ++i) t.values[static_cast<std::size_t>(i)] = static_cast<double>(values[i]);
    return t;
  }
  static Buffer<Scalar> from_record(const CheckpointTensor& t) {
    Buffer<Scalar> out(static_cast<Index>(t.values.size()));
    for (Index i = 0; i < out.size(); ++i) out[i] = static_cast<Scalar>(t.values[static_cast<std::size_t>(i)]);
    return out;
  }

  ExperimentConfig config_;
  LayerStack<Scalar> model_;
  Optimizer<Scalar> optimizer_;
};

struct RunResult {
  std::vector<MetricsRow> rows;
  double best_train_accuracy = 0;
  double best_test_accuracy = 0;
  const MetricsRow& final_row() const { return rows.back(); }
};

/// Full training run: cosine-scheduled epochs, a metrics row per epoch. When
/// `output_dir` is set, writes metrics.csv, run_metadata.ini and
/// checkpoint.bin there.
RunResult run_experiment(const ExperimentConfig& config, const DataSplits& data,
                         const std::optional<std::filesystem::path>& output_dir = std::nullopt);

enum class SweepAxis { weight_decay, spike_penalty_weight, norm_method, penalty_order };

std::string to_string(SweepAxis axis);
SweepAxis parse_sweep_axis(const std::string& name);

struct SweepCell {
  std::string value;          // axis value as given
  double penalty_weight = 0;  // spike penalty weight of the cell
  RunResult result;
};

struct SweepResult {
  SweepAxis axis;
  std::vector<SweepCell> cells;
};

/// Applies one axis value to a copy of `base`.
ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const std::string& value);

/// Throws ConfigurationError for an empty or duplicated value list, penalty
/// weights on an axis other than penalty_order, or any invalid cell config.
void validate_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                    const std::vector<double>& penalty_weights = {});

/// One full run per value with the same seed. For the penalty-order axis,
/// `penalty_weights` (when non-empty) crosses each order with every weight.
/// Writes <out>/<axis>=<value>[/w=<weight>]/metrics.csv, <out>/summary.csv,
/// and for penalty-order sweeps <out>/spike_rate_vs_accuracy.csv.
SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                      const DataSplits& data, const std::optional<std::filesystem::path>& output_dir,
                      const std::vector<double>& penalty_weights = {});

std::string sweep_summary_csv(const SweepResult& sweep);
std::string spike_rate_accuracy_csv(const SweepResult& sweep);

/// Loads the train/test subsets named by the run block.
DataSplits load_run_data(const RunConfig& run);

EvalResult evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<DatasetRecord>& data);

/// Framework choices (encoding, steps, batch, neuron, loss) as ini comment lines.
std::string framework_choices_note(const ExperimentConfig& config);

}  // namespace spikereg

#include "spikereg/harness.hpp"

#include <fmt/format.h>

#include <set>

namespace spikereg {

namespace {

template <typename Scalar>
RunResult run_with(const ExperimentConfig& config, const DataSplits& data,
                   const std::optional<std::filesystem::path>& output_dir) {
  if (data.train.empty() || data.test.empty()) throw UsageError("run_experiment: empty train or test split");
  Trainer<Scalar> trainer(config);
  if (config.data_dependent_init) {
    const std::size_t n = std::min(data.train.size(), static_cast<std::size_t>(config.run.batch_size));
    std::vector<const DatasetRecord*> records;
    for (std::size_t i = 0; i < n; ++i) records.push_back(&data.train[i]);
    trainer.model().data_dependent_init(
        encode_batch<Scalar>(records, config.run.time_steps, config.run.normalization));
  }
  const ScheduleConfig schedule = config.resolved_schedule();
  RunResult result;
  for (int epoch = 1; epoch <= config.run.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const double lr = cosine_lr(schedule, std::min(epoch - 1, schedule.t_max));
    trainer.optimizer().set_lr(lr);
    const EpochStats stats = trainer.train_epoch(data.train, epoch);
    const EvalResult test = trainer.evaluate(data.test);
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

    MetricsRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = stats.train_loss;
    row.train_accuracy = stats.train_accuracy;
    row.test_accuracy = test.accuracy;
    row.train_spike_rate = stats.train_spike_rate;
    row.test_spike_rate = test.spike_rate;
    row.l2_term = stats.l2_term;
    row.spike_term = stats.spike_term;
    row.wall_seconds = config.run.record_wall_time ? elapsed.count() : 0.0;
    result.rows.push_back(row);
    result.best_train_accuracy = std::max(result.best_train_accuracy, row.train_accuracy);
    result.best_test_accuracy = std::max(result.best_test_accuracy, row.test_accuracy);
    if (output_dir) write_metrics_csv(result.rows, *output_dir / "metrics.csv");
  }
  if (output_dir) {
    write_text_file(*output_dir / "run_metadata.ini", to_config_text(config) + "\n" + framework_choices_note(config));
    save_checkpoint(trainer.checkpoint(static_cast<std::uint64_t>(config.run.epochs)), *output_dir / "checkpoint.bin");
  }
  return result;
}

template <typename Scalar>
EvalResult evaluate_with(const ExperimentConfig& config, const Checkpoint& checkpoint,
                         const std::vector<DatasetRecord>& data) {
  Trainer<Scalar> trainer(config);
  trainer.restore(checkpoint);
  return trainer.evaluate(data);
}

std::string cell_directory(SweepAxis axis, const std::string& value) { return to_string(axis) + "=" + value; }

}  // namespace

RunResult run_experiment(const ExperimentConfig& config, const DataSplits& data,
                         const std::optional<std::filesystem::path>& output_dir) {
  config.validate();
  if (config.run.precision == Precision::f64) return run_with<double>(config, data, output_dir);
  return run_with<float>(config, data, output_dir);
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::weight_decay:
      return "weight_decay";
    case SweepAxis::spike_penalty_weight:
      return "spike_penalty_weight";
    case SweepAxis::norm_method:
      return "norm_method";
    case SweepAxis::penalty_order:
      return "penalty_order";
  }
  return "?";
}

SweepAxis parse_sweep_axis(const std::string& name) {
  for (auto a : {SweepAxis::weight_decay, SweepAxis::spike_penalty_weight, SweepAxis::norm_method,
                 SweepAxis::penalty_order}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigurationError("unknown sweep axis '" + name + "'");
}

ExperimentConfig apply_axis(const ExperimentConfig& base, SweepAxis axis, const std::string& value) {
  ExperimentConfig cfg = base;
  auto number = [&]() {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(value, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != value.size()) {
      throw ConfigurationError("sweep value '" + value + "' is not a number");
    }
    return v;
  };
  switch (axis) {
    case SweepAxis::weight_decay:
      cfg.regularizer.weight_decay = number();
      if (cfg.regularizer.weight_decay_mode == WeightDecayMode::none) {
        cfg.regularizer.weight_decay_mode = cfg.optimizer.kind == OptimizerKind::sgd
                                                ? WeightDecayMode::optimizer_coupled
                                                : WeightDecayMode::optimizer_decoupled;
      }
      break;
    case SweepAxis::spike_penalty_weight:
      cfg.regularizer.spike_penalty_weight = number();
      break;
    case SweepAxis::norm_method:
      cfg.architecture.norm = parse_norm_method(value);
      break;
    case SweepAxis::penalty_order:
      cfg.regularizer.spike_penalty_order = parse_penalty_order(value);
      break;
  }
  cfg.validate();
  return cfg;
}

void validate_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                    const std::vector<double>& penalty_weights) {
  if (values.empty()) throw ConfigurationError("sweep needs at least one value");
  std::set<std::string> seen;
  for (const auto& v : values) {
    if (!seen.insert(v).second) throw ConfigurationError("duplicate sweep value '" + v + "'");
  }
  if (!penalty_weights.empty() && axis != SweepAxis::penalty_order) {
    throw ConfigurationError("penalty weights can only be crossed with the penalty_order axis");
  }
  std::set<double> seen_weights;
  for (double w : penalty_weights) {
    if (!seen_weights.insert(w).second) throw ConfigurationError("duplicate penalty weight " + format_g6(w));
  }
  for (const auto& v : values) {
    ExperimentConfig cell = apply_axis(base, axis, v);
    for (double w : penalty_weights) {
      cell.regularizer.spike_penalty_weight = w;
      cell.validate();
    }
  }
}

SweepResult run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::vector<std::string>& values,
                      const DataSplits& data, const std::optional<std::filesystem::path>& output_dir,
                      const std::vector<double>& penalty_weights) {
  validate_sweep(base, axis, values, penalty_weights);

  SweepResult sweep{axis, {}};
  for (const auto& value : values) {
    const ExperimentConfig cell_config = apply_axis(base, axis, value);
    std::vector<double> weights = penalty_weights;
    if (weights.empty()) weights.push_back(cell_config.regularizer.spike_penalty_weight);
    for (double w : weights) {
      ExperimentConfig cfg = cell_config;
      cfg.regularizer.spike_penalty_weight = w;
      std::optional<std::filesystem::path> dir;
      if (output_dir) {
        dir = *output_dir / cell_directory(axis, value);
        if (!penalty_weights.empty()) *dir /= "w=" + format_g6(w);
        cfg.run.output_dir = dir->string();
      }
      sweep.cells.push_back({value, w, run_experiment(cfg, data, dir)});
    }
  }
  if (output_dir) {
    write_text_file(*output_dir / "summary.csv", sweep_summary_csv(sweep));
    if (axis == SweepAxis::penalty_order) {
      write_text_file(*output_dir / "spike_rate_vs_accuracy.csv", spike_rate_accuracy_csv(sweep));
    }
  }
  return sweep;
}

std::string sweep_summary_csv(const SweepResult& sweep) {
  std::string out = to_string(sweep.axis) +
                    ",spike_penalty_weight,best_train_accuracy,final_train_accuracy,best_test_accuracy,"
                    "final_test_accuracy,final_train_spike_rate,final_test_spike_rate\n";
  for (const auto& cell : sweep.cells) {
    const auto& last = cell.result.final_row();
    out += fmt::format("{},{},{},{},{},{},{},{}\n", cell.value, format_g6(cell.penalty_weight),
                       format_g6(cell.result.best_train_accuracy), format_g6(last.train_accuracy),
                       format_g6(cell.result.best_test_accuracy), format_g6(last.test_accuracy),
                       format_g6(last.train_spike_rate), format_g6(last.test_spike_rate));
  }
  return out;
}

std::string spike_rate_accuracy_csv(const SweepResult& sweep) {
  std::string out = "penalty_order,spike_penalty_weight,train_spike_rate,train_accuracy,test_spike_rate,test_accuracy\n";
  for (const auto& cell : sweep.cells) {
    const auto& last = cell.result.final_row();
    out += fmt::format("{},{},{},{},{},{}\n", cell.value, format_g6(cell.penalty_weight),
                       format_g6(last.train_spike_rate), format_g6(last.train_accuracy),
                       format_g6(last.test_spike_rate), format_g6(last.test_accuracy));
  }
  return out;
}

DataSplits load_run_data(const RunConfig& run) {
  if (run.data_dir.empty()) {
    throw ConfigurationError("no data directory: set run.data_dir, " + std::string(kDataDirEnv) + " or --data");
  }
  return load_cifar10_splits(run.data_dir, run.train_subset_size, run.test_subset_size);
}

EvalResult evaluate_checkpoint(const Checkpoint& checkpoint, const std::vector<DatasetRecord>& data) {
  const ExperimentConfig config = parse_config(checkpoint.config_text);
  if (config.run.precision == Precision::f64) return evaluate_with<double>(config, checkpoint, data);
  return evaluate_with<float>(config, checkpoint, data);
}

std::string framework_choices_note(const ExperimentConfig& config) {
  std::string out = "; Framework choices (defaults of this implementation, adjustable in the config):\n";
  out += "; input_encoding = constant-current (standardized image repeated every step)\n";
  out += fmt::format("; time_steps = {}\n", config.run.time_steps);
  out += fmt::format("; batch_size = {}\n", config.run.batch_size);
  out += fmt::format("; augmentation = {}\n", config.run.augment ? "random-crop-pad4+hflip" : "off");
  out += "; neuron = integrate-and-fire, threshold 1.0, hard reset to 0 (reset detached)\n";
  out += "; surrogate = arctan, alpha 2.0\n";
  out += "; task_loss = softmax cross-entropy on time-averaged logits\n";
  out += "; spike_penalty_layers = all IF layers, averaged over layers\n";
  out += "; reported_accuracy = final and best epoch (see metrics.csv)\n";
  return out;
}

}  // namespace spikereg

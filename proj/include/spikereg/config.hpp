#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "spikereg/architectures.hpp"
#include "spikereg/data.hpp"
#include "spikereg/objectives.hpp"
#include "spikereg/optim.hpp"

namespace spikereg {

enum class Precision { f32, f64 };

struct RunConfig {
  int epochs = 20;
  int batch_size = 64;
  int time_steps = 4;
  std::uint64_t seed = 0;
  std::size_t train_subset_size = 2000;
  std::size_t test_subset_size = 1000;
  std::string data_dir;
  std::string output_dir = "runs/default";
  bool augment = true;
  Precision precision = Precision::f32;
  // When false, the wall_seconds column is written as 0 so that metrics files
  // are byte-comparable across runs.
  bool record_wall_time = true;
  ChannelNormalization normalization{};
};

/// One experiment cell. The text form is a sectioned key-value file with the
/// sections [architecture], [optimizer], [regularizer], [schedule] and [run];
/// unknown sections or keys are rejected.
struct ExperimentConfig {
  NetworkConfig architecture{};
  OptimizerConfig optimizer{};  // weight_decay here is ignored, see regularizer
  RegularizerConfig regularizer{};
  ScheduleConfig schedule{};
  std::optional<int> schedule_t_max;  // defaults to run.epochs
  bool data_dependent_init = false;   // weight-norm variants only
  RunConfig run{};

  /// Network config with the run-level seed and time steps folded in.
  NetworkConfig network() const;
  /// Optimizer settings with the weight decay routed in when the decay mode
  /// says the optimizer applies it.
  OptimizerConfig optimizer_settings() const;
  ScheduleConfig resolved_schedule() const;
  void validate() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string to_config_text(const ExperimentConfig& config);

/// Resolution order for the data directory: command-line flag, then the
/// SPIKEREG_DATA_DIR environment variable, then the config file.
std::string resolve_data_dir(const std::optional<std::string>& cli_flag, const std::string& from_config);

inline constexpr const char* kDataDirEnv = "SPIKEREG_DATA_DIR";

}  // namespace spikereg

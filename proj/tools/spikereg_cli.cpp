#include <CLI11.hpp>

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spikereg/harness.hpp"

namespace {

using namespace spikereg;

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) throw ConfigurationError("empty entry in list '" + text + "'");
    out.push_back(item);
  }
  return out;
}

double parse_weight(const std::string& text) {
  double value = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || end != text.data() + text.size() || !(value >= 0)) {
    throw ConfigurationError("penalty weight '" + text + "' is not a non-negative number");
  }
  return value;
}

ExperimentConfig prepare(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                         const std::optional<std::string>& out, const std::optional<std::string>& data) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.run.seed = *seed;
  if (out) cfg.run.output_dir = *out;
  cfg.run.data_dir = resolve_data_dir(data, cfg.run.data_dir);
  cfg.validate();
  return cfg;
}

void print_row(const MetricsRow& r) {
  std::cout << "epoch " << r.epoch << "  lr " << format_g6(r.lr) << "  loss " << format_g6(r.train_loss)
            << "  train " << format_g6(r.train_accuracy) << "%  test " << format_g6(r.test_accuracy)
            << "%  rate " << format_g6(r.test_spike_rate) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Surrogate-gradient spiking network training"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, axis_name, values_text, weights_text, split = "test";
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out, data;

  auto* train = app.add_subcommand("train", "train one configuration");
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--seed", seed, "override run.seed");
  train->add_option("--out", out, "output directory");
  train->add_option("--data", data, "CIFAR-10 binary directory");

  auto* sweep = app.add_subcommand("sweep", "run one configuration per axis value");
  sweep->add_option("--config", config_path, "base config file")->required();
  sweep->add_option("--axis", axis_name, "weight_decay | spike_penalty_weight | norm_method | penalty_order")
      ->required();
  sweep->add_option("--values", values_text, "comma-separated axis values")->required();
  sweep->add_option("--penalty-weights", weights_text, "comma-separated weights crossed with penalty_order");
  sweep->add_option("--seed", seed, "override run.seed");
  sweep->add_option("--out", out, "output directory");
  sweep->add_option("--data", data, "CIFAR-10 binary directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--split", split, "train | test")->check(CLI::IsMember({"train", "test"}));
  eval->add_option("--data", data, "CIFAR-10 binary directory");

  std::size_t synth_train = 2000, synth_test = 1000;
  auto* synth = app.add_subcommand("synthetic", "write a small CIFAR-10-format dataset of noisy class prototypes");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--train", synth_train, "training records");
  synth->add_option("--test", synth_test, "test records");
  synth->add_option("--seed", seed, "noise seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << " (see --help)\n";
    return EXIT_FAILURE;
  }

  try {
    if (*train) {
      const ExperimentConfig cfg = prepare(config_path, seed, out, data);
      const DataSplits splits = load_run_data(cfg.run);
      const RunResult result = run_experiment(cfg, splits, std::filesystem::path(cfg.run.output_dir));
      for (const auto& r : result.rows) print_row(r);
      std::cout << "wrote " << cfg.run.output_dir << "\n";
    } else if (*sweep) {
      const SweepAxis axis = parse_sweep_axis(axis_name);
      const std::vector<std::string> values = split_list(values_text);
      std::vector<double> weights;
      if (!weights_text.empty()) {
        for (const auto& w : split_list(weights_text)) weights.push_back(parse_weight(w));
      }
      const ExperimentConfig cfg = prepare(config_path, seed, out, data);
      validate_sweep(cfg, axis, values, weights);
      const DataSplits splits = load_run_data(cfg.run);
      const SweepResult result =
          run_sweep(cfg, axis, values, splits, std::filesystem::path(cfg.run.output_dir), weights);
      std::cout << sweep_summary_csv(result);
    } else if (*eval) {
      const Checkpoint ck = load_checkpoint(checkpoint_path);
      ExperimentConfig cfg = parse_config(ck.config_text);
      cfg.run.data_dir = resolve_data_dir(data, cfg.run.data_dir);
      const DataSplits splits = load_run_data(cfg.run);
      const EvalResult r = evaluate_checkpoint(ck, split == "train" ? splits.train : splits.test);
      std::cout << split << " accuracy " << format_g6(r.accuracy) << "%  spike rate " << format_g6(r.spike_rate)
                << "\n";
    } else if (*synth) {
      write_synthetic_cifar10(*out, synth_train, synth_test, seed.value_or(0));
      std::cout << "wrote " << *out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}

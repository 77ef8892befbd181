#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace spikereg {

/// One epoch of a run. Accuracies are percentages, spike rates fractions.
struct MetricsRow {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_accuracy = 0;
  double test_accuracy = 0;
  double train_spike_rate = 0;
  double test_spike_rate = 0;
  double l2_term = 0;
  double spike_term = 0;
  double wall_seconds = 0;
};

inline constexpr const char* kMetricsHeader =
    "epoch,lr,train_loss,train_accuracy,test_accuracy,train_spike_rate,test_spike_rate,l2_term,spike_term,"
    "wall_seconds";

/// Six significant digits, the precision of every float in the CSV outputs.
std::string format_g6(double value);

std::string metrics_csv(const std::vector<MetricsRow>& rows);

/// Header plus one newline-terminated row per epoch. Empty input is a UsageError.
void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path);

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace spikereg

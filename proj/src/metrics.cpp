#include "spikereg/metrics.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

#include "spikereg/error.hpp"

namespace spikereg {

std::string format_g6(double value) { return fmt::format("{:.6g}", value); }

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.epoch, format_g6(r.lr), format_g6(r.train_loss),
                       format_g6(r.train_accuracy), format_g6(r.test_accuracy), format_g6(r.train_spike_rate),
                       format_g6(r.test_spike_rate), format_g6(r.l2_term), format_g6(r.spike_term),
                       format_g6(r.wall_seconds));
  }
  return out;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::filesystem::path& path) {
  if (rows.empty()) throw UsageError("write_metrics_csv: no rows to write");
  write_text_file(path, metrics_csv(rows));
}

std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) {
    throw FormatError(path.string() + ": unexpected metrics header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    MetricsRow r;
    char comma = 0;
    fields >> r.epoch >> comma >> r.lr >> comma >> r.train_loss >> comma >> r.train_accuracy >> comma >>
        r.test_accuracy >> comma >> r.train_spike_rate >> comma >> r.test_spike_rate >> comma >> r.l2_term >> comma >>
        r.spike_term >> comma >> r.wall_seconds;
    if (!fields) throw FormatError(path.string() + ": malformed row '" + line + "'");
    rows.push_back(r);
  }
  return rows;
}

}  // namespace spikereg

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <map>

#include "spikereg/checkpoint.hpp"
#include "spikereg/config.hpp"
#include "spikereg/data.hpp"
#include "spikereg/metrics.hpp"

using namespace spikereg;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / (std::string("spikereg_") + info->test_suite_name() + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Cifar, SingleZeroRecord) {
  TempDir dir;
  write_bytes(dir.path() / "one.bin", std::vector<char>(3073, 0));
  auto records = load_cifar10_binary(dir.path() / "one.bin");
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].label, 0);
  for (auto p : records[0].pixels) EXPECT_EQ(p, 0);
}

TEST(Cifar, WrongLengthIsFormatErrorWithByteCounts) {
  TempDir dir;
  write_bytes(dir.path() / "bad.bin", std::vector<char>(3074, 0));
  try {
    load_cifar10_binary(dir.path() / "bad.bin");
    FAIL();
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("3074"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3073"), std::string::npos) << msg;
  }
  write_bytes(dir.path() / "empty.bin", {});
  EXPECT_THROW(load_cifar10_binary(dir.path() / "empty.bin"), FormatError);
  EXPECT_THROW(load_cifar10_binary(dir.path() / "missing.bin"), IoError);
}

TEST(Cifar, BadLabelNamesRecord) {
  TempDir dir;
  std::vector<char> bytes(3 * 3073, 0);
  bytes[2 * 3073] = 11;
  write_bytes(dir.path() / "corrupt.bin", bytes);
  try {
    load_cifar10_binary(dir.path() / "corrupt.bin");
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("record 2"), std::string::npos) << e.what();
  }
}

TEST(Cifar, WriteReadRoundTrip) {
  TempDir dir;
  auto records = make_synthetic_records(25, 4);
  write_cifar10_binary(dir.path() / "r.bin", records);
  EXPECT_EQ(fs::file_size(dir.path() / "r.bin"), 25u * 3073u);
  auto back = load_cifar10_binary(dir.path() / "r.bin");
  ASSERT_EQ(back.size(), records.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].label, records[i].label);
    EXPECT_EQ(back[i].pixels, records[i].pixels);
  }
}

TEST(Cifar, SplitsComeFromSeparateFiles) {
  TempDir dir;
  write_synthetic_cifar10(dir.path(), 50, 20, 1);
  auto splits = load_cifar10_splits(dir.path(), 30, 20);
  ASSERT_EQ(splits.train.size(), 30u);
  ASSERT_EQ(splits.test.size(), 20u);
  // Train records come from data_batch_*.bin, test records only from test_batch.bin.
  auto test_file = load_cifar10_binary(dir.path() / "test_batch.bin");
  for (std::size_t i = 0; i < splits.test.size(); ++i) EXPECT_EQ(splits.test[i].pixels, test_file[i].pixels);
  for (const auto& tr : splits.train) {
    for (const auto& te : splits.test) EXPECT_NE(tr.pixels, te.pixels);
  }
  EXPECT_THROW(load_cifar10_splits(dir.path(), 51, 20), DataError);
  EXPECT_THROW(load_cifar10_splits(dir.path() / "nope", 1, 1), IoError);
}

TEST(Cifar, RealTrainBatchWhenAvailable) {
  const char* dir = std::getenv(kDataDirEnv);
  if (!dir || !fs::exists(fs::path(dir) / "data_batch_1.bin")) GTEST_SKIP() << "CIFAR-10 binaries not available";
  auto records = load_cifar10_binary(fs::path(dir) / "data_batch_1.bin");
  ASSERT_EQ(records.size(), 10000u);
  std::map<int, int> histogram;
  for (const auto& r : records) ++histogram[r.label];
  int total = 0;
  for (const auto& [label, n] : histogram) total += n;
  EXPECT_EQ(total, 10000);
  EXPECT_EQ(histogram.size(), 10u);
}

TEST(Encoding, ConstantCurrent) {
  Tensor<double> image({3, 2, 2}, Buffer<double>::LinSpaced(12, 0, 11));
  auto one = encode_constant_current(image, 1);
  EXPECT_EQ(one.shape(), (Shape{1, 3, 2, 2}));
  EXPECT_TRUE((one.values() == image.values()).all());
  auto four = encode_constant_current(image, 4);
  EXPECT_EQ(four.shape(), (Shape{4, 3, 2, 2}));
  for (Index t = 0; t < 4; ++t) EXPECT_TRUE((four.values().segment(t * 12, 12) == image.values()).all());
  EXPECT_THROW(encode_constant_current(image, 0), UsageError);
}

TEST(Encoding, BatchIsStandardizedAndRepeated) {
  DatasetRecord r;
  r.pixels.fill(255);
  r.pixels[0] = 0;
  std::vector<const DatasetRecord*> batch{&r, &r};
  ChannelNormalization norm;
  auto x = encode_batch<double>(batch, 3, norm);
  EXPECT_EQ(x.shape(), (Shape{3, 2, 3, 32, 32}));
  EXPECT_NEAR(x[0], -norm.mean[0] / norm.std[0], 1e-12);
  EXPECT_NEAR(x[1], (1 - norm.mean[0]) / norm.std[0], 1e-12);
  EXPECT_NEAR(x[2 * 1024], (1 - norm.mean[2]) / norm.std[2], 1e-12);
  const Index step = 2 * 3072;
  for (Index t = 1; t < 3; ++t) EXPECT_TRUE((x.values().segment(t * step, step) == x.values().head(step)).all());
}

TEST(Augment, DeterministicGivenRngAndKeepsLabel) {
  auto records = make_synthetic_records(3, 2);
  std::mt19937_64 a(5), b(5);
  for (const auto& r : records) {
    auto x = augment(r, a), y = augment(r, b);
    EXPECT_EQ(x.pixels, y.pixels);
    EXPECT_EQ(x.label, r.label);
  }
}

TEST(Augment, CropAndFlipMovePixels) {
  DatasetRecord r;
  for (std::size_t i = 0; i < r.pixels.size(); ++i) r.pixels[i] = static_cast<std::uint8_t>(i % 251);
  std::mt19937_64 rng(1);
  int changed = 0;
  for (int i = 0; i < 20; ++i) changed += augment(r, rng).pixels != r.pixels ? 1 : 0;
  EXPECT_GT(changed, 10);
}

TEST(Synthetic, BalancedLabels) {
  auto records = make_synthetic_records(100, 3);
  std::map<int, int> histogram;
  for (const auto& r : records) ++histogram[r.label];
  EXPECT_EQ(histogram.size(), 10u);
  for (const auto& [label, n] : histogram) EXPECT_EQ(n, 10);
}

TEST(Metrics, OneRowIsTwoLines) {
  TempDir dir;
  MetricsRow row{1, 0.1, 2.30258509, 12.5, 11.0, 0.1003, 0.0983, 0.0, 0.0, 3.25};
  write_metrics_csv({row}, dir.path() / "m.csv");
  const std::string text = read_file(dir.path() / "m.csv");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_EQ(text.back(), '\n');
  EXPECT_EQ(text, std::string(kMetricsHeader) + "\n1,0.1,2.30259,12.5,11,0.1003,0.0983,0,0,3.25\n");
}

TEST(Metrics, RoundTripAtSixSignificantDigits) {
  TempDir dir;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e3, 1e3);
  std::vector<MetricsRow> rows;
  for (int e = 1; e <= 15; ++e) {
    rows.push_back({e, u(rng), u(rng), u(rng), u(rng), u(rng) * 1e-7, u(rng), u(rng) * 1e9, u(rng), u(rng)});
  }
  write_metrics_csv(rows, dir.path() / "m.csv");
  auto back = read_metrics_csv(dir.path() / "m.csv");
  ASSERT_EQ(back.size(), rows.size());
  auto g6 = [](double v) { return std::stod(format_g6(v)); };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = back[i];
    EXPECT_EQ(b.epoch, a.epoch);
    EXPECT_EQ(b.lr, g6(a.lr));
    EXPECT_EQ(b.train_loss, g6(a.train_loss));
    EXPECT_EQ(b.train_accuracy, g6(a.train_accuracy));
    EXPECT_EQ(b.test_accuracy, g6(a.test_accuracy));
    EXPECT_EQ(b.train_spike_rate, g6(a.train_spike_rate));
    EXPECT_EQ(b.test_spike_rate, g6(a.test_spike_rate));
    EXPECT_EQ(b.l2_term, g6(a.l2_term));
    EXPECT_EQ(b.spike_term, g6(a.spike_term));
    EXPECT_EQ(b.wall_seconds, g6(a.wall_seconds));
  }
  write_metrics_csv(back, dir.path() / "again.csv");
  EXPECT_EQ(read_file(dir.path() / "m.csv"), read_file(dir.path() / "again.csv"));
}

TEST(Metrics, Errors) {
  TempDir dir;
  EXPECT_THROW(write_metrics_csv({}, dir.path() / "m.csv"), UsageError);
  write_bytes(dir.path() / "file", {'x'});
  EXPECT_THROW(write_metrics_csv({MetricsRow{}}, dir.path() / "file" / "m.csv"), IoError);
}

TEST(Config, DefaultsAndRoundTrip) {
  const std::string text = R"([architecture]
name = sew-resnet
channels = 64
norm = weight+mean-only-bn

[optimizer]
kind = sgd
lr = 0.001
weight_decay = 0.0003

[regularizer]
spike_penalty_weight = 0.5
spike_penalty_order = first

[run]
epochs = 7
seed = 42
augment = false
)";
  auto cfg = parse_config(text);
  EXPECT_EQ(cfg.architecture.architecture, Architecture::sew_resnet);
  EXPECT_EQ(cfg.architecture.channels, 64);
  EXPECT_EQ(cfg.architecture.depth, 5);
  EXPECT_EQ(cfg.architecture.norm, NormMethod::weight_mean_only_bn);
  EXPECT_EQ(cfg.optimizer.momentum, 0.9);
  EXPECT_EQ(cfg.regularizer.weight_decay_mode, WeightDecayMode::optimizer_coupled);
  EXPECT_EQ(cfg.optimizer_settings().weight_decay, 0.0003);
  EXPECT_EQ(cfg.regularizer.spike_penalty_order, PenaltyOrder::first);
  EXPECT_EQ(cfg.run.time_steps, 4);
  EXPECT_EQ(cfg.run.seed, 42u);
  EXPECT_FALSE(cfg.run.augment);
  EXPECT_EQ(cfg.resolved_schedule().t_max, 7);
  EXPECT_EQ(cfg.resolved_schedule().lr_max, 0.001);
  EXPECT_EQ(cfg.network().seed, 42u);

  const std::string again = to_config_text(cfg);
  EXPECT_EQ(to_config_text(parse_config(again)), again);
}

TEST(Config, LossTermDecayStaysOutOfTheOptimizer) {
  auto cfg = parse_config("[optimizer]\nweight_decay = 0.001\nweight_decay_mode = loss-term\n");
  EXPECT_EQ(cfg.optimizer_settings().weight_decay, 0.0);
  EXPECT_EQ(cfg.regularizer.loss_weight_decay(), 0.001);
}

TEST(Config, UnknownKeysAndSectionsAreErrors) {
  EXPECT_THROW(parse_config("[architecture]\nwidth = 3\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[trainer]\nepochs = 3\n"), ConfigurationError);
  EXPECT_THROW(parse_config("epochs = 3\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[run]\nepochs = three\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[run]\naugment = maybe\n"), ConfigurationError);
  EXPECT_THROW(parse_config("[schedule]\nkind = step\n"), ConfigurationError);
}

TEST(Config, InvalidCombinations) {
  EXPECT_THROW(parse_config("[optimizer]\nkind = sgd\nweight_decay_mode = optimizer-decoupled\n").validate(),
               ConfigurationError);
  EXPECT_THROW(parse_config("[optimizer]\nkind = adamw\nweight_decay_mode = optimizer-coupled\n").validate(),
               ConfigurationError);
  EXPECT_THROW(parse_config("[architecture]\ndata_dependent_init = true\n").validate(), ConfigurationError);
  EXPECT_THROW(parse_config("[run]\nbatch_size = 0\n").validate(), ConfigurationError);
  EXPECT_NO_THROW(parse_config("[architecture]\nnorm = weight\ndata_dependent_init = true\n").validate());
}

TEST(Config, ShippedConfigsParse) {
  const fs::path dir = fs::path(SPIKEREG_SOURCE_DIR) / "configs";
  int count = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(load_config(entry.path()).validate()) << entry.path();
    ++count;
  }
  EXPECT_GE(count, 5);
}

TEST(Config, DataDirPrecedence) {
  ::unsetenv(kDataDirEnv);
  EXPECT_EQ(resolve_data_dir(std::nullopt, "/from/config"), "/from/config");
  ::setenv(kDataDirEnv, "/from/env", 1);
  EXPECT_EQ(resolve_data_dir(std::nullopt, "/from/config"), "/from/env");
  EXPECT_EQ(resolve_data_dir(std::string("/from/cli"), "/from/config"), "/from/cli");
  ::unsetenv(kDataDirEnv);
  EXPECT_EQ(resolve_data_dir(std::string("/from/cli"), ""), "/from/cli");
}

TEST(Checkpoint, RoundTripIsExact) {
  TempDir dir;
  Checkpoint ck;
  ck.epoch = 17;
  ck.config_text = "[run]\nepochs = 17\n";
  ck.tensors.push_back({"0.weight", {2, 3}, {1.5, -2.25, 1e-300, 3.141592653589793, -0.0, 7}});
  ck.tensors.push_back({"optim.step", {1}, {12}});
  save_checkpoint(ck, dir.path() / "c.bin");
  auto back = load_checkpoint(dir.path() / "c.bin");
  EXPECT_EQ(back.epoch, 17u);
  EXPECT_EQ(back.config_text, ck.config_text);
  ASSERT_EQ(back.tensors.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.tensors[i].name, ck.tensors[i].name);
    EXPECT_EQ(back.tensors[i].shape, ck.tensors[i].shape);
    EXPECT_EQ(back.tensors[i].values, ck.tensors[i].values);
  }
  EXPECT_EQ(back.find("optim.step").values[0], 12);
  EXPECT_THROW(back.find("nothing"), UsageError);
}

TEST(Checkpoint, LittleEndianHeader) {
  TempDir dir;
  Checkpoint ck;
  ck.epoch = 3;
  save_checkpoint(ck, dir.path() / "c.bin");
  const std::string bytes = read_file(dir.path() / "c.bin");
  ASSERT_GE(bytes.size(), 20u);
  EXPECT_EQ(bytes.substr(0, 8), "SPKRCKPT");
  EXPECT_EQ(bytes[8], 1);   // version, low byte first
  EXPECT_EQ(bytes[12], 3);  // epoch, low byte first
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  TempDir dir;
  write_bytes(dir.path() / "junk.bin", {'n', 'o', 'p', 'e', 0, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_THROW(load_checkpoint(dir.path() / "junk.bin"), FormatError);
  Checkpoint ck;
  ck.tensors.push_back({"w", {4}, {1, 2, 3, 4}});
  save_checkpoint(ck, dir.path() / "c.bin");
  std::string bytes = read_file(dir.path() / "c.bin");
  write_bytes(dir.path() / "short.bin", std::vector<char>(bytes.begin(), bytes.end() - 5));
  EXPECT_THROW(load_checkpoint(dir.path() / "short.bin"), FormatError);
  EXPECT_THROW(load_checkpoint(dir.path() / "missing.bin"), IoError);
}

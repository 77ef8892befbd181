#include "spikereg/config.hpp"

#include <fmt/format.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace spikereg {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"architecture", {"name", "channels", "depth", "kernel_size", "patch_size", "norm", "num_classes", "data_dependent_init"}},
      {"optimizer", {"kind", "lr", "momentum", "beta1", "beta2", "eps", "weight_decay", "weight_decay_mode"}},
      {"regularizer", {"spike_penalty_weight", "spike_penalty_order"}},
      {"schedule", {"kind", "lr_min", "t_max"}},
      {"run",
       {"epochs", "batch_size", "time_steps", "seed", "train_subset_size", "test_subset_size", "data_dir",
        "output_dir", "augment", "precision", "record_wall_time", "channel_mean", "channel_std"}},
  };
  return keys;
}

template <typename T>
T number(const pt::ptree& section, const std::string& where, const std::string& key, T fallback) {
  auto raw = section.get_optional<std::string>(key);
  if (!raw) return fallback;
  std::istringstream in(*raw);
  T value{};
  in >> value;
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigurationError("config [" + where + "] " + key + ": cannot parse '" + *raw + "'");
  }
  return value;
}

bool boolean(const pt::ptree& section, const std::string& where, const std::string& key, bool fallback) {
  auto raw = section.get_optional<std::string>(key);
  if (!raw) return fallback;
  if (*raw == "true" || *raw == "1") return true;
  if (*raw == "false" || *raw == "0") return false;
  throw ConfigurationError("config [" + where + "] " + key + ": expected true or false, got '" + *raw + "'");
}

std::array<double, 3> triple(const pt::ptree& section, const std::string& key, std::array<double, 3> fallback) {
  auto raw = section.get_optional<std::string>(key);
  if (!raw) return fallback;
  std::array<double, 3> out{};
  std::istringstream in(*raw);
  for (std::size_t i = 0; i < 3; ++i) {
    if (i > 0) {
      char comma = 0;
      in >> comma;
      if (comma != ',') throw ConfigurationError("config [run] " + key + ": expected three comma-separated numbers");
    }
    in >> out[i];
  }
  if (!in || !(in >> std::ws).eof()) {
    throw ConfigurationError("config [run] " + key + ": expected three comma-separated numbers");
  }
  return out;
}

std::string exact(double v) { return fmt::format("{:.17g}", v); }

std::string triple_text(const std::array<double, 3>& v) {
  return exact(v[0]) + "," + exact(v[1]) + "," + exact(v[2]);
}

}  // namespace

NetworkConfig ExperimentConfig::network() const {
  NetworkConfig cfg = architecture;
  cfg.time_steps = run.time_steps;
  cfg.seed = run.seed;
  return cfg;
}

OptimizerConfig ExperimentConfig::optimizer_settings() const {
  OptimizerConfig o = optimizer;
  const auto mode = regularizer.weight_decay_mode;
  const bool in_optimizer =
      mode == WeightDecayMode::optimizer_coupled || mode == WeightDecayMode::optimizer_decoupled;
  o.weight_decay = in_optimizer ? regularizer.weight_decay : 0.0;
  return o;
}

ScheduleConfig ExperimentConfig::resolved_schedule() const {
  ScheduleConfig s = schedule;
  s.lr_max = optimizer.lr;
  s.t_max = schedule_t_max.value_or(run.epochs);
  return s;
}

void ExperimentConfig::validate() const {
  network().validate();
  optimizer.validate();
  regularizer.validate();
  resolved_schedule().validate();
  if (run.epochs < 1) throw ConfigurationError("run.epochs must be >= 1");
  if (run.batch_size < 1) throw ConfigurationError("run.batch_size must be >= 1");
  if (run.time_steps < 1) throw ConfigurationError("run.time_steps must be >= 1");
  if (run.train_subset_size < 1 || run.test_subset_size < 1) {
    throw ConfigurationError("run subset sizes must be >= 1");
  }
  for (double s : run.normalization.std) {
    if (!(s > 0)) throw ConfigurationError("run.channel_std entries must be positive");
  }
  if (data_dependent_init && architecture.norm == NormMethod::batch) {
    throw ConfigurationError("data_dependent_init requires a weight-normalized architecture");
  }
  const auto mode = regularizer.weight_decay_mode;
  if (optimizer.kind == OptimizerKind::sgd && mode == WeightDecayMode::optimizer_decoupled) {
    throw ConfigurationError("decoupled weight decay requires the adamw optimizer");
  }
  if (optimizer.kind == OptimizerKind::adamw && mode == WeightDecayMode::optimizer_coupled) {
    throw ConfigurationError("coupled weight decay requires the sgd optimizer");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigurationError(std::string("config: ") + e.what());
  }
  const auto& keys = known_keys();
  for (const auto& [section, body] : tree) {
    auto it = keys.find(section);
    if (it == keys.end()) throw ConfigurationError("config: unknown section [" + section + "]");
    if (body.empty() && !body.data().empty()) {
      throw ConfigurationError("config: key '" + section + "' must live inside a section");
    }
    for (const auto& [key, value] : body) {
      if (!it->second.contains(key)) throw ConfigurationError("config: unknown key '" + key + "' in [" + section + "]");
    }
  }
  static const pt::ptree empty;
  auto section = [&](const std::string& name) -> const pt::ptree& {
    auto child = tree.get_child_optional(name);
    return child ? *child : empty;
  };

  ExperimentConfig cfg;
  const auto& arch = section("architecture");
  if (auto name = arch.get_optional<std::string>("name")) cfg.architecture.architecture = parse_architecture(*name);
  NetworkConfig defaults;
  switch (cfg.architecture.architecture) {
    case Architecture::spiking_cnn:
      defaults = NetworkConfig::spiking_cnn();
      break;
    case Architecture::sew_resnet:
      defaults = NetworkConfig::sew_resnet();
      break;
    case Architecture::spiking_convmixer:
      defaults = NetworkConfig::spiking_convmixer();
      break;
  }
  cfg.architecture.channels = number<Index>(arch, "architecture", "channels", defaults.channels);
  cfg.architecture.depth = number<Index>(arch, "architecture", "depth", defaults.depth);
  cfg.architecture.kernel_size = number<Index>(arch, "architecture", "kernel_size", defaults.kernel_size);
  cfg.architecture.patch_size = number<Index>(arch, "architecture", "patch_size", defaults.patch_size);
  if (auto norm = arch.get_optional<std::string>("norm")) cfg.architecture.norm = parse_norm_method(*norm);
  cfg.architecture.num_classes = number<Index>(arch, "architecture", "num_classes", 10);
  cfg.data_dependent_init = boolean(arch, "architecture", "data_dependent_init", false);

  const auto& opt = section("optimizer");
  if (auto kind = opt.get_optional<std::string>("kind")) cfg.optimizer.kind = parse_optimizer_kind(*kind);
  cfg.optimizer.lr = number<double>(opt, "optimizer", "lr", cfg.optimizer.kind == OptimizerKind::sgd ? 0.1 : 0.01);
  cfg.optimizer.momentum = number<double>(opt, "optimizer", "momentum", cfg.optimizer.momentum);
  cfg.optimizer.beta1 = number<double>(opt, "optimizer", "beta1", cfg.optimizer.beta1);
  cfg.optimizer.beta2 = number<double>(opt, "optimizer", "beta2", cfg.optimizer.beta2);
  cfg.optimizer.eps = number<double>(opt, "optimizer", "eps", cfg.optimizer.eps);
  cfg.regularizer.weight_decay = number<double>(opt, "optimizer", "weight_decay", 0.0);
  if (auto mode = opt.get_optional<std::string>("weight_decay_mode")) {
    cfg.regularizer.weight_decay_mode = parse_weight_decay_mode(*mode);
  } else {
    cfg.regularizer.weight_decay_mode = cfg.optimizer.kind == OptimizerKind::sgd ? WeightDecayMode::optimizer_coupled
                                                                                 : WeightDecayMode::optimizer_decoupled;
  }

  const auto& reg = section("regularizer");
  cfg.regularizer.spike_penalty_weight = number<double>(reg, "regularizer", "spike_penalty_weight", 0.0);
  if (auto order = reg.get_optional<std::string>("spike_penalty_order")) {
    cfg.regularizer.spike_penalty_order = parse_penalty_order(*order);
  }

  const auto& sched = section("schedule");
  if (auto kind = sched.get_optional<std::string>("kind"); kind && *kind != "cosine") {
    throw ConfigurationError("config [schedule] kind: only 'cosine' is supported, got '" + *kind + "'");
  }
  cfg.schedule.lr_min = number<double>(sched, "schedule", "lr_min", 0.0);
  if (sched.get_optional<std::string>("t_max")) cfg.schedule_t_max = number<int>(sched, "schedule", "t_max", 1);

  const auto& run = section("run");
  cfg.run.epochs = number<int>(run, "run", "epochs", cfg.run.epochs);
  cfg.run.batch_size = number<int>(run, "run", "batch_size", cfg.run.batch_size);
  cfg.run.time_steps = number<int>(run, "run", "time_steps", cfg.run.time_steps);
  cfg.run.seed = number<std::uint64_t>(run, "run", "seed", cfg.run.seed);
  cfg.run.train_subset_size = number<std::size_t>(run, "run", "train_subset_size", cfg.run.train_subset_size);
  cfg.run.test_subset_size = number<std::size_t>(run, "run", "test_subset_size", cfg.run.test_subset_size);
  cfg.run.data_dir = run.get<std::string>("data_dir", cfg.run.data_dir);
  cfg.run.output_dir = run.get<std::string>("output_dir", cfg.run.output_dir);
  cfg.run.augment = boolean(run, "run", "augment", cfg.run.augment);
  cfg.run.record_wall_time = boolean(run, "run", "record_wall_time", cfg.run.record_wall_time);
  if (auto precision = run.get_optional<std::string>("precision")) {
    if (*precision == "float32") {
      cfg.run.precision = Precision::f32;
    } else if (*precision == "float64") {
      cfg.run.precision = Precision::f64;
    } else {
      throw ConfigurationError("config [run] precision: expected float32 or float64, got '" + *precision + "'");
    }
  }
  cfg.run.normalization.mean = triple(run, "channel_mean", cfg.run.normalization.mean);
  cfg.run.normalization.std = triple(run, "channel_std", cfg.run.normalization.std);

  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

std::string to_config_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  const auto& a = cfg.architecture;
  os << "[architecture]\n"
     << "name = " << to_string(a.architecture) << "\n"
     << "channels = " << a.channels << "\n"
     << "depth = " << a.depth << "\n"
     << "kernel_size = " << a.kernel_size << "\n"
     << "patch_size = " << a.patch_size << "\n"
     << "norm = " << to_string(a.norm) << "\n"
     << "num_classes = " << a.num_classes << "\n"
     << "data_dependent_init = " << (cfg.data_dependent_init ? "true" : "false") << "\n\n";
  const auto& o = cfg.optimizer;
  os << "[optimizer]\n"
     << "kind = " << to_string(o.kind) << "\n"
     << "lr = " << exact(o.lr) << "\n"
     << "momentum = " << exact(o.momentum) << "\n"
     << "beta1 = " << exact(o.beta1) << "\n"
     << "beta2 = " << exact(o.beta2) << "\n"
     << "eps = " << exact(o.eps) << "\n"
     << "weight_decay = " << exact(cfg.regularizer.weight_decay) << "\n"
     << "weight_decay_mode = " << to_string(cfg.regularizer.weight_decay_mode) << "\n\n";
  os << "[regularizer]\n"
     << "spike_penalty_weight = " << exact(cfg.regularizer.spike_penalty_weight) << "\n"
     << "spike_penalty_order = " << to_string(cfg.regularizer.spike_penalty_order) << "\n\n";
  os << "[schedule]\n"
     << "kind = cosine\n"
     << "lr_min = " << exact(cfg.schedule.lr_min) << "\n";
  if (cfg.schedule_t_max) os << "t_max = " << *cfg.schedule_t_max << "\n";
  const auto& r = cfg.run;
  os << "\n[run]\n"
     << "epochs = " << r.epochs << "\n"
     << "batch_size = " << r.batch_size << "\n"
     << "time_steps = " << r.time_steps << "\n"
     << "seed = " << r.seed << "\n"
     << "train_subset_size = " << r.train_subset_size << "\n"
     << "test_subset_size = " << r.test_subset_size << "\n";
  if (!r.data_dir.empty()) os << "data_dir = " << r.data_dir << "\n";
  os << "output_dir = " << r.output_dir << "\n"
     << "augment = " << (r.augment ? "true" : "false") << "\n"
     << "precision = " << (r.precision == Precision::f32 ? "float32" : "float64") << "\n"
     << "record_wall_time = " << (r.record_wall_time ? "true" : "false") << "\n"
     << "channel_mean = " << triple_text(r.normalization.mean) << "\n"
     << "channel_std = " << triple_text(r.normalization.std) << "\n";
  return os.str();
}

std::string resolve_data_dir(const std::optional<std::string>& cli_flag, const std::string& from_config) {
  if (cli_flag && !cli_flag->empty()) return *cli_flag;
  if (const char* env = std::getenv(kDataDirEnv); env && *env) return env;
  return from_config;
}

}  // namespace spikereg

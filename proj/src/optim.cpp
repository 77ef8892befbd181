#include "spikereg/optim.hpp"

namespace spikereg {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::sgd ? "sgd" : "adamw"; }

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adamw") return OptimizerKind::adamw;
  throw ConfigurationError("unknown optimizer '" + name + "' (expected sgd or adamw)");
}

void OptimizerConfig::validate() const {
  if (!(lr >= 0)) throw ConfigurationError("learning rate must be nonnegative");
  if (!(momentum >= 0 && momentum < 1)) throw ConfigurationError("momentum must lie in [0, 1)");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ConfigurationError("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0)) throw ConfigurationError("AdamW eps must be positive");
  if (!(weight_decay >= 0)) throw ConfigurationError("weight decay must be nonnegative");
}

void ScheduleConfig::validate() const {
  if (t_max < 1) throw ConfigurationError("schedule t_max must be >= 1");
  if (!(lr_min <= lr_max)) throw ConfigurationError("schedule lr_min exceeds lr_max");
}

double cosine_lr(const ScheduleConfig& schedule, int epoch) {
  schedule.validate();
  if (epoch < 0 || epoch > schedule.t_max) {
    throw UsageError("cosine_lr: epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(schedule.t_max) +
                     "]");
  }
  const double phase = std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(schedule.t_max);
  return schedule.lr_min + 0.5 * (schedule.lr_max - schedule.lr_min) * (1.0 + std::cos(phase));
}

}  // namespace spikereg

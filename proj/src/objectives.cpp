#include "spikereg/objectives.hpp"

namespace spikereg {

std::string to_string(WeightDecayMode m) {
  switch (m) {
    case WeightDecayMode::none:
      return "none";
    case WeightDecayMode::loss_term:
      return "loss-term";
    case WeightDecayMode::optimizer_coupled:
      return "optimizer-coupled";
    case WeightDecayMode::optimizer_decoupled:
      return "optimizer-decoupled";
  }
  return "?";
}

std::string to_string(PenaltyOrder o) { return o == PenaltyOrder::square ? "square" : "first"; }

WeightDecayMode parse_weight_decay_mode(const std::string& name) {
  for (auto m : {WeightDecayMode::none, WeightDecayMode::loss_term, WeightDecayMode::optimizer_coupled,
                 WeightDecayMode::optimizer_decoupled}) {
    if (to_string(m) == name) return m;
  }
  throw ConfigurationError("unknown weight decay mode '" + name + "'");
}

PenaltyOrder parse_penalty_order(const std::string& name) {
  if (name == "square") return PenaltyOrder::square;
  if (name == "first") return PenaltyOrder::first;
  throw ConfigurationError("unknown spike penalty order '" + name + "' (expected square or first)");
}

void RegularizerConfig::validate() const {
  if (!(weight_decay >= 0)) throw ConfigurationError("weight_decay must be nonnegative");
  if (!(spike_penalty_weight >= 0)) throw ConfigurationError("spike_penalty_weight must be nonnegative");
}

}  // namespace spikereg

#include "spikereg/architectures.hpp"

namespace spikereg {

std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::spiking_cnn:
      return "spiking-cnn";
    case Architecture::sew_resnet:
      return "sew-resnet";
    case Architecture::spiking_convmixer:
      return "spiking-convmixer";
  }
  return "?";
}

std::string to_string(NormMethod n) {
  switch (n) {
    case NormMethod::batch:
      return "batch";
    case NormMethod::weight:
      return "weight";
    case NormMethod::weight_mean_only_bn:
      return "weight+mean-only-bn";
  }
  return "?";
}

Architecture parse_architecture(const std::string& name) {
  for (auto a : {Architecture::spiking_cnn, Architecture::sew_resnet, Architecture::spiking_convmixer}) {
    if (to_string(a) == name) return a;
  }
  throw ConfigurationError("unknown architecture '" + name + "'");
}

NormMethod parse_norm_method(const std::string& name) {
  for (auto n : {NormMethod::batch, NormMethod::weight, NormMethod::weight_mean_only_bn}) {
    if (to_string(n) == name) return n;
  }
  throw ConfigurationError("unknown norm method '" + name + "'");
}

NetworkConfig NetworkConfig::spiking_cnn(Index channels) {
  NetworkConfig cfg;
  cfg.architecture = Architecture::spiking_cnn;
  cfg.channels = channels;
  cfg.depth = 4;
  cfg.kernel_size = 3;
  return cfg;
}

NetworkConfig NetworkConfig::sew_resnet(Index channels) {
  NetworkConfig cfg;
  cfg.architecture = Architecture::sew_resnet;
  cfg.channels = channels;
  cfg.depth = 5;
  cfg.kernel_size = 3;
  return cfg;
}

NetworkConfig NetworkConfig::spiking_convmixer(Index width, Index depth, Index patch, Index kernel) {
  NetworkConfig cfg;
  cfg.architecture = Architecture::spiking_convmixer;
  cfg.channels = width;
  cfg.depth = depth;
  cfg.patch_size = patch;
  cfg.kernel_size = kernel;
  return cfg;
}

void NetworkConfig::validate() const {
  auto positive = [](Index v, const char* field) {
    if (v < 1) throw ConfigurationError(std::string("architecture field '") + field + "' must be positive");
  };
  positive(channels, "channels");
  positive(depth, "depth");
  positive(kernel_size, "kernel_size");
  positive(patch_size, "patch_size");
  positive(num_classes, "num_classes");
  positive(time_steps, "time_steps");
  positive(input.channels, "input channels");
  positive(input.height, "input height");
  positive(input.width, "input width");
  if (architecture != Architecture::sew_resnet && kernel_size % 2 == 0) {
    throw ConfigurationError("kernel_size must be odd for same padding, got " + std::to_string(kernel_size));
  }
  if (architecture == Architecture::spiking_convmixer &&
      (input.height % patch_size != 0 || input.width % patch_size != 0)) {
    throw ConfigurationError("patch_size " + std::to_string(patch_size) + " does not tile the input");
  }
}

}  // namespace spikereg

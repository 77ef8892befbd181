#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "spikereg/network.hpp"

namespace spikereg {

enum class Architecture { spiking_cnn, sew_resnet, spiking_convmixer };
enum class NormMethod { batch, weight, weight_mean_only_bn };

std::string to_string(Architecture a);
std::string to_string(NormMethod n);
Architecture parse_architecture(const std::string& name);
NormMethod parse_norm_method(const std::string& name);

/// Declarative description of one of the three networks.
///   spiking-cnn:        {c<channels>k3s1-Norm-IF-MPk2s2}*<depth>-FC
///   sew-resnet:         Conv-Norm-IF-{SEW-SEW-MPk2s2}*<depth>-FC
///   spiking-convmixer:  patch embed, <depth> mixer blocks of width <channels>
struct NetworkConfig {
  Architecture architecture = Architecture::spiking_cnn;
  Index channels = 128;
  Index depth = 4;
  Index kernel_size = 3;
  Index patch_size = 1;
  NormMethod norm = NormMethod::batch;
  Index num_classes = 10;
  Index time_steps = 4;
  InputSpec input{};
  bool zero_init_residual = false;  // zero gamma on the last norm of each SEW branch
  std::uint64_t seed = 0;

  static NetworkConfig spiking_cnn(Index channels = 128);
  static NetworkConfig sew_resnet(Index channels = 32);
  static NetworkConfig spiking_convmixer(Index width = 256, Index depth = 8, Index patch = 1, Index kernel = 9);

  // Throws ConfigurationError on non-positive extents or architecture-specific violations.
  void validate() const;
};

namespace detail {

template <typename Scalar>
void append_conv_norm(std::vector<LayerPtr<Scalar>>& out, NormMethod norm, typename Conv2d<Scalar>::Options o,
                      std::mt19937_64& rng) {
  o.weight_norm = norm != NormMethod::batch;
  o.bias = o.weight_norm;
  const Index channels = o.out_channels;
  out.push_back(std::make_unique<Conv2d<Scalar>>(o, rng));
  if (norm == NormMethod::batch) out.push_back(std::make_unique<BatchNorm<Scalar>>(channels, NormVariant::full));
  if (norm == NormMethod::weight_mean_only_bn) {
    out.push_back(std::make_unique<BatchNorm<Scalar>>(channels, NormVariant::mean_only));
  }
}

template <typename Scalar>
void append_conv_norm_if(std::vector<LayerPtr<Scalar>>& out, NormMethod norm, typename Conv2d<Scalar>::Options o,
                         std::mt19937_64& rng) {
  append_conv_norm(out, norm, o, rng);
  out.push_back(std::make_unique<IFNeuron<Scalar>>());
}

template <typename Scalar>
LayerPtr<Scalar> make_sew_block(const NetworkConfig& cfg, Index channels, std::mt19937_64& rng) {
  std::vector<LayerPtr<Scalar>> body;
  const typename Conv2d<Scalar>::Options conv{channels, channels, 3, 1, 1, 1};
  append_conv_norm_if(body, cfg.norm, conv, rng);
  append_conv_norm_if(body, cfg.norm, conv, rng);
  if (cfg.zero_init_residual) {
    for (auto it = body.rbegin(); it != body.rend(); ++it) {
      if (auto* bn = dynamic_cast<BatchNorm<Scalar>*>(it->get())) {
        bn->state().gamma.mutable_values().setZero();
        break;
      }
    }
  }
  return std::make_unique<SewResidual<Scalar>>(std::move(body));
}

template <typename Scalar>
LayerPtr<Scalar> make_classifier(const NetworkConfig& cfg, Index features, std::mt19937_64& rng) {
  return std::make_unique<Linear<Scalar>>(features, cfg.num_classes, cfg.norm != NormMethod::batch, rng);
}

}  // namespace detail

/// {c k3s1-Norm-IF-MPk2s2} x depth, then FC on the flattened map.
template <typename Scalar>
LayerStack<Scalar> build_spiking_cnn(const NetworkConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<LayerPtr<Scalar>> layers;
  Index in = cfg.input.channels, h = cfg.input.height, w = cfg.input.width;
  for (Index block = 0; block < cfg.depth; ++block) {
    if (h < 2 || w < 2) {
      throw ConfigurationError("spiking-cnn: spatial extent underflows before block " + std::to_string(block + 1));
    }
    detail::append_conv_norm_if<Scalar>(layers, cfg.norm, {in, cfg.channels, cfg.kernel_size, 1, cfg.kernel_size / 2, 1},
                                        rng);
    layers.push_back(std::make_unique<MaxPool2d<Scalar>>(2, 2));
    in = cfg.channels;
    h /= 2;
    w /= 2;
  }
  layers.push_back(std::make_unique<Flatten<Scalar>>());
  layers.push_back(detail::make_classifier<Scalar>(cfg, cfg.channels * h * w, rng));
  return LayerStack<Scalar>(std::move(layers), cfg.input);
}

/// Conv-Norm-IF stem (k3s1), then {SEW-SEW-MPk2s2} x depth, then FC.
template <typename Scalar>
LayerStack<Scalar> build_sew_resnet(const NetworkConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<LayerPtr<Scalar>> layers;
  detail::append_conv_norm_if<Scalar>(layers, cfg.norm, {cfg.input.channels, cfg.channels, 3, 1, 1, 1}, rng);
  Index h = cfg.input.height, w = cfg.input.width;
  for (Index stage = 0; stage < cfg.depth; ++stage) {
    if (h < 2 || w < 2) {
      throw ConfigurationError("sew-resnet: spatial extent underflows before stage " + std::to_string(stage + 1));
    }
    layers.push_back(detail::make_sew_block<Scalar>(cfg, cfg.channels, rng));
    layers.push_back(detail::make_sew_block<Scalar>(cfg, cfg.channels, rng));
    layers.push_back(std::make_unique<MaxPool2d<Scalar>>(2, 2));
    h /= 2;
    w /= 2;
  }
  layers.push_back(std::make_unique<Flatten<Scalar>>());
  layers.push_back(detail::make_classifier<Scalar>(cfg, cfg.channels * h * w, rng));
  return LayerStack<Scalar>(std::move(layers), cfg.input);
}

/// Patch embedding (kernel = stride = patch) -Norm-IF, then depth x
/// [SEW-ADD(depthwise conv, Norm, IF) -> pointwise conv, Norm, IF],
/// global average pooling and FC.
template <typename Scalar>
LayerStack<Scalar> build_spiking_convmixer(const NetworkConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Index width = cfg.channels;
  std::vector<LayerPtr<Scalar>> layers;
  detail::append_conv_norm_if<Scalar>(layers, cfg.norm,
                                      {cfg.input.channels, width, cfg.patch_size, cfg.patch_size, 0, 1}, rng);
  for (Index block = 0; block < cfg.depth; ++block) {
    std::vector<LayerPtr<Scalar>> mixer;
    detail::append_conv_norm_if<Scalar>(mixer, cfg.norm, {width, width, cfg.kernel_size, 1, cfg.kernel_size / 2, width},
                                        rng);
    std::vector<LayerPtr<Scalar>> stage;
    stage.push_back(std::make_unique<SewResidual<Scalar>>(std::move(mixer)));
    detail::append_conv_norm_if<Scalar>(stage, cfg.norm, {width, width, 1, 1, 0, 1}, rng);
    layers.push_back(std::make_unique<Sequential<Scalar>>(std::move(stage)));
  }
  layers.push_back(std::make_unique<GlobalAvgPool<Scalar>>());
  layers.push_back(detail::make_classifier<Scalar>(cfg, width, rng));
  return LayerStack<Scalar>(std::move(layers), cfg.input);
}

template <typename Scalar>
LayerStack<Scalar> build_network(const NetworkConfig& cfg) {
  switch (cfg.architecture) {
    case Architecture::spiking_cnn:
      return build_spiking_cnn<Scalar>(cfg);
    case Architecture::sew_resnet:
      return build_sew_resnet<Scalar>(cfg);
    case Architecture::spiking_convmixer:
      return build_spiking_convmixer<Scalar>(cfg);
  }
  throw ConfigurationError("unknown architecture");
}

}  // namespace spikereg

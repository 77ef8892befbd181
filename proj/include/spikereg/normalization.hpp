#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <utility>

#include "spikereg/ops.hpp"
#include "spikereg/tensor.hpp"

namespace spikereg {

enum class NormVariant { full, mean_only };

/// Per-channel batch normalization over x[M, C, ...]. Statistics are taken over
/// every axis except the channel axis, so time steps folded into M share one
/// statistic. The mean-only variant subtracts the mean but never divides by the
/// standard deviation; both variants keep the affine (gamma, beta).
template <typename Scalar>
struct BatchNormState {
  Index channels = 0;
  NormVariant variant = NormVariant::full;
  Scalar eps = Scalar(1e-5);
  Scalar momentum = Scalar(0.1);
  bool training = true;
  Buffer<Scalar> running_mean;
  Buffer<Scalar> running_var;
  Tensor<Scalar> gamma;
  Tensor<Scalar> beta;

  static BatchNormState create(Index channels, NormVariant variant = NormVariant::full) {
    if (channels < 1) throw ConfigurationError("batch norm needs at least one channel");
    BatchNormState s;
    s.channels = channels;
    s.variant = variant;
    s.running_mean = Buffer<Scalar>::Zero(channels);
    s.running_var = Buffer<Scalar>::Ones(channels);
    s.gamma = Tensor<Scalar>::ones({channels}, true);
    s.beta = Tensor<Scalar>::zeros({channels}, true);
    return s;
  }
};

template <typename Scalar>
Tensor<Scalar> batch_norm_forward(BatchNormState<Scalar>& state, const Tensor<Scalar>& x) {
  if (x.rank() < 2 || x.dim(1) != state.channels) {
    throw ConfigurationError("batch_norm: input " + shape_string(x.shape()) + " for " +
                             std::to_string(state.channels) + " channels");
  }
  const Index outer = x.dim(0), channels = x.dim(1);
  const Index inner = x.numel() / (outer * channels);
  const Index count = outer * inner;
  if (state.training && outer < 2) {
    throw UsageError("batch_norm: train mode needs a batch of at least 2, got " + std::to_string(outer));
  }
  const bool mean_only = state.variant == NormVariant::mean_only;

  Buffer<Scalar> mu(channels), inv_std(channels);
  const Scalar* xv = x.values().data();
  if (state.training) {
    for (Index c = 0; c < channels; ++c) {
      Scalar acc = 0;
      for (Index m = 0; m < outer; ++m) {
        acc += Eigen::Map<const Buffer<Scalar>>(xv + (m * channels + c) * inner, inner).sum();
      }
      mu[c] = acc / static_cast<Scalar>(count);
    }
    Buffer<Scalar> var = Buffer<Scalar>::Zero(channels);
    if (!mean_only) {
      for (Index c = 0; c < channels; ++c) {
        Scalar acc = 0;
        for (Index m = 0; m < outer; ++m) {
          acc += (Eigen::Map<const Buffer<Scalar>>(xv + (m * channels + c) * inner, inner) - mu[c]).square().sum();
        }
        var[c] = acc / static_cast<Scalar>(count);
      }
      const Scalar unbias = static_cast<Scalar>(count) / static_cast<Scalar>(count - 1);
      state.running_var = (Scalar(1) - state.momentum) * state.running_var + state.momentum * var * unbias;
    }
    state.running_mean = (Scalar(1) - state.momentum) * state.running_mean + state.momentum * mu;
    inv_std = mean_only ? Buffer<Scalar>::Ones(channels) : (var + state.eps).rsqrt().eval();
  } else {
    mu = state.running_mean;
    inv_std = mean_only ? Buffer<Scalar>::Ones(channels) : (state.running_var + state.eps).rsqrt().eval();
  }

  const Buffer<Scalar>& gamma = state.gamma.values();
  const Buffer<Scalar>& beta = state.beta.values();
  Buffer<Scalar> normalized(x.numel());
  Buffer<Scalar> y(x.numel());
  for (Index m = 0; m < outer; ++m) {
    for (Index c = 0; c < channels; ++c) {
      const Index at = (m * channels + c) * inner;
      auto xhat = normalized.segment(at, inner);
      xhat = (Eigen::Map<const Buffer<Scalar>>(xv + at, inner) - mu[c]) * inv_std[c];
      y.segment(at, inner) = xhat * gamma[c] + beta[c];
    }
  }

  const bool batch_stats = state.training;
  return make_result<Scalar>(
      mean_only ? "mean_only_batch_norm" : "batch_norm", x.shape(), std::move(y),
      {x.node(), state.gamma.node(), state.beta.node()},
      [normalized = std::move(normalized), inv_std, outer, channels, inner, count, batch_stats,
       mean_only](Node<Scalar>& self) {
        const auto& xn = self.inputs[0];
        const auto& gn = self.inputs[1];
        const auto& bn = self.inputs[2];
        Buffer<Scalar> sum_dy = Buffer<Scalar>::Zero(channels);
        Buffer<Scalar> sum_dy_xhat = Buffer<Scalar>::Zero(channels);
        for (Index m = 0; m < outer; ++m) {
          for (Index c = 0; c < channels; ++c) {
            const Index at = (m * channels + c) * inner;
            sum_dy[c] += self.grad.segment(at, inner).sum();
            sum_dy_xhat[c] += (self.grad.segment(at, inner) * normalized.segment(at, inner)).sum();
          }
        }
        if (gn->requires_grad) gn->grad_buffer() += sum_dy_xhat;
        if (bn->requires_grad) bn->grad_buffer() += sum_dy;
        if (!xn->requires_grad) return;
        auto& dx = xn->grad_buffer();
        const Buffer<Scalar>& gamma = gn->value;
        const Scalar n = static_cast<Scalar>(count);
        for (Index m = 0; m < outer; ++m) {
          for (Index c = 0; c < channels; ++c) {
            const Index at = (m * channels + c) * inner;
            const Scalar k = gamma[c] * inv_std[c];
            if (!batch_stats) {
              dx.segment(at, inner) += k * self.grad.segment(at, inner);
            } else if (mean_only) {
              dx.segment(at, inner) += k * (self.grad.segment(at, inner) - sum_dy[c] / n);
            } else {
              dx.segment(at, inner) += k * (self.grad.segment(at, inner) - sum_dy[c] / n -
                                            normalized.segment(at, inner) * (sum_dy_xhat[c] / n));
            }
          }
        }
      });
}

/// Weight-norm reparameterization w = (g / ||v||) v, with one magnitude per
/// output channel (leading axis of v).
template <typename Scalar>
struct WeightNormParam {
  Tensor<Scalar> direction;  // v
  Tensor<Scalar> magnitude;  // g, shape [C_out]

  /// Starts at w == v: g is set to the per-channel norm of v.
  static WeightNormParam from_weight(const Tensor<Scalar>& v) {
    const Index rows = v.dim(0), cols = v.numel() / rows;
    Buffer<Scalar> g = detail::ConstMatMap<Scalar>(v.values().data(), rows, cols).rowwise().norm().array();
    return {Tensor<Scalar>(v.shape(), v.values(), true), Tensor<Scalar>({rows}, std::move(g), true)};
  }
};

template <typename Scalar>
Tensor<Scalar> weight_normalize(const WeightNormParam<Scalar>& p) {
  const Tensor<Scalar>& v = p.direction;
  const Tensor<Scalar>& g = p.magnitude;
  const Index rows = v.dim(0), cols = v.numel() / rows;
  if (g.numel() != rows) {
    throw ConfigurationError("weight_normalize: magnitude " + shape_string(g.shape()) + " for direction " +
                             shape_string(v.shape()));
  }
  detail::ConstMatMap<Scalar> vm(v.values().data(), rows, cols);
  Buffer<Scalar> norms = vm.rowwise().norm().array();
  for (Index r = 0; r < rows; ++r) {
    if (!(norms[r] > Scalar(1e-12))) {
      throw NumericalError("weight_normalize: direction norm vanished for output channel " + std::to_string(r));
    }
  }
  Buffer<Scalar> w(v.numel());
  detail::MatMap<Scalar>(w.data(), rows, cols) = (g.values() / norms).matrix().asDiagonal() * vm;
  return make_result<Scalar>("weight_normalize", v.shape(), std::move(w), {v.node(), g.node()},
                             [norms, rows, cols](Node<Scalar>& self) {
                               const auto& vn = self.inputs[0];
                               const auto& gn = self.inputs[1];
                               detail::ConstMatMap<Scalar> dw(self.grad.data(), rows, cols);
                               detail::ConstMatMap<Scalar> vm(vn->value.data(), rows, cols);
                               const Buffer<Scalar> dg = (dw.cwiseProduct(vm).rowwise().sum().array() / norms).eval();
                               if (gn->requires_grad) gn->grad_buffer() += dg;
                               if (vn->requires_grad) {
                                 const Buffer<Scalar> coef = gn->value / norms;
                                 const Buffer<Scalar> along = dg / norms;
                                 detail::MatMap<Scalar>(vn->grad_buffer().data(), rows, cols) +=
                                     coef.matrix().asDiagonal() * (dw - along.matrix().asDiagonal() * vm);
                               }
                             });
}

/// Per-channel (mean, population std) of a pre-activation x[M, C, ...].
template <typename Scalar>
std::pair<Buffer<Scalar>, Buffer<Scalar>> channel_statistics(const Tensor<Scalar>& x) {
  const Index outer = x.dim(0), channels = x.dim(1);
  const Index inner = x.numel() / (outer * channels);
  const Scalar n = static_cast<Scalar>(outer * inner);
  Buffer<Scalar> mu = Buffer<Scalar>::Zero(channels), var = Buffer<Scalar>::Zero(channels);
  for (Index m = 0; m < outer; ++m) {
    for (Index c = 0; c < channels; ++c) mu[c] += x.values().segment((m * channels + c) * inner, inner).sum();
  }
  mu /= n;
  for (Index m = 0; m < outer; ++m) {
    for (Index c = 0; c < channels; ++c) {
      var[c] += (x.values().segment((m * channels + c) * inner, inner) - mu[c]).square().sum();
    }
  }
  return {mu, (var / n).sqrt()};
}

/// Data-dependent init targets: given the unit-norm pre-activation t (g = 1,
/// bias = 0) on one minibatch, returns (g, bias) = (1/sigma, -mu/sigma) so the
/// initialized pre-activation has per-channel mean 0 and std 1.
template <typename Scalar>
std::pair<Buffer<Scalar>, Buffer<Scalar>> data_dependent_targets(const Tensor<Scalar>& unit_preactivation) {
  auto [mu, sigma] = channel_statistics(unit_preactivation);
  for (Index c = 0; c < sigma.size(); ++c) {
    if (!(sigma[c] >= Scalar(1e-8))) {
      throw NumericalError("data-dependent init: pre-activation std " + std::to_string(static_cast<double>(sigma[c])) +
                           " is degenerate for channel " + std::to_string(c));
    }
  }
  Buffer<Scalar> g = sigma.inverse();
  Buffer<Scalar> bias = -mu / sigma;
  return {g, bias};
}

}  // namespace spikereg

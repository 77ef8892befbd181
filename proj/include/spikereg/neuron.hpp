#pragma once

#include <cmath>
#include <numbers>
#include <utility>

#include "spikereg/ops.hpp"
#include "spikereg/tensor.hpp"

namespace spikereg {

/// Arctan-family surrogate. The backward pass of the Heaviside spike uses
///   sigma'(x) = alpha / (2 (1 + (pi alpha x / 2)^2)),
/// the derivative of the smooth primitive atan(pi alpha x / 2) / pi + 1/2.
template <typename Scalar>
struct SurrogateSpec {
  Scalar alpha = Scalar(2);
};

/// How the spike nonlinearity evaluates in the forward pass. `relaxed`
/// replaces the Heaviside with the surrogate primitive so that finite
/// differences see the same derivative the surrogate backward uses.
enum class SpikeMode { heaviside, relaxed };

template <typename Scalar>
Scalar surrogate_derivative(Scalar x, const SurrogateSpec<Scalar>& spec) {
  const Scalar z = std::numbers::pi_v<Scalar> * spec.alpha * x / Scalar(2);
  return spec.alpha / (Scalar(2) * (Scalar(1) + z * z));
}

template <typename Scalar>
Scalar surrogate_primitive(Scalar x, const SurrogateSpec<Scalar>& spec) {
  return std::atan(std::numbers::pi_v<Scalar> * spec.alpha * x / Scalar(2)) / std::numbers::pi_v<Scalar> +
         Scalar(0.5);
}

template <typename Scalar>
Tensor<Scalar> surrogate_grad(const Tensor<Scalar>& x, const SurrogateSpec<Scalar>& spec = {}) {
  if (!(spec.alpha > 0)) throw ConfigurationError("surrogate alpha must be positive");
  Buffer<Scalar> out = x.values().unaryExpr([&](Scalar v) { return surrogate_derivative(v, spec); });
  return Tensor<Scalar>(x.shape(), std::move(out));
}

/// Heaviside spike (1 where x >= 0) whose backward rule is the surrogate.
template <typename Scalar>
Tensor<Scalar> spike_forward(const Tensor<Scalar>& v_minus_theta, const SurrogateSpec<Scalar>& spec = {},
                             SpikeMode mode = SpikeMode::heaviside) {
  if (!(spec.alpha > 0)) throw ConfigurationError("surrogate alpha must be positive");
  Buffer<Scalar> out = v_minus_theta.values().unaryExpr([&](Scalar v) {
    return mode == SpikeMode::heaviside ? (v >= Scalar(0) ? Scalar(1) : Scalar(0)) : surrogate_primitive(v, spec);
  });
  return make_result<Scalar>("spike", v_minus_theta.shape(), std::move(out), {v_minus_theta.node()},
                             [spec](Node<Scalar>& self) {
                               const auto& in = self.inputs[0];
                               accumulate_grad<Scalar>(
                                   in, self.grad * in->value.unaryExpr([&](Scalar v) {
                                     return surrogate_derivative(v, spec);
                                   }));
                             });
}

template <typename Scalar>
struct IFOptions {
  Scalar threshold = Scalar(1);
  SurrogateSpec<Scalar> surrogate{};
  SpikeMode mode = SpikeMode::heaviside;
};

/// Membrane state of a population of integrate-and-fire neurons (hard reset to 0).
template <typename Scalar>
struct IFState {
  Tensor<Scalar> membrane;
  IFOptions<Scalar> options{};

  static IFState zeros(const Shape& shape, IFOptions<Scalar> options = {}) {
    return IFState{Tensor<Scalar>::zeros(shape), options};
  }
};

/// One clock tick: V <- V + I, spike where V >= theta, spiking neurons reset
/// to exactly 0. The reset mask is detached so no gradient runs through it.
template <typename Scalar>
std::pair<Tensor<Scalar>, IFState<Scalar>> if_step(const IFState<Scalar>& state, const Tensor<Scalar>& input) {
  if (state.membrane.shape() != input.shape()) {
    throw ConfigurationError("if_step: state " + shape_string(state.membrane.shape()) + " vs input " +
                             shape_string(input.shape()));
  }
  const Scalar theta = state.options.threshold;
  Tensor<Scalar> charged = add(state.membrane, input);
  Tensor<Scalar> spikes = spike_forward(add_scalar(charged, -theta), state.options.surrogate, state.options.mode);
  Buffer<Scalar> keep = charged.values().unaryExpr([theta](Scalar v) { return v >= theta ? Scalar(0) : Scalar(1); });
  Tensor<Scalar> next = mul(charged, Tensor<Scalar>(charged.shape(), std::move(keep)));
  return {spikes, IFState<Scalar>{next, state.options}};
}

/// Multi-step IF over a sequence laid out time-major: input[N, ...] holds the
/// input current of every step. Returns the spikes with the same shape. This is
/// the fused equivalent of N chained `if_step` calls from a zero state.
template <typename Scalar>
Tensor<Scalar> integrate_and_fire(const Tensor<Scalar>& currents, Index time_steps, const IFOptions<Scalar>& options = {}) {
  if (time_steps < 1) throw UsageError("integrate_and_fire: need at least one time step");
  if (currents.dim(0) % time_steps != 0) {
    throw ConfigurationError("integrate_and_fire: leading extent " + std::to_string(currents.dim(0)) +
                             " is not a multiple of " + std::to_string(time_steps) + " time steps");
  }
  const Index lanes = currents.numel() / time_steps;
  const Scalar theta = options.threshold;
  const auto spec = options.surrogate;
  const bool relaxed = options.mode == SpikeMode::relaxed;
  Buffer<Scalar> charged(currents.numel());
  Buffer<Scalar> spikes(currents.numel());
  Buffer<Scalar> membrane = Buffer<Scalar>::Zero(lanes);
  const Scalar* x = currents.values().data();
  for (Index t = 0; t < time_steps; ++t) {
    for (Index i = 0; i < lanes; ++i) {
      const Index at = t * lanes + i;
      const Scalar h = membrane[i] + x[at];
      charged[at] = h;
      const bool fired = h >= theta;
      spikes[at] = relaxed ? surrogate_primitive(h - theta, spec) : (fired ? Scalar(1) : Scalar(0));
      membrane[i] = fired ? Scalar(0) : h;
    }
  }
  return make_result<Scalar>(
      "integrate_and_fire", currents.shape(), std::move(spikes), {currents.node()},
      [charged = std::move(charged), time_steps, lanes, theta, spec](Node<Scalar>& self) {
        const auto& in = self.inputs[0];
        if (!in->requires_grad) return;
        auto& dx = in->grad_buffer();
        Buffer<Scalar> carry = Buffer<Scalar>::Zero(lanes);  // dL/dV after step t
        for (Index t = time_steps - 1; t >= 0; --t) {
          for (Index i = 0; i < lanes; ++i) {
            const Index at = t * lanes + i;
            const Scalar h = charged[at];
            const Scalar keep = h >= theta ? Scalar(0) : Scalar(1);
            const Scalar dh = self.grad[at] * surrogate_derivative(h - theta, spec) + carry[i] * keep;
            dx[at] += dh;
            carry[i] = dh;
          }
        }
      });
}

}  // namespace spikereg

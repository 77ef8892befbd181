#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "spikereg/ops.hpp"

namespace spikereg::testing {

using T64 = Tensor<double>;

inline T64 random_tensor(const Shape& shape, std::mt19937_64& rng, bool requires_grad = true, double lo = -1.0,
                         double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Buffer<double> v(numel(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = dist(rng);
  return T64(shape, std::move(v), requires_grad);
}

struct GradCheck {
  double max_error = 0;  // max |analytic - fd| / max(1, |fd|)
  std::size_t points = 0;
  std::size_t skipped = 0;  // stencils that straddled a kink or jump
  double skipped_fraction() const {
    return points + skipped == 0 ? 0.0 : static_cast<double>(skipped) / static_cast<double>(points + skipped);
  }
};

/// Central differences against the tape gradient of a scalar loss. At most
/// `max_points` entries per leaf are probed, chosen at random.
///
/// The spiking models are only piecewise smooth (hard reset, max pooling), and
/// a central difference across a jump or kink says nothing about the
/// derivative. Such stencils show up as disagreeing one-sided differences; they
/// are counted in `skipped` and another entry is probed instead. At a kink the
/// central-difference error is half the one-sided gap, so `kink_tol` = 2 * tol
/// keeps every accepted point meaningful at tolerance `tol`. The test does not
/// look at the analytic gradient, so it cannot mask a wrong one.
inline GradCheck check_gradients(const std::function<T64()>& loss, const std::vector<T64>& leaves,
                                 std::size_t max_points = 50, double h = 1e-5, std::uint64_t seed = 7,
                                 double kink_tol = 2e-4) {
  for (const auto& l : leaves) l.zero_grad();
  backward(loss());
  GradCheck out;
  std::mt19937_64 rng(seed);
  double base = 0;
  {
    NoGradGuard guard;
    base = loss().item();
  }
  for (const auto& leaf : leaves) {
    const Buffer<double> analytic = leaf.has_grad() ? leaf.grad() : Buffer<double>::Zero(leaf.numel());
    std::vector<Index> idx(static_cast<std::size_t>(leaf.numel()));
    for (Index i = 0; i < leaf.numel(); ++i) idx[static_cast<std::size_t>(i)] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t accepted = 0;
    for (Index i : idx) {
      if (accepted == max_points) break;
      NoGradGuard guard;
      double& x = leaf.mutable_values()[i];
      const double saved = x;
      x = saved + h;
      const double up = loss().item();
      x = saved - h;
      const double down = loss().item();
      x = saved;
      const double fd = (up - down) / (2 * h);
      const double one_sided_gap = std::abs((up - base) - (base - down)) / h;
      if (one_sided_gap > kink_tol * std::max(1.0, std::abs(fd))) {
        ++out.skipped;
        continue;
      }
      out.max_error = std::max(out.max_error, std::abs(analytic[i] - fd) / std::max(1.0, std::abs(fd)));
      ++out.points;
      ++accepted;
    }
  }
  return out;
}

/// Six-nested-loop convolution.
inline Buffer<double> naive_conv2d(const T64& x, const T64& k, const T64& bias, Index stride, Index pad, Index groups) {
  const Index B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index O = k.dim(0), Cg = k.dim(1), KH = k.dim(2), KW = k.dim(3);
  const Index OH = (H + 2 * pad - KH) / stride + 1, OW = (W + 2 * pad - KW) / stride + 1;
  const Index Og = O / groups;
  Buffer<double> out = Buffer<double>::Zero(B * O * OH * OW);
  for (Index b = 0; b < B; ++b)
    for (Index o = 0; o < O; ++o)
      for (Index oy = 0; oy < OH; ++oy)
        for (Index ox = 0; ox < OW; ++ox) {
          double acc = bias.defined() ? bias[o] : 0.0;
          const Index g = o / Og;
          for (Index c = 0; c < Cg; ++c)
            for (Index ky = 0; ky < KH; ++ky)
              for (Index kx = 0; kx < KW; ++kx) {
                const Index iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                const Index ci = g * Cg + c;
                acc += x[((b * C + ci) * H + iy) * W + ix] * k[((o * Cg + c) * KH + ky) * KW + kx];
              }
          out[((b * O + o) * OH + oy) * OW + ox] = acc;
        }
  (void)C;
  return out;
}

inline Buffer<double> naive_matmul(const T64& a, const T64& b) {
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer<double> out = Buffer<double>::Zero(m * n);
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index p = 0; p < k; ++p) out[i * n + j] += a[i * k + p] * b[p * n + j];
  return out;
}

inline Buffer<double> naive_maxpool(const T64& x, Index k, Index s) {
  const Index M = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  const Index OH = (H - k) / s + 1, OW = (W - k) / s + 1;
  Buffer<double> out(M * OH * OW);
  for (Index m = 0; m < M; ++m)
    for (Index oy = 0; oy < OH; ++oy)
      for (Index ox = 0; ox < OW; ++ox) {
        double best = -INFINITY;
        for (Index dy = 0; dy < k; ++dy)
          for (Index dx = 0; dx < k; ++dx) best = std::max(best, x[(m * H + oy * s + dy) * W + ox * s + dx]);
        out[(m * OH + oy) * OW + ox] = best;
      }
  return out;
}

inline double max_abs_diff(const Buffer<double>& a, const Buffer<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  return a.size() == 0 ? 0.0 : (a - b).abs().maxCoeff();
}

}  // namespace spikereg::testing

#pragma once

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "spikereg/tensor.hpp"

namespace spikereg {

namespace detail {

template <typename Scalar>
void require_same_shape(const char* op, const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.shape() != b.shape()) {
    throw ConfigurationError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                             " vs " + shape_string(b.shape()));
  }
}

template <typename Scalar>
using MatMap = Eigen::Map<RowMatrix<Scalar>>;
template <typename Scalar>
using ConstMatMap = Eigen::Map<const RowMatrix<Scalar>>;

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape("add", a, b);
  return make_result<Scalar>("add", a.shape(), a.values() + b.values(), {a.node(), b.node()},
                             [](Node<Scalar>& self) {
                               accumulate_grad(self.inputs[0], self.grad);
                               accumulate_grad(self.inputs[1], self.grad);
                             });
}

template <typename Scalar>
Tensor<Scalar> sub(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape("sub", a, b);
  return make_result<Scalar>("sub", a.shape(), a.values() - b.values(), {a.node(), b.node()},
                             [](Node<Scalar>& self) {
                               accumulate_grad(self.inputs[0], self.grad);
                               accumulate_grad<Scalar>(self.inputs[1], -self.grad);
                             });
}

template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  detail::require_same_shape("mul", a, b);
  return make_result<Scalar>("mul", a.shape(), a.values() * b.values(), {a.node(), b.node()},
                             [](Node<Scalar>& self) {
                               const auto& lhs = self.inputs[0];
                               const auto& rhs = self.inputs[1];
                               accumulate_grad<Scalar>(lhs, self.grad * rhs->value);
                               accumulate_grad<Scalar>(rhs, self.grad * lhs->value);
                             });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
  return make_result<Scalar>("scale", a.shape(), a.values() * factor, {a.node()},
                             [factor](Node<Scalar>& self) {
                               accumulate_grad<Scalar>(self.inputs[0], self.grad * factor);
                             });
}

template <typename Scalar>
Tensor<Scalar> add_scalar(const Tensor<Scalar>& a, Scalar offset) {
  return make_result<Scalar>("add_scalar", a.shape(), a.values() + offset, {a.node()},
                             [](Node<Scalar>& self) { accumulate_grad(self.inputs[0], self.grad); });
}

template <typename Scalar>
Tensor<Scalar> square(const Tensor<Scalar>& a) {
  return make_result<Scalar>("square", a.shape(), a.values().square(), {a.node()},
                             [](Node<Scalar>& self) {
                               const auto& in = self.inputs[0];
                               accumulate_grad<Scalar>(in, Scalar(2) * in->value * self.grad);
                             });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return add(a, b); }
template <typename Scalar>
Tensor<Scalar> operator-(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return sub(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, const Tensor<Scalar>& b) { return mul(a, b); }
template <typename Scalar>
Tensor<Scalar> operator*(const Tensor<Scalar>& a, Scalar s) { return scale(a, s); }
template <typename Scalar>
Tensor<Scalar> operator*(Scalar s, const Tensor<Scalar>& a) { return scale(a, s); }

// ---------------------------------------------------------------------------
// Reductions and views
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
  return make_result<Scalar>("sum", {1}, Buffer<Scalar>::Constant(1, a.values().sum()), {a.node()},
                             [](Node<Scalar>& self) {
                               const auto& in = self.inputs[0];
                               accumulate_grad<Scalar>(in, Buffer<Scalar>::Constant(in->value.size(), self.grad[0]));
                             });
}

template <typename Scalar>
Tensor<Scalar> mean(const Tensor<Scalar>& a) {
  const Scalar inv = Scalar(1) / static_cast<Scalar>(a.numel());
  return make_result<Scalar>("mean", {1}, Buffer<Scalar>::Constant(1, a.values().sum() * inv),
                             {a.node()}, [inv](Node<Scalar>& self) {
                               const auto& in = self.inputs[0];
                               accumulate_grad<Scalar>(in, Buffer<Scalar>::Constant(in->value.size(), self.grad[0] * inv));
                             });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw ConfigurationError("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  return make_result<Scalar>("reshape", std::move(shape), a.values(), {a.node()},
                             [](Node<Scalar>& self) { accumulate_grad(self.inputs[0], self.grad); });
}

/// [M, d1, d2, ...] -> [M, d1*d2*...]
template <typename Scalar>
Tensor<Scalar> flatten(const Tensor<Scalar>& a) {
  return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

// ---------------------------------------------------------------------------
// Dense products
// ---------------------------------------------------------------------------

template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ConfigurationError("matmul: incompatible operands " + shape_string(a.shape()) + " and " +
                             shape_string(b.shape()));
  }
  const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Buffer<Scalar> out(m * n);
  detail::MatMap<Scalar>(out.data(), m, n).noalias() =
      detail::ConstMatMap<Scalar>(a.values().data(), m, k) * detail::ConstMatMap<Scalar>(b.values().data(), k, n);
  return make_result<Scalar>("matmul", {m, n}, std::move(out), {a.node(), b.node()},
                             [m, k, n](Node<Scalar>& self) {
                               const auto& lhs = self.inputs[0];
                               const auto& rhs = self.inputs[1];
                               detail::ConstMatMap<Scalar> dc(self.grad.data(), m, n);
                               if (lhs->requires_grad) {
                                 detail::MatMap<Scalar>(lhs->grad_buffer().data(), m, k).noalias() +=
                                     dc * detail::ConstMatMap<Scalar>(rhs->value.data(), k, n).transpose();
                               }
                               if (rhs->requires_grad) {
                                 detail::MatMap<Scalar>(rhs->grad_buffer().data(), k, n).noalias() +=
                                     detail::ConstMatMap<Scalar>(lhs->value.data(), m, k).transpose() * dc;
                               }
                             });
}

/// Fully connected map: x[M, in] * weight[out, in]^T + bias[out].
/// `bias` may be an undefined tensor.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(1)) {
    throw ConfigurationError("linear: input " + shape_string(x.shape()) + " does not match weight " +
                             shape_string(weight.shape()));
  }
  const Index m = x.dim(0), in = x.dim(1), out = weight.dim(0);
  if (bias.defined() && bias.numel() != out) {
    throw ConfigurationError("linear: bias " + shape_string(bias.shape()) + " for " + std::to_string(out) +
                             " outputs");
  }
  Buffer<Scalar> y(m * out);
  detail::MatMap<Scalar> ym(y.data(), m, out);
  ym.noalias() = detail::ConstMatMap<Scalar>(x.values().data(), m, in) *
                 detail::ConstMatMap<Scalar>(weight.values().data(), out, in).transpose();
  if (bias.defined()) ym.rowwise() += bias.values().matrix().transpose();
  std::vector<std::shared_ptr<Node<Scalar>>> inputs{x.node(), weight.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result<Scalar>("linear", {m, out}, std::move(y), std::move(inputs),
                             [m, in, out](Node<Scalar>& self) {
                               detail::ConstMatMap<Scalar> dy(self.grad.data(), m, out);
                               const auto& xn = self.inputs[0];
                               const auto& wn = self.inputs[1];
                               if (xn->requires_grad) {
                                 detail::MatMap<Scalar>(xn->grad_buffer().data(), m, in).noalias() +=
                                     dy * detail::ConstMatMap<Scalar>(wn->value.data(), out, in);
                               }
                               if (wn->requires_grad) {
                                 detail::MatMap<Scalar>(wn->grad_buffer().data(), out, in).noalias() +=
                                     dy.transpose() * detail::ConstMatMap<Scalar>(xn->value.data(), m, in);
                               }
                               if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                                 self.inputs[2]->grad_buffer() += dy.colwise().sum().transpose().array();
                               }
                             });
}

// ---------------------------------------------------------------------------
// Convolution and pooling
// ---------------------------------------------------------------------------

struct Conv2dOptions {
  Index stride = 1;
  Index padding = 0;
  Index groups = 1;
};

namespace detail {

struct ConvGeometry {
  Index batch, in_channels, height, width;
  Index out_channels, kernel_h, kernel_w;
  Index stride, padding, groups;
  Index out_h, out_w;

  Index in_per_group() const { return in_channels / groups; }
  Index out_per_group() const { return out_channels / groups; }
  Index patch() const { return in_per_group() * kernel_h * kernel_w; }
  Index out_plane() const { return out_h * out_w; }
  bool pointwise() const { return kernel_h == 1 && kernel_w == 1 && stride == 1 && padding == 0; }
};

// Unfolds the channels [c0, c0 + Cg) of one sample into col[patch, out_plane].
template <typename Scalar>
void im2col(const ConvGeometry& g, const Scalar* sample, Index c0, Scalar* col) {
  const Index plane = g.height * g.width;
  Index row = 0;
  for (Index c = 0; c < g.in_per_group(); ++c) {
    const Scalar* channel = sample + (c0 + c) * plane;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj, ++row) {
        Scalar* dst = col + row * g.out_plane();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          Scalar* line = dst + oh * g.out_w;
          if (ih < 0 || ih >= g.height) {
            std::fill(line, line + g.out_w, Scalar(0));
            continue;
          }
          const Scalar* src = channel + ih * g.width;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj;
            line[ow] = (iw >= 0 && iw < g.width) ? src[iw] : Scalar(0);
          }
        }
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const ConvGeometry& g, const Scalar* col, Index c0, Scalar* sample) {
  const Index plane = g.height * g.width;
  Index row = 0;
  for (Index c = 0; c < g.in_per_group(); ++c) {
    Scalar* channel = sample + (c0 + c) * plane;
    for (Index ki = 0; ki < g.kernel_h; ++ki) {
      for (Index kj = 0; kj < g.kernel_w; ++kj, ++row) {
        const Scalar* src = col + row * g.out_plane();
        for (Index oh = 0; oh < g.out_h; ++oh) {
          const Index ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.height) continue;
          Scalar* dst = channel + ih * g.width;
          const Scalar* line = src + oh * g.out_w;
          for (Index ow = 0; ow < g.out_w; ++ow) {
            const Index iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.width) dst[iw] += line[ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation over [B, C_in, H, W] with kernel [C_out, C_in/groups, kh, kw].
/// `bias` ([C_out]) may be undefined.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernel, const Tensor<Scalar>& bias,
                      Conv2dOptions options = {}) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw ConfigurationError("conv2d: expected 4-d input and kernel, got " + shape_string(input.shape()) + " and " +
                             shape_string(kernel.shape()));
  }
  if (options.stride < 1 || options.padding < 0 || options.groups < 1) {
    throw ConfigurationError("conv2d: stride must be >= 1, padding >= 0, groups >= 1");
  }
  detail::ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3),
                         kernel.dim(0), kernel.dim(2), kernel.dim(3),
                         options.stride, options.padding, options.groups, 0, 0};
  if (g.in_channels % g.groups != 0 || g.out_channels % g.groups != 0) {
    throw ConfigurationError("conv2d: channels " + std::to_string(g.in_channels) + "->" +
                             std::to_string(g.out_channels) + " not divisible by groups " + std::to_string(g.groups));
  }
  if (kernel.dim(1) != g.in_per_group()) {
    throw ConfigurationError("conv2d: kernel " + shape_string(kernel.shape()) + " does not match input " +
                             shape_string(input.shape()) + " with groups " + std::to_string(g.groups));
  }
  const Index span_h = g.height + 2 * g.padding - g.kernel_h;
  const Index span_w = g.width + 2 * g.padding - g.kernel_w;
  if (span_h < 0 || span_w < 0) {
    throw ConfigurationError("conv2d: non-positive output extent for input " + shape_string(input.shape()) +
                             " and kernel " + shape_string(kernel.shape()));
  }
  g.out_h = span_h / g.stride + 1;
  g.out_w = span_w / g.stride + 1;
  if (bias.defined() && bias.numel() != g.out_channels) {
    throw ConfigurationError("conv2d: bias " + shape_string(bias.shape()) + " for " +
                             std::to_string(g.out_channels) + " output channels");
  }

  const Index in_sample = g.in_channels * g.height * g.width;
  const Index out_sample = g.out_channels * g.out_plane();
  Buffer<Scalar> out(g.batch * out_sample);
  Buffer<Scalar> col(g.pointwise() ? 0 : g.patch() * g.out_plane());
  const Scalar* x = input.values().data();
  const Scalar* w = kernel.values().data();
  for (Index b = 0; b < g.batch; ++b) {
    for (Index grp = 0; grp < g.groups; ++grp) {
      const Scalar* cols = x + b * in_sample + grp * g.in_per_group() * g.height * g.width;
      if (!g.pointwise()) {
        detail::im2col(g, x + b * in_sample, grp * g.in_per_group(), col.data());
        cols = col.data();
      }
      detail::MatMap<Scalar>(out.data() + b * out_sample + grp * g.out_per_group() * g.out_plane(),
                             g.out_per_group(), g.out_plane())
          .noalias() = detail::ConstMatMap<Scalar>(w + grp * g.out_per_group() * g.patch(), g.out_per_group(),
                                                   g.patch()) *
                       detail::ConstMatMap<Scalar>(cols, g.patch(), g.out_plane());
    }
    if (bias.defined()) {
      detail::MatMap<Scalar>(out.data() + b * out_sample, g.out_channels, g.out_plane()).colwise() +=
          bias.values().matrix();
    }
  }

  std::vector<std::shared_ptr<Node<Scalar>>> inputs{input.node(), kernel.node()};
  if (bias.defined()) inputs.push_back(bias.node());
  return make_result<Scalar>(
      "conv2d", {g.batch, g.out_channels, g.out_h, g.out_w}, std::move(out), std::move(inputs),
      [g, in_sample, out_sample](Node<Scalar>& self) {
        const auto& xn = self.inputs[0];
        const auto& wn = self.inputs[1];
        const bool want_x = xn->requires_grad;
        const bool want_w = wn->requires_grad;
        Scalar* dx = want_x ? xn->grad_buffer().data() : nullptr;
        Scalar* dw = want_w ? wn->grad_buffer().data() : nullptr;
        Buffer<Scalar> col(g.pointwise() ? 0 : g.patch() * g.out_plane());
        Buffer<Scalar> dcol(g.pointwise() ? 0 : g.patch() * g.out_plane());
        for (Index b = 0; b < g.batch; ++b) {
          for (Index grp = 0; grp < g.groups; ++grp) {
            detail::ConstMatMap<Scalar> dy(self.grad.data() + b * out_sample + grp * g.out_per_group() * g.out_plane(),
                                           g.out_per_group(), g.out_plane());
            const Index x_offset = b * in_sample + grp * g.in_per_group() * g.height * g.width;
            const Index w_offset = grp * g.out_per_group() * g.patch();
            if (want_w) {
              const Scalar* cols = xn->value.data() + x_offset;
              if (!g.pointwise()) {
                detail::im2col(g, xn->value.data() + b * in_sample, grp * g.in_per_group(), col.data());
                cols = col.data();
              }
              detail::MatMap<Scalar>(dw + w_offset, g.out_per_group(), g.patch()).noalias() +=
                  dy * detail::ConstMatMap<Scalar>(cols, g.patch(), g.out_plane()).transpose();
            }
            if (want_x) {
              detail::ConstMatMap<Scalar> wg(wn->value.data() + w_offset, g.out_per_group(), g.patch());
              if (g.pointwise()) {
                detail::MatMap<Scalar>(dx + x_offset, g.patch(), g.out_plane()).noalias() += wg.transpose() * dy;
              } else {
                detail::MatMap<Scalar>(dcol.data(), g.patch(), g.out_plane()).noalias() = wg.transpose() * dy;
                detail::col2im_add(g, dcol.data(), grp * g.in_per_group(), dx + b * in_sample);
              }
            }
          }
        }
        if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
          auto& db = self.inputs[2]->grad_buffer();
          for (Index b = 0; b < g.batch; ++b) {
            db += detail::ConstMatMap<Scalar>(self.grad.data() + b * out_sample, g.out_channels, g.out_plane())
                      .rowwise()
                      .sum()
                      .array();
          }
        }
      });
}

/// Max over k×k windows with stride s (no padding). The gradient goes to the
/// first maximal element in row-major window order.
template <typename Scalar>
Tensor<Scalar> maxpool2d(const Tensor<Scalar>& input, Index k, Index s) {
  if (input.rank() != 4) throw ConfigurationError("maxpool2d: expected 4-d input, got " + shape_string(input.shape()));
  if (k < 1 || s < 1) throw ConfigurationError("maxpool2d: kernel and stride must be >= 1");
  const Index m = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h < k || w < k) {
    throw ConfigurationError("maxpool2d: window " + std::to_string(k) + " larger than input " +
                             shape_string(input.shape()));
  }
  const Index oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  Buffer<Scalar> out(m * c * oh * ow);
  std::vector<Index> argmax(static_cast<std::size_t>(out.size()));
  const Scalar* x = input.values().data();
  Index o = 0;
  for (Index plane = 0; plane < m * c; ++plane) {
    const Index base = plane * h * w;
    for (Index i = 0; i < oh; ++i) {
      for (Index j = 0; j < ow; ++j, ++o) {
        Index best = base + (i * s) * w + j * s;
        for (Index di = 0; di < k; ++di) {
          for (Index dj = 0; dj < k; ++dj) {
            const Index idx = base + (i * s + di) * w + (j * s + dj);
            if (x[idx] > x[best]) best = idx;
          }
        }
        out[o] = x[best];
        argmax[static_cast<std::size_t>(o)] = best;
      }
    }
  }
  return make_result<Scalar>("maxpool2d", {m, c, oh, ow}, std::move(out), {input.node()},
                             [argmax = std::move(argmax)](Node<Scalar>& self) {
                               const auto& in = self.inputs[0];
                               if (!in->requires_grad) return;
                               auto& dx = in->grad_buffer();
                               for (std::size_t i = 0; i < argmax.size(); ++i) {
                                 dx[argmax[i]] += self.grad[static_cast<Index>(i)];
                               }
                             });
}

/// Spatial mean: [M, C, H, W] -> [M, C].
template <typename Scalar>
Tensor<Scalar> global_avg_pool2d(const Tensor<Scalar>& input) {
  if (input.rank() != 4) {
    throw ConfigurationError("global_avg_pool2d: expected 4-d input, got " + shape_string(input.shape()));
  }
  const Index rows = input.dim(0) * input.dim(1), plane = input.dim(2) * input.dim(3);
  Buffer<Scalar> out = detail::ConstMatMap<Scalar>(input.values().data(), rows, plane).rowwise().mean().array();
  return make_result<Scalar>("global_avg_pool2d", {input.dim(0), input.dim(1)}, std::move(out), {input.node()},
                             [rows, plane](Node<Scalar>& self) {
                               const auto& in = self.inputs[0];
                               if (!in->requires_grad) return;
                               detail::MatMap<Scalar>(in->grad_buffer().data(), rows, plane).colwise() +=
                                   (self.grad / static_cast<Scalar>(plane)).matrix();
                             });
}

template <typename Scalar>
bool all_finite(const Tensor<Scalar>& t) {
  return t.values().isFinite().all();
}

}  // namespace spikereg

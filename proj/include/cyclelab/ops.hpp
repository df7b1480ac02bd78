#pragma once

// Differentiable operations over Graph tapes. All image tensors are NCHW.

#include "cyclelab/autodiff.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace cyclelab {

enum class Padding { zero, reflect };

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  Padding padding = Padding::zero;
};

namespace detail {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline int conv_out_extent(int in, int k, const ConvSpec& spec) {
  return (in + 2 * spec.pad - spec.dilation * (k - 1) - 1) / spec.stride + 1;
}

// Maps a padded coordinate onto the source grid; -1 means "zero padding".
inline int pad_index(int i, int extent, Padding padding) {
  if (i >= 0 && i < extent) return i;
  if (padding == Padding::zero) return -1;
  if (i < 0) i = -i;
  if (i >= extent) i = 2 * extent - 2 - i;
  return i;
}

// cols is (channels*k*k) x (out_h*out_w), row-major.
template <typename Scalar>
void im2col(const Scalar* x, int channels, int h, int w, int k, const ConvSpec& spec, int out_h,
            int out_w, Scalar* cols) {
  const int plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    const Scalar* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        Scalar* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = pad_index(oy * spec.stride - spec.pad + ki * spec.dilation, h, spec.padding);
          Scalar* dst = row + oy * out_w;
          if (iy < 0) {
            std::fill(dst, dst + out_w, Scalar(0));
            continue;
          }
          const Scalar* src = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = pad_index(ox * spec.stride - spec.pad + kj * spec.dilation, w, spec.padding);
            dst[ox] = ix < 0 ? Scalar(0) : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds cols back onto x.
template <typename Scalar>
void col2im(const Scalar* cols, int channels, int h, int w, int k, const ConvSpec& spec, int out_h,
            int out_w, Scalar* x) {
  const int plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    Scalar* xc = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const Scalar* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * plane;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = pad_index(oy * spec.stride - spec.pad + ki * spec.dilation, h, spec.padding);
          if (iy < 0) continue;
          const Scalar* src = row + oy * out_w;
          Scalar* dst = xc + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = pad_index(ox * spec.stride - spec.pad + kj * spec.dilation, w, spec.padding);
            if (ix >= 0) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

/// 2-D convolution. Weight shape (Cout, Cin, k, k), bias shape (1, Cout, 1, 1).
template <typename Scalar>
Var<Scalar> conv2d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, const ConvSpec& spec) {
  using Mat = detail::RowMatrix<Scalar>;
  Graph<Scalar>& g = *x.graph;
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.c != xs.c || ws.h != ws.w) {
    throw ShapeError("conv2d: weight " + to_string(ws) + " incompatible with input " + to_string(xs));
  }
  const int k = ws.h;
  if (spec.padding == Padding::reflect && (spec.pad >= xs.h || spec.pad >= xs.w)) {
    throw ShapeError("conv2d: reflect padding exceeds input extent");
  }
  const int out_h = detail::conv_out_extent(xs.h, k, spec);
  const int out_w = detail::conv_out_extent(xs.w, k, spec);
  if (out_h < 1 || out_w < 1) throw ShapeError("conv2d: input too small for kernel");
  const int cout = ws.n;
  const int ckk = xs.c * k * k;
  const int plane = out_h * out_w;

  const bool needs_grad = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor<Scalar> out(Shape{xs.n, cout, out_h, out_w});
  std::vector<Mat> saved_cols;
  if (needs_grad) saved_cols.reserve(static_cast<std::size_t>(xs.n));
  Eigen::Map<const Mat> wmat(weight.value().ptr(), cout, ckk);
  const auto& bvec = bias.value().data();
  Mat cols(ckk, plane);
  for (int n = 0; n < xs.n; ++n) {
    detail::im2col(x.value().sample(n), xs.c, xs.h, xs.w, k, spec, out_h, out_w, cols.data());
    Eigen::Map<Mat> y(out.sample(n), cout, plane);
    y.noalias() = wmat * cols;
    y.colwise() += bvec;
    if (needs_grad) saved_cols.push_back(cols);
  }

  const std::size_t self = g.size();
  return g.op(std::move(out), needs_grad,
              [=, saved_cols = std::move(saved_cols)](Graph<Scalar>& gr) {
                const Tensor<Scalar>& dy = gr.grad(Var<Scalar>{&gr, self});
                Eigen::Map<const Mat> wm(gr.value(weight).ptr(), cout, ckk);
                Mat dcols(ckk, plane);
                for (int n = 0; n < xs.n; ++n) {
                  Eigen::Map<const Mat> dyn(dy.sample(n), cout, plane);
                  if (gr.requires_grad(weight)) {
                    Eigen::Map<Mat> dw(gr.grad(weight).ptr(), cout, ckk);
                    dw.noalias() += dyn * saved_cols[static_cast<std::size_t>(n)].transpose();
                  }
                  if (gr.requires_grad(bias)) gr.grad(bias).data() += dyn.rowwise().sum();
                  if (gr.requires_grad(x)) {
                    dcols.noalias() = wm.transpose() * dyn;
                    detail::col2im(dcols.data(), xs.c, xs.h, xs.w, k, spec, out_h, out_w,
                                   gr.grad(x).sample(n));
                  }
                }
              });
}

/// Transposed convolution (zero padding). Weight shape (Cin, Cout, k, k).
/// Output extent is (in - 1) * stride - 2 * pad + k + output_pad.
template <typename Scalar>
Var<Scalar> conv_transpose2d(Var<Scalar> x, Var<Scalar> weight, Var<Scalar> bias, int stride, int pad,
                             int output_pad) {
  using Mat = detail::RowMatrix<Scalar>;
  Graph<Scalar>& g = *x.graph;
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  if (ws.n != xs.c || ws.h != ws.w) {
    throw ShapeError("conv_transpose2d: weight " + to_string(ws) + " incompatible with input " +
                     to_string(xs));
  }
  const int k = ws.h;
  const int cout = ws.c;
  const int out_h = (xs.h - 1) * stride - 2 * pad + k + output_pad;
  const int out_w = (xs.w - 1) * stride - 2 * pad + k + output_pad;
  const ConvSpec spec{stride, pad, 1, Padding::zero};
  const int ckk = cout * k * k;
  const int plane = xs.h * xs.w;

  const bool needs_grad = x.requires_grad() || weight.requires_grad() || bias.requires_grad();
  Tensor<Scalar> out(Shape{xs.n, cout, out_h, out_w});
  Eigen::Map<const Mat> wmat(weight.value().ptr(), xs.c, ckk);
  const auto& bvec = bias.value().data();
  Mat cols(ckk, plane);
  for (int n = 0; n < xs.n; ++n) {
    Eigen::Map<const Mat> xn(x.value().sample(n), xs.c, plane);
    cols.noalias() = wmat.transpose() * xn;
    detail::col2im(cols.data(), cout, out_h, out_w, k, spec, xs.h, xs.w, out.sample(n));
    Eigen::Map<Mat> y(out.sample(n), cout, out_h * out_w);
    y.colwise() += bvec;
  }

  const std::size_t self = g.size();
  return g.op(std::move(out), needs_grad, [=](Graph<Scalar>& gr) {
    const Tensor<Scalar>& dy = gr.grad(Var<Scalar>{&gr, self});
    Eigen::Map<const Mat> wm(gr.value(weight).ptr(), xs.c, ckk);
    Mat dcols(ckk, plane);
    for (int n = 0; n < xs.n; ++n) {
      detail::im2col(dy.sample(n), cout, out_h, out_w, k, spec, xs.h, xs.w, dcols.data());
      if (gr.requires_grad(bias)) {
        Eigen::Map<const Mat> dyn(dy.sample(n), cout, out_h * out_w);
        gr.grad(bias).data() += dyn.rowwise().sum();
      }
      if (gr.requires_grad(weight)) {
        Eigen::Map<const Mat> xn(gr.value(x).sample(n), xs.c, plane);
        Eigen::Map<Mat> dw(gr.grad(weight).ptr(), xs.c, ckk);
        dw.noalias() += xn * dcols.transpose();
      }
      if (gr.requires_grad(x)) {
        Eigen::Map<Mat> dx(gr.grad(x).sample(n), xs.c, plane);
        dx.noalias() += wm * dcols;
      }
    }
  });
}

/// Per-sample, per-channel normalization without affine parameters.
template <typename Scalar>
Var<Scalar> instance_norm(Var<Scalar> x, Scalar eps = Scalar(1e-5)) {
  Graph<Scalar>& g = *x.graph;
  const Shape xs = x.shape();
  const auto plane = static_cast<Eigen::Index>(xs.plane());
  const int groups = xs.n * xs.c;
  Tensor<Scalar> out(xs);
  std::vector<Scalar> inv_std(static_cast<std::size_t>(groups));
  for (int i = 0; i < groups; ++i) {
    Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> v(x.value().ptr() + i * plane, plane);
    Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> o(out.ptr() + i * plane, plane);
    const Scalar mean = v.mean();
    const Scalar var = (v.array() - mean).square().mean();
    const Scalar is = Scalar(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(i)] = is;
    o = (v.array() - mean) * is;
  }
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    const Var<Scalar> me{&gr, self};
    const Tensor<Scalar>& dy = gr.grad(me);
    const Tensor<Scalar>& xhat = gr.value(me);
    Tensor<Scalar>& dx = gr.grad(x);
    for (int i = 0; i < groups; ++i) {
      using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
      Eigen::Map<const Vec> d(dy.ptr() + i * plane, plane);
      Eigen::Map<const Vec> xh(xhat.ptr() + i * plane, plane);
      Eigen::Map<Vec> dxi(dx.ptr() + i * plane, plane);
      const Scalar mean_d = d.mean();
      const Scalar mean_dx = d.dot(xh) / static_cast<Scalar>(plane);
      dxi.array() += inv_std[static_cast<std::size_t>(i)] * (d.array() - mean_d - xh.array() * mean_dx);
    }
  });
}

/// Elementwise max(x, slope * x); slope 0 gives ReLU.
template <typename Scalar>
Var<Scalar> leaky_relu(Var<Scalar> x, Scalar slope) {
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out = x.value();
  auto& d = out.data();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (g.track_kinks()) g.fold_kink(d[i] > 0);
    if (!(d[i] > 0)) d[i] *= slope;
  }
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    const auto& dy = gr.grad(Var<Scalar>{&gr, self}).data();
    const auto& xv = gr.value(x).data();
    auto& dx = gr.grad(x).data();
    for (Eigen::Index i = 0; i < dy.size(); ++i) dx[i] += xv[i] > 0 ? dy[i] : slope * dy[i];
  });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> x) {
  return leaky_relu(x, Scalar(0));
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> x) {
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out(x.shape(), x.value().data().array().tanh().matrix());
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    const Var<Scalar> me{&gr, self};
    const auto& y = gr.value(me).data().array();
    gr.grad(x).data().array() += gr.grad(me).data().array() * (Scalar(1) - y.square());
  });
}

/// Clamps into [lo, hi]; the gradient is passed only where the input is strictly inside.
template <typename Scalar>
Var<Scalar> clamp(Var<Scalar> x, Scalar lo, Scalar hi) {
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out = x.value();
  auto& d = out.data();
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (g.track_kinks()) g.fold_kink(d[i] > lo && d[i] < hi);
    d[i] = std::clamp(d[i], lo, hi);
  }
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    const auto& dy = gr.grad(Var<Scalar>{&gr, self}).data();
    const auto& xv = gr.value(x).data();
    auto& dx = gr.grad(x).data();
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
      if (xv[i] > lo && xv[i] < hi) dx[i] += dy[i];
    }
  });
}

template <typename Scalar>
Var<Scalar> operator+(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "add");
  Graph<Scalar>& g = *a.graph;
  Tensor<Scalar> out(a.shape(), a.value().data() + b.value().data());
  const std::size_t self = g.size();
  return g.op(std::move(out), a.requires_grad() || b.requires_grad(), [=](Graph<Scalar>& gr) {
    const auto& dy = gr.grad(Var<Scalar>{&gr, self}).data();
    if (gr.requires_grad(a)) gr.grad(a).data() += dy;
    if (gr.requires_grad(b)) gr.grad(b).data() += dy;
  });
}

template <typename Scalar>
Var<Scalar> operator-(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "sub");
  Graph<Scalar>& g = *a.graph;
  Tensor<Scalar> out(a.shape(), a.value().data() - b.value().data());
  const std::size_t self = g.size();
  return g.op(std::move(out), a.requires_grad() || b.requires_grad(), [=](Graph<Scalar>& gr) {
    const auto& dy = gr.grad(Var<Scalar>{&gr, self}).data();
    if (gr.requires_grad(a)) gr.grad(a).data() += dy;
    if (gr.requires_grad(b)) gr.grad(b).data() -= dy;
  });
}

template <typename Scalar>
Var<Scalar> operator*(Scalar s, Var<Scalar> x) {
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out(x.shape(), s * x.value().data());
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    gr.grad(x).data() += s * gr.grad(Var<Scalar>{&gr, self}).data();
  });
}

template <typename Scalar>
Var<Scalar> operator*(Var<Scalar> x, Scalar s) {
  return s * x;
}

/// Affine rescale s * x + offset (elementwise constant offset).
template <typename Scalar>
Var<Scalar> affine(Var<Scalar> x, Scalar s, Scalar offset) {
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out(x.shape(), ((s * x.value().data()).array() + offset).matrix());
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    gr.grad(x).data() += s * gr.grad(Var<Scalar>{&gr, self}).data();
  });
}

/// Stacks two tensors along the channel axis.
template <typename Scalar>
Var<Scalar> concat_channels(Var<Scalar> a, Var<Scalar> b) {
  const Shape as = a.shape();
  const Shape bs = b.shape();
  if (as.n != bs.n || as.h != bs.h || as.w != bs.w) {
    throw ShapeError("concat_channels: " + to_string(as) + " vs " + to_string(bs));
  }
  Graph<Scalar>& g = *a.graph;
  Tensor<Scalar> out(Shape{as.n, as.c + bs.c, as.h, as.w});
  const std::size_t na = as.sample_size();
  const std::size_t nb = bs.sample_size();
  for (int n = 0; n < as.n; ++n) {
    std::copy_n(a.value().sample(n), na, out.sample(n));
    std::copy_n(b.value().sample(n), nb, out.sample(n) + na);
  }
  const std::size_t self = g.size();
  return g.op(std::move(out), a.requires_grad() || b.requires_grad(), [=](Graph<Scalar>& gr) {
    const Tensor<Scalar>& dy = gr.grad(Var<Scalar>{&gr, self});
    for (int n = 0; n < as.n; ++n) {
      if (gr.requires_grad(a)) {
        Scalar* da = gr.grad(a).sample(n);
        for (std::size_t i = 0; i < na; ++i) da[i] += dy.sample(n)[i];
      }
      if (gr.requires_grad(b)) {
        Scalar* db = gr.grad(b).sample(n);
        for (std::size_t i = 0; i < nb; ++i) db[i] += dy.sample(n)[na + i];
      }
    }
  });
}

/// Constant linear map over the flattened input: vec(y) = M vec(x).
template <typename Scalar>
Var<Scalar> linear_map(Var<Scalar> x, const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& m,
                       Shape out_shape) {
  if (static_cast<std::size_t>(m.cols()) != x.value().size() ||
      static_cast<std::size_t>(m.rows()) != out_shape.size()) {
    throw ShapeError("linear_map: matrix does not match input/output sizes");
  }
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out(out_shape, m * x.value().data());
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    gr.grad(x).data().noalias() += m.transpose() * gr.grad(Var<Scalar>{&gr, self}).data();
  });
}

/// Scalar sum of all elements weighted by a constant tensor: sum(w .* x).
template <typename Scalar>
Var<Scalar> weighted_sum(Var<Scalar> x, const Tensor<Scalar>& w) {
  require_same_shape(x.shape(), w.shape(), "weighted_sum");
  Graph<Scalar>& g = *x.graph;
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = x.value().data().dot(w.data());
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    gr.grad(x).data() += gr.grad(Var<Scalar>{&gr, self})[0] * w.data();
  });
}

/// mean(|a - b|) over every element. Subgradient 0 where a == b.
template <typename Scalar>
Var<Scalar> mean_abs_diff(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "mean_abs_diff");
  Graph<Scalar>& g = *a.graph;
  const auto count = static_cast<Scalar>(a.value().size());
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  const auto& av = a.value().data();
  const auto& bv = b.value().data();
  Scalar total = 0;
  for (Eigen::Index i = 0; i < av.size(); ++i) {
    const Scalar d = av[i] - bv[i];
    if (g.track_kinks()) g.fold_kink(d > 0);
    total += std::abs(d);
  }
  out[0] = total / count;
  const std::size_t self = g.size();
  return g.op(std::move(out), a.requires_grad() || b.requires_grad(), [=](Graph<Scalar>& gr) {
    const Scalar s = gr.grad(Var<Scalar>{&gr, self})[0] / count;
    const auto& x = gr.value(a).data();
    const auto& y = gr.value(b).data();
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const Scalar d = x[i] - y[i];
      const Scalar sg = d > 0 ? s : (d < 0 ? -s : Scalar(0));
      if (gr.requires_grad(a)) gr.grad(a)[static_cast<std::size_t>(i)] += sg;
      if (gr.requires_grad(b)) gr.grad(b)[static_cast<std::size_t>(i)] -= sg;
    }
  });
}

/// mean((a - b)^2) over every element.
template <typename Scalar>
Var<Scalar> mean_sq_diff(Var<Scalar> a, Var<Scalar> b) {
  require_same_shape(a.shape(), b.shape(), "mean_sq_diff");
  Graph<Scalar>& g = *a.graph;
  const auto count = static_cast<Scalar>(a.value().size());
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = (a.value().data() - b.value().data()).squaredNorm() / count;
  const std::size_t self = g.size();
  return g.op(std::move(out), a.requires_grad() || b.requires_grad(), [=](Graph<Scalar>& gr) {
    const Scalar s = Scalar(2) * gr.grad(Var<Scalar>{&gr, self})[0] / count;
    const auto diff = (gr.value(a).data() - gr.value(b).data()).eval();
    if (gr.requires_grad(a)) gr.grad(a).data() += s * diff;
    if (gr.requires_grad(b)) gr.grad(b).data() -= s * diff;
  });
}

/// mean((x - target)^2) for a constant scalar target.
template <typename Scalar>
Var<Scalar> mean_sq_to(Var<Scalar> x, Scalar target) {
  Graph<Scalar>& g = *x.graph;
  const auto count = static_cast<Scalar>(x.value().size());
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = (x.value().data().array() - target).square().sum() / count;
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    const Scalar s = Scalar(2) * gr.grad(Var<Scalar>{&gr, self})[0] / count;
    gr.grad(x).data().array() += s * (gr.value(x).data().array() - target);
  });
}

/// mean(softplus(x) - x * target): binary cross-entropy on raw logits against a constant target.
template <typename Scalar>
Var<Scalar> bce_with_logits(Var<Scalar> x, Scalar target) {
  Graph<Scalar>& g = *x.graph;
  const auto count = static_cast<Scalar>(x.value().size());
  Scalar total = 0;
  for (const Scalar v : x.value().data()) {
    total += std::max(v, Scalar(0)) - v * target + std::log1p(std::exp(-std::abs(v)));
  }
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = total / count;
  const std::size_t self = g.size();
  return g.op(std::move(out), x.requires_grad(), [=](Graph<Scalar>& gr) {
    const Scalar s = gr.grad(Var<Scalar>{&gr, self})[0] / count;
    const auto& xv = gr.value(x).data();
    auto& dx = gr.grad(x).data();
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      dx[i] += s * (Scalar(1) / (Scalar(1) + std::exp(-xv[i])) - target);
    }
  });
}

/// Mean per-pixel softmax cross-entropy. labels holds N*H*W class indices.
template <typename Scalar>
Var<Scalar> softmax_cross_entropy(Var<Scalar> logits, const std::vector<int>& labels) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  if (labels.size() != static_cast<std::size_t>(s.n) * plane) {
    throw ShapeError("softmax_cross_entropy: label count does not match logits");
  }
  Graph<Scalar>& g = *logits.graph;
  Tensor<Scalar> probs(s);
  Scalar total = 0;
  for (int n = 0; n < s.n; ++n) {
    const Scalar* z = logits.value().sample(n);
    Scalar* p = probs.sample(n);
    for (std::size_t i = 0; i < plane; ++i) {
      Scalar zmax = z[i];
      for (int c = 1; c < s.c; ++c) zmax = std::max(zmax, z[c * plane + i]);
      Scalar denom = 0;
      for (int c = 0; c < s.c; ++c) {
        p[c * plane + i] = std::exp(z[c * plane + i] - zmax);
        denom += p[c * plane + i];
      }
      for (int c = 0; c < s.c; ++c) p[c * plane + i] /= denom;
      const int label = labels[static_cast<std::size_t>(n) * plane + i];
      if (label < 0 || label >= s.c) throw std::out_of_range("softmax_cross_entropy: label out of range");
      total -= std::log(std::max(p[label * plane + i], std::numeric_limits<Scalar>::min()));
    }
  }
  const auto count = static_cast<Scalar>(static_cast<std::size_t>(s.n) * plane);
  Tensor<Scalar> out(Shape{1, 1, 1, 1});
  out[0] = total / count;
  const std::size_t self = g.size();
  return g.op(std::move(out), logits.requires_grad(), [=](Graph<Scalar>& gr) {
    const Scalar scale = gr.grad(Var<Scalar>{&gr, self})[0] / count;
    Tensor<Scalar>& dz = gr.grad(logits);
    for (int n = 0; n < s.n; ++n) {
      const Scalar* p = probs.sample(n);
      Scalar* d = dz.sample(n);
      for (std::size_t i = 0; i < plane; ++i) {
        const int label = labels[static_cast<std::size_t>(n) * plane + i];
        for (int c = 0; c < s.c; ++c) {
          d[c * plane + i] += scale * (p[c * plane + i] - (c == label ? Scalar(1) : Scalar(0)));
        }
      }
    }
  });
}

}  // namespace cyclelab

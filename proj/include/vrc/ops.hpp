// Copyright (c) the VRC Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VRC_OPS_HPP_
#define VRC_OPS_HPP_

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "vrc/autodiff.hpp"
#include "vrc/kernels.hpp"

namespace vrc {

enum class MaskType { kNone, kA, kB };

namespace ops {

template <typename T, class Fwd, class Bwd>
Var<T> elementwise_unary(const Var<T>& x, Fwd f, Bwd dfdx) {
  Tensor<T> out(x.value().shape());
  const Tensor<T>& xv = x.value();
  for (int64_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, dfdx](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& gx = xn->ensure_grad();
    const Tensor<T>& xv = xn->value;
    for (int64_t i = 0; i < xv.size(); ++i) gx[i] += self.grad[i] * dfdx(xv[i], self.value[i]);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  VRC_CHECK_MSG(a.value().same_shape(b.value()), "add: shape mismatch");
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) detail::accumulate(an->ensure_grad(), self.grad);
    if (bn->requires_grad) detail::accumulate(bn->ensure_grad(), self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  VRC_CHECK_MSG(a.value().same_shape(b.value()), "sub: shape mismatch");
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) detail::accumulate(an->ensure_grad(), self.grad);
    if (bn->requires_grad) {
      Tensor<T>& g = bn->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  VRC_CHECK_MSG(a.value().same_shape(b.value()), "mul: shape mismatch");
  Tensor<T> out(a.value().shape());
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](Node<T>& self) {
    if (an->requires_grad) {
      Tensor<T>& g = an->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->value[i];
    }
    if (bn->requires_grad) {
      Tensor<T>& g = bn->ensure_grad();
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->value[i];
    }
  });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
  return elementwise_unary(
      x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& x, T c) {
  return elementwise_unary(
      x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh_op(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return std::tanh(v); },
      [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> softplus(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return softplus_scalar(v); },
      [](T v, T) { return T(1) / (T(1) + std::exp(-v)); });
}

template <typename T>
Var<T> exp_op(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log_op(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Var<T> sqrt_op(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return std::sqrt(v); },
      [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Var<T> reciprocal(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return T(1) / v; }, [](T, T y) { return -y * y; });
}

template <typename T>
Var<T> clamp_min(const Var<T>& x, T lo) {
  return elementwise_unary(
      x, [lo](T v) { return v > lo ? v : lo; },
      [lo](T v, T) { return v > lo ? T(1) : T(0); });
}

template <typename T>
Var<T> pow_const(const Var<T>& x, T e) {
  return elementwise_unary(
      x, [e](T v) { return std::pow(v, e); },
      [e](T v, T) { return e * std::pow(v, e - T(1)); });
}

template <typename T>
Var<T> normal_cdf(const Var<T>& x) {
  return elementwise_unary(
      x, [](T v) { return normal_cdf_scalar(v); },
      [](T v, T) { return normal_pdf_scalar(v); });
}

template <typename T>
Var<T> sum_all(const Var<T>& x) {
  T acc = 0;
  for (int64_t i = 0; i < x.value().size(); ++i) acc += x.value()[i];
  auto xn = x.node();
  return make_op<T>(Tensor<T>::scalar(acc), {x}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    T s = self.grad[0];
    for (int64_t i = 0; i < g.size(); ++i) g[i] += s;
  });
}

template <typename T>
Var<T> mean_all(const Var<T>& x) {
  return mul_scalar(sum_all(x), T(1) / T(x.value().size()));
}

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int64_t> shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

// Mask over kernel spatial taps. Type A keeps strict raster predecessors of
// the center tap; type B additionally keeps the center.
template <typename T>
Tensor<T> raster_mask(int64_t kh, int64_t kw, MaskType type) {
  VRC_CHECK_MSG(kh % 2 == 1 && kw % 2 == 1, "masked conv requires odd kernel extents");
  Tensor<T> m({kh, kw});
  int64_t center = (kh / 2) * kw + (kw / 2);
  for (int64_t i = 0; i < kh * kw; ++i) {
    bool keep = (type == MaskType::kA) ? (i < center) : (i <= center);
    m[i] = keep ? T(1) : T(0);
  }
  return m;
}

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, std::optional<Var<T>> bias,
              int64_t stride, int64_t pad, MaskType mask = MaskType::kNone) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  VRC_CHECK_MSG(xv.rank() == 4, "conv2d: input must be 4-D");
  VRC_CHECK_MSG(kv.rank() == 4, "conv2d: kernel must be 4-D");
  VRC_CHECK_MSG(stride > 0, "conv2d: stride must be positive");
  VRC_CHECK_MSG(pad >= 0, "conv2d: padding must be non-negative");
  VRC_CHECK_MSG(kv.dim(1) == xv.dim(1), "conv2d: channel mismatch");

  ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
             kv.dim(0), kv.dim(2), kv.dim(3), stride, pad, 0, 0};
  d.ho = conv_out_extent(d.h, d.kh, stride, pad);
  d.wo = conv_out_extent(d.w, d.kw, stride, pad);
  VRC_CHECK_MSG(d.ho > 0 && d.wo > 0, "conv2d: empty output");

  Tensor<T> keff = kv;
  Tensor<T> mask_t;
  if (mask != MaskType::kNone) {
    mask_t = raster_mask<T>(d.kh, d.kw, mask);
    for (int64_t oc = 0; oc < d.cout; ++oc)
      for (int64_t ic = 0; ic < d.cin; ++ic)
        for (int64_t i = 0; i < d.kh * d.kw; ++i)
          keff[(oc * d.cin + ic) * d.kh * d.kw + i] *= mask_t[i];
  }

  Tensor<T> out({d.n, d.cout, d.ho, d.wo});
  kernels::conv2d_forward(xv, keff, d, out);
  if (bias) {
    VRC_CHECK_MSG(bias->value().size() == d.cout, "conv2d: bias size mismatch");
    const Tensor<T>& bv = bias->value();
    for (int64_t n = 0; n < d.n; ++n)
      for (int64_t oc = 0; oc < d.cout; ++oc) {
        T b = bv[oc];
        T* p = out.data() + (n * d.cout + oc) * d.ho * d.wo;
        for (int64_t i = 0; i < d.ho * d.wo; ++i) p[i] += b;
      }
  }

  std::vector<Var<T>> parents = {x, kernel};
  if (bias) parents.push_back(*bias);
  auto xn = x.node();
  auto kn = kernel.node();
  auto bn = bias ? bias->node() : nullptr;
  bool masked = mask != MaskType::kNone;
  return make_op<T>(std::move(out), std::move(parents),
                    [xn, kn, bn, d, keff, mask_t, masked](Node<T>& self) {
    Tensor<T>* gin = xn->requires_grad ? &xn->ensure_grad() : nullptr;
    if (kn->requires_grad) {
      Tensor<T> gk(kn->value.shape());
      kernels::conv2d_backward(xn->value, keff, d, self.grad, gin, &gk);
      Tensor<T>& dst = kn->ensure_grad();
      if (masked) {
        for (int64_t oc = 0; oc < d.cout; ++oc)
          for (int64_t ic = 0; ic < d.cin; ++ic)
            for (int64_t i = 0; i < d.kh * d.kw; ++i) {
              int64_t idx = (oc * d.cin + ic) * d.kh * d.kw + i;
              dst[idx] += gk[idx] * mask_t[i];
            }
      } else {
        detail::accumulate(dst, gk);
      }
    } else if (gin) {
      kernels::conv2d_backward(xn->value, keff, d, self.grad, gin, nullptr);
    }
    if (bn && bn->requires_grad) {
      Tensor<T>& gb = bn->ensure_grad();
      for (int64_t n = 0; n < d.n; ++n)
        for (int64_t oc = 0; oc < d.cout; ++oc) {
          const T* p = self.grad.data() + (n * d.cout + oc) * d.ho * d.wo;
          T acc = 0;
          for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += p[i];
          gb[oc] += acc;
        }
    }
  });
}

// Kernel layout [cin, cout, kh, kw]; the adjoint of conv2d with the same
// array viewed with swapped channel roles.
template <typename T>
Var<T> transposed_conv2d(const Var<T>& x, const Var<T>& kernel,
                         std::optional<Var<T>> bias, int64_t stride, int64_t pad) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& kv = kernel.value();
  VRC_CHECK_MSG(xv.rank() == 4 && kv.rank() == 4, "transposed_conv2d: rank mismatch");
  VRC_CHECK_MSG(stride > 0, "transposed_conv2d: stride must be positive");
  VRC_CHECK_MSG(kv.dim(0) == xv.dim(1), "transposed_conv2d: channel mismatch");

  ConvDims d{xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3),
             kv.dim(1), kv.dim(2), kv.dim(3), stride, pad, 0, 0};
  d.ho = tconv_out_extent(d.h, d.kh, stride, pad);
  d.wo = tconv_out_extent(d.w, d.kw, stride, pad);
  VRC_CHECK_MSG(d.ho > 0 && d.wo > 0, "transposed_conv2d: empty output");

  Tensor<T> out({d.n, d.cout, d.ho, d.wo});
  kernels::tconv2d_forward(xv, kv, d, out);
  if (bias) {
    VRC_CHECK_MSG(bias->value().size() == d.cout, "transposed_conv2d: bias size mismatch");
    const Tensor<T>& bv = bias->value();
    for (int64_t n = 0; n < d.n; ++n)
      for (int64_t oc = 0; oc < d.cout; ++oc) {
        T b = bv[oc];
        T* p = out.data() + (n * d.cout + oc) * d.ho * d.wo;
        for (int64_t i = 0; i < d.ho * d.wo; ++i) p[i] += b;
      }
  }

  std::vector<Var<T>> parents = {x, kernel};
  if (bias) parents.push_back(*bias);
  auto xn = x.node();
  auto kn = kernel.node();
  auto bn = bias ? bias->node() : nullptr;
  return make_op<T>(std::move(out), std::move(parents), [xn, kn, bn, d](Node<T>& self) {
    Tensor<T>* gin = xn->requires_grad ? &xn->ensure_grad() : nullptr;
    Tensor<T>* gk = kn->requires_grad ? &kn->ensure_grad() : nullptr;
    if (gin || gk) kernels::tconv2d_backward(xn->value, kn->value, d, self.grad, gin, gk);
    if (bn && bn->requires_grad) {
      Tensor<T>& gb = bn->ensure_grad();
      for (int64_t n = 0; n < d.n; ++n)
        for (int64_t oc = 0; oc < d.cout; ++oc) {
          const T* p = self.grad.data() + (n * d.cout + oc) * d.ho * d.wo;
          T acc = 0;
          for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += p[i];
          gb[oc] += acc;
        }
    }
  });
}

// y[n,c,h,w] = x[n,c,h,w] * s[c] + b[c]
template <typename T>
Var<T> channel_scale_bias(const Var<T>& x, const Var<T>& s, const Var<T>& b) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4, "channel_scale_bias: input must be 4-D");
  int64_t C = xv.dim(1);
  VRC_CHECK_MSG(s.value().size() == C && b.value().size() == C,
                "channel_scale_bias: per-channel vector size mismatch");
  int64_t N = xv.dim(0), HW = xv.dim(2) * xv.dim(3);
  Tensor<T> out(xv.shape());
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      T sc = s.value()[c], bc = b.value()[c];
      const T* px = xv.data() + (n * C + c) * HW;
      T* py = out.data() + (n * C + c) * HW;
      for (int64_t i = 0; i < HW; ++i) py[i] = px[i] * sc + bc;
    }
  auto xn = x.node(), sn = s.node(), bn = b.node();
  return make_op<T>(std::move(out), {x, s, b}, [xn, sn, bn, N, C, HW](Node<T>& self) {
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T* g = self.grad.data() + (n * C + c) * HW;
        if (xn->requires_grad) {
          T sc = sn->value[c];
          T* gx = xn->ensure_grad().data() + (n * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) gx[i] += g[i] * sc;
        }
        if (sn->requires_grad) {
          const T* px = xn->value.data() + (n * C + c) * HW;
          T acc = 0;
          for (int64_t i = 0; i < HW; ++i) acc += g[i] * px[i];
          sn->ensure_grad()[c] += acc;
        }
        if (bn->requires_grad) {
          T acc = 0;
          for (int64_t i = 0; i < HW; ++i) acc += g[i];
          bn->ensure_grad()[c] += acc;
        }
      }
  });
}

// Selects row `idx` along dim 0; output has the remaining shape.
template <typename T>
Var<T> index_select0(const Var<T>& bank, int64_t idx) {
  const Tensor<T>& bv = bank.value();
  VRC_CHECK_MSG(bv.rank() >= 1, "index_select0: rank");
  VRC_CHECK_MSG(idx >= 0 && idx < bv.dim(0), "index_select0: index out of range");
  std::vector<int64_t> shape(bv.shape().begin() + 1, bv.shape().end());
  if (shape.empty()) shape = {1};
  int64_t row = bv.size() / bv.dim(0);
  Tensor<T> out(shape);
  for (int64_t i = 0; i < row; ++i) out[i] = bv[idx * row + i];
  auto n = bank.node();
  return make_op<T>(std::move(out), {bank}, [n, idx, row](Node<T>& self) {
    if (!n->requires_grad) return;
    Tensor<T>& g = n->ensure_grad();
    for (int64_t i = 0; i < row; ++i) g[idx * row + i] += self.grad[i];
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  VRC_CHECK_MSG(av.rank() == 4 && bv.rank() == 4, "concat_channels: rank");
  VRC_CHECK_MSG(av.dim(0) == bv.dim(0) && av.dim(2) == bv.dim(2) && av.dim(3) == bv.dim(3),
                "concat_channels: extent mismatch");
  int64_t N = av.dim(0), Ca = av.dim(1), Cb = bv.dim(1), HW = av.dim(2) * av.dim(3);
  Tensor<T> out({N, Ca + Cb, av.dim(2), av.dim(3)});
  for (int64_t n = 0; n < N; ++n) {
    std::copy_n(av.data() + n * Ca * HW, Ca * HW, out.data() + n * (Ca + Cb) * HW);
    std::copy_n(bv.data() + n * Cb * HW, Cb * HW, out.data() + (n * (Ca + Cb) + Ca) * HW);
  }
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn, N, Ca, Cb, HW](Node<T>& self) {
    for (int64_t n = 0; n < N; ++n) {
      if (an->requires_grad) {
        T* g = an->ensure_grad().data() + n * Ca * HW;
        const T* s = self.grad.data() + n * (Ca + Cb) * HW;
        for (int64_t i = 0; i < Ca * HW; ++i) g[i] += s[i];
      }
      if (bn->requires_grad) {
        T* g = bn->ensure_grad().data() + n * Cb * HW;
        const T* s = self.grad.data() + (n * (Ca + Cb) + Ca) * HW;
        for (int64_t i = 0; i < Cb * HW; ++i) g[i] += s[i];
      }
    }
  });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, int64_t c0, int64_t c1) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4 && c0 >= 0 && c1 <= xv.dim(1) && c0 < c1,
                "slice_channels: bad range");
  int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor<T> out({N, c1 - c0, xv.dim(2), xv.dim(3)});
  for (int64_t n = 0; n < N; ++n)
    std::copy_n(xv.data() + (n * C + c0) * HW, (c1 - c0) * HW,
                out.data() + n * (c1 - c0) * HW);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, N, C, c0, c1, HW](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t n = 0; n < N; ++n) {
      T* dst = g.data() + (n * C + c0) * HW;
      const T* s = self.grad.data() + n * (c1 - c0) * HW;
      for (int64_t i = 0; i < (c1 - c0) * HW; ++i) dst[i] += s[i];
    }
  });
}

// Zero-pads bottom/right to (new_h, new_w).
template <typename T>
Var<T> pad_spatial(const Var<T>& x, int64_t new_h, int64_t new_w) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4, "pad_spatial: rank");
  int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  VRC_CHECK_MSG(new_h >= H && new_w >= W, "pad_spatial: target smaller than input");
  if (new_h == H && new_w == W) return x;
  Tensor<T> out({N, C, new_h, new_w});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < H; ++h)
        std::copy_n(xv.data() + ((n * C + c) * H + h) * W, W,
                    out.data() + ((n * C + c) * new_h + h) * new_w);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, N, C, H, W, new_h, new_w](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < H; ++h) {
          const T* s = self.grad.data() + ((n * C + c) * new_h + h) * new_w;
          T* d = g.data() + ((n * C + c) * H + h) * W;
          for (int64_t w = 0; w < W; ++w) d[w] += s[w];
        }
  });
}

// Top-left crop to (new_h, new_w).
template <typename T>
Var<T> crop_spatial(const Var<T>& x, int64_t new_h, int64_t new_w) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4, "crop_spatial: rank");
  int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  VRC_CHECK_MSG(new_h <= H && new_w <= W, "crop_spatial: target larger than input");
  if (new_h == H && new_w == W) return x;
  Tensor<T> out({N, C, new_h, new_w});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t h = 0; h < new_h; ++h)
        std::copy_n(xv.data() + ((n * C + c) * H + h) * W, new_w,
                    out.data() + ((n * C + c) * new_h + h) * new_w);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, N, C, H, W, new_h, new_w](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t h = 0; h < new_h; ++h) {
          const T* s = self.grad.data() + ((n * C + c) * new_h + h) * new_w;
          T* d = g.data() + ((n * C + c) * H + h) * W;
          for (int64_t w = 0; w < new_w; ++w) d[w] += s[w];
        }
  });
}

// [N,C,H,W] -> density layout [C, 1, N*H*W].
template <typename T>
Var<T> to_density_layout(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4, "to_density_layout: rank");
  int64_t N = xv.dim(0), C = xv.dim(1), HW = xv.dim(2) * xv.dim(3);
  Tensor<T> out({C, 1, N * HW});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      std::copy_n(xv.data() + (n * C + c) * HW, HW, out.data() + c * N * HW + n * HW);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, N, C, HW](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t n = 0; n < N; ++n)
      for (int64_t c = 0; c < C; ++c) {
        const T* s = self.grad.data() + c * N * HW + n * HW;
        T* d = g.data() + (n * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) d[i] += s[i];
      }
  });
}

// Per-channel small matmul: y[c,j,m] = sum_i h[c,j,i] * x[c,i,m].
template <typename T>
Var<T> grouped_linear(const Var<T>& x, const Var<T>& h) {
  const Tensor<T>& xv = x.value();
  const Tensor<T>& hv = h.value();
  VRC_CHECK_MSG(xv.rank() == 3 && hv.rank() == 3, "grouped_linear: rank");
  VRC_CHECK_MSG(xv.dim(0) == hv.dim(0) && hv.dim(2) == xv.dim(1),
                "grouped_linear: shape mismatch");
  int64_t C = xv.dim(0), I = xv.dim(1), M = xv.dim(2), J = hv.dim(1);
  Tensor<T> out({C, J, M});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t j = 0; j < J; ++j) {
      T* py = out.data() + (c * J + j) * M;
      for (int64_t i = 0; i < I; ++i) {
        T w = hv[(c * J + j) * I + i];
        const T* px = xv.data() + (c * I + i) * M;
        for (int64_t m = 0; m < M; ++m) py[m] += w * px[m];
      }
    }
  auto xn = x.node(), hn = h.node();
  return make_op<T>(std::move(out), {x, h}, [xn, hn, C, I, J, M](Node<T>& self) {
    for (int64_t c = 0; c < C; ++c)
      for (int64_t j = 0; j < J; ++j) {
        const T* g = self.grad.data() + (c * J + j) * M;
        for (int64_t i = 0; i < I; ++i) {
          if (xn->requires_grad) {
            T w = hn->value[(c * J + j) * I + i];
            T* gx = xn->ensure_grad().data() + (c * I + i) * M;
            for (int64_t m = 0; m < M; ++m) gx[m] += w * g[m];
          }
          if (hn->requires_grad) {
            const T* px = xn->value.data() + (c * I + i) * M;
            T acc = 0;
            for (int64_t m = 0; m < M; ++m) acc += g[m] * px[m];
            hn->ensure_grad()[(c * J + j) * I + i] += acc;
          }
        }
      }
  });
}

// y[c,j,m] = x[c,j,m] + b[c,j]
template <typename T>
Var<T> grouped_bias(const Var<T>& x, const Var<T>& b) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 3, "grouped_bias: rank");
  int64_t C = xv.dim(0), J = xv.dim(1), M = xv.dim(2);
  VRC_CHECK_MSG(b.value().size() == C * J, "grouped_bias: size mismatch");
  Tensor<T> out(xv.shape());
  for (int64_t cj = 0; cj < C * J; ++cj) {
    T bv = b.value()[cj];
    const T* px = xv.data() + cj * M;
    T* py = out.data() + cj * M;
    for (int64_t m = 0; m < M; ++m) py[m] = px[m] + bv;
  }
  auto xn = x.node(), bn = b.node();
  return make_op<T>(std::move(out), {x, b}, [xn, bn, C, J, M](Node<T>& self) {
    for (int64_t cj = 0; cj < C * J; ++cj) {
      const T* g = self.grad.data() + cj * M;
      if (xn->requires_grad) {
        T* gx = xn->ensure_grad().data() + cj * M;
        for (int64_t m = 0; m < M; ++m) gx[m] += g[m];
      }
      if (bn->requires_grad) {
        T acc = 0;
        for (int64_t m = 0; m < M; ++m) acc += g[m];
        bn->ensure_grad()[cj] += acc;
      }
    }
  });
}

// y[c,j,m] = x[c,j,m] * s[c,j]
template <typename T>
Var<T> grouped_scale(const Var<T>& x, const Var<T>& s) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 3, "grouped_scale: rank");
  int64_t C = xv.dim(0), J = xv.dim(1), M = xv.dim(2);
  VRC_CHECK_MSG(s.value().size() == C * J, "grouped_scale: size mismatch");
  Tensor<T> out(xv.shape());
  for (int64_t cj = 0; cj < C * J; ++cj) {
    T sv = s.value()[cj];
    const T* px = xv.data() + cj * M;
    T* py = out.data() + cj * M;
    for (int64_t m = 0; m < M; ++m) py[m] = px[m] * sv;
  }
  auto xn = x.node(), sn = s.node();
  return make_op<T>(std::move(out), {x, s}, [xn, sn, C, J, M](Node<T>& self) {
    for (int64_t cj = 0; cj < C * J; ++cj) {
      const T* g = self.grad.data() + cj * M;
      if (xn->requires_grad) {
        T sv = sn->value[cj];
        T* gx = xn->ensure_grad().data() + cj * M;
        for (int64_t m = 0; m < M; ++m) gx[m] += g[m] * sv;
      }
      if (sn->requires_grad) {
        const T* px = xn->value.data() + cj * M;
        T acc = 0;
        for (int64_t m = 0; m < M; ++m) acc += g[m] * px[m];
        sn->ensure_grad()[cj] += acc;
      }
    }
  });
}

// Fixed-window valid correlation per channel (no learned parameters in the
// window); used by SSIM. y[n,c,oy,ox] = sum x[n,c,oy+fy,ox+fx] * win[fy,fx].
template <typename T>
Var<T> window_filter(const Var<T>& x, const Tensor<T>& win) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4 && win.rank() == 2, "window_filter: rank");
  int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int64_t kh = win.dim(0), kw = win.dim(1);
  VRC_CHECK_MSG(H >= kh && W >= kw, "window_filter: image smaller than window");
  int64_t ho = H - kh + 1, wo = W - kw + 1;
  Tensor<T> out({N, C, ho, wo});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* src = xv.data() + nc * H * W;
    T* dst = out.data() + nc * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox) {
        T acc = 0;
        for (int64_t fy = 0; fy < kh; ++fy)
          for (int64_t fx = 0; fx < kw; ++fx)
            acc += src[(oy + fy) * W + ox + fx] * win[fy * kw + fx];
        dst[oy * wo + ox] = acc;
      }
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, win, N, C, H, W, kh, kw, ho, wo](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const T* s = self.grad.data() + nc * ho * wo;
      T* d = g.data() + nc * H * W;
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          T gv = s[oy * wo + ox];
          for (int64_t fy = 0; fy < kh; ++fy)
            for (int64_t fx = 0; fx < kw; ++fx)
              d[(oy + fy) * W + ox + fx] += gv * win[fy * kw + fx];
        }
    }
  });
}

// 2x2 average pooling, floor semantics (trailing odd row/column dropped).
template <typename T>
Var<T> avg_pool2(const Var<T>& x) {
  const Tensor<T>& xv = x.value();
  VRC_CHECK_MSG(xv.rank() == 4, "avg_pool2: rank");
  int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int64_t ho = H / 2, wo = W / 2;
  VRC_CHECK_MSG(ho > 0 && wo > 0, "avg_pool2: image too small");
  Tensor<T> out({N, C, ho, wo});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const T* s = xv.data() + nc * H * W;
    T* d = out.data() + nc * ho * wo;
    for (int64_t oy = 0; oy < ho; ++oy)
      for (int64_t ox = 0; ox < wo; ++ox)
        d[oy * wo + ox] = (s[2 * oy * W + 2 * ox] + s[2 * oy * W + 2 * ox + 1] +
                           s[(2 * oy + 1) * W + 2 * ox] + s[(2 * oy + 1) * W + 2 * ox + 1]) *
                          T(0.25);
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, N, C, H, W, ho, wo](Node<T>& self) {
    if (!xn->requires_grad) return;
    Tensor<T>& g = xn->ensure_grad();
    for (int64_t nc = 0; nc < N * C; ++nc) {
      const T* s = self.grad.data() + nc * ho * wo;
      T* d = g.data() + nc * H * W;
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          T gv = s[oy * wo + ox] * T(0.25);
          d[2 * oy * W + 2 * ox] += gv;
          d[2 * oy * W + 2 * ox + 1] += gv;
          d[(2 * oy + 1) * W + 2 * ox] += gv;
          d[(2 * oy + 1) * W + 2 * ox + 1] += gv;
        }
    }
  });
}

}  // namespace ops
}  // namespace vrc

#endif  // VRC_OPS_HPP_

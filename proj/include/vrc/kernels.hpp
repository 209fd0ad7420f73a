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

#ifndef VRC_KERNELS_HPP_
#define VRC_KERNELS_HPP_

#include <cstdint>
#include <vector>

#include "vrc/tensor.hpp"

namespace vrc {

void gemm_raw(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
              float alpha, const float* a, int64_t lda, const float* b, int64_t ldb,
              float beta, float* c, int64_t ldc);
void gemm_raw(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
              double alpha, const double* a, int64_t lda, const double* b, int64_t ldb,
              double beta, double* c, int64_t ldc);

struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t stride, pad;
  int64_t ho, wo;
};

inline int64_t conv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int64_t tconv_out_extent(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  return (in - 1) * stride - 2 * pad + k;
}

namespace kernels {

// Unfolds one image [C,H,W] into columns [C*kh*kw, ho*wo] with zero fill
// outside the padded extent.
template <typename T>
void im2col(const T* im, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* col) {
  for (int64_t ic = 0; ic < c; ++ic) {
    for (int64_t fy = 0; fy < kh; ++fy) {
      for (int64_t fx = 0; fx < kw; ++fx) {
        T* dst = col + ((ic * kh + fy) * kw + fx) * (ho * wo);
        const T* src = im + ic * h * w;
        for (int64_t oy = 0; oy < ho; ++oy) {
          int64_t iy = oy * stride - pad + fy;
          if (iy < 0 || iy >= h) {
            for (int64_t ox = 0; ox < wo; ++ox) dst[oy * wo + ox] = T(0);
            continue;
          }
          for (int64_t ox = 0; ox < wo; ++ox) {
            int64_t ix = ox * stride - pad + fx;
            dst[oy * wo + ox] = (ix >= 0 && ix < w) ? src[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-adds columns [C*kh*kw, ho*wo] back into an image [C,H,W].
template <typename T>
void col2im_add(const T* col, int64_t c, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t ho, int64_t wo, T* im) {
  for (int64_t ic = 0; ic < c; ++ic) {
    for (int64_t fy = 0; fy < kh; ++fy) {
      for (int64_t fx = 0; fx < kw; ++fx) {
        const T* src = col + ((ic * kh + fy) * kw + fx) * (ho * wo);
        T* dst = im + ic * h * w;
        for (int64_t oy = 0; oy < ho; ++oy) {
          int64_t iy = oy * stride - pad + fy;
          if (iy < 0 || iy >= h) continue;
          for (int64_t ox = 0; ox < wo; ++ox) {
            int64_t ix = ox * stride - pad + fx;
            if (ix >= 0 && ix < w) dst[iy * w + ix] += src[oy * wo + ox];
          }
        }
      }
    }
  }
}

// out[n,oc,oy,ox] = sum_{ic,fy,fx} in[n,ic,oy*s-p+fy,ox*s-p+fx] * k[oc,ic,fy,fx]
template <typename T>
void conv2d_forward(const Tensor<T>& in, const Tensor<T>& kern, const ConvDims& d,
                    Tensor<T>& out) {
  std::vector<T> col(size_t(d.cin * d.kh * d.kw * d.ho * d.wo));
  const int64_t kcols = d.cin * d.kh * d.kw;
  for (int64_t n = 0; n < d.n; ++n) {
    im2col(in.data() + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.kh, d.kw, d.stride,
           d.pad, d.ho, d.wo, col.data());
    gemm_raw(false, false, d.cout, d.ho * d.wo, kcols, T(1), kern.data(), kcols,
             col.data(), d.ho * d.wo, T(0), out.data() + n * d.cout * d.ho * d.wo,
             d.ho * d.wo);
  }
}

template <typename T>
void conv2d_backward(const Tensor<T>& in, const Tensor<T>& kern, const ConvDims& d,
                     const Tensor<T>& gout, Tensor<T>* gin, Tensor<T>* gkern) {
  const int64_t kcols = d.cin * d.kh * d.kw;
  std::vector<T> col(size_t(kcols * d.ho * d.wo));
  for (int64_t n = 0; n < d.n; ++n) {
    const T* go = gout.data() + n * d.cout * d.ho * d.wo;
    if (gkern) {
      im2col(in.data() + n * d.cin * d.h * d.w, d.cin, d.h, d.w, d.kh, d.kw, d.stride,
             d.pad, d.ho, d.wo, col.data());
      // gK += gOut [cout, howo] x col^T [howo, kcols]
      gemm_raw(false, true, d.cout, kcols, d.ho * d.wo, T(1), go, d.ho * d.wo,
               col.data(), d.ho * d.wo, T(1), gkern->data(), kcols);
    }
    if (gin) {
      // col = K^T [kcols, cout] x gOut [cout, howo]
      gemm_raw(true, false, kcols, d.ho * d.wo, d.cout, T(1), kern.data(), kcols, go,
               d.ho * d.wo, T(0), col.data(), d.ho * d.wo);
      col2im_add(col.data(), d.cin, d.h, d.w, d.kh, d.kw, d.stride, d.pad, d.ho, d.wo,
                 gin->data() + n * d.cin * d.h * d.w);
    }
  }
}

// Transposed convolution; kernel layout [cin, cout, kh, kw].
// out[n,oc,iy*s-p+fy,ix*s-p+fx] += in[n,ic,iy,ix] * k[ic,oc,fy,fx]
template <typename T>
void tconv2d_forward(const Tensor<T>& in, const Tensor<T>& kern, const ConvDims& d,
                     Tensor<T>& out) {
  // Here d.h/d.w are the *input* extents and d.ho/d.wo the (larger) output.
  const int64_t kcols = d.cout * d.kh * d.kw;
  std::vector<T> col(size_t(kcols * d.h * d.w));
  out.fill(T(0));
  for (int64_t n = 0; n < d.n; ++n) {
    // col [cout*kh*kw, h*w] = K^T [kcols, cin] x in [cin, h*w]
    gemm_raw(true, false, kcols, d.h * d.w, d.cin, T(1), kern.data(), kcols,
             in.data() + n * d.cin * d.h * d.w, d.h * d.w, T(0), col.data(), d.h * d.w);
    col2im_add(col.data(), d.cout, d.ho, d.wo, d.kh, d.kw, d.stride, d.pad, d.h, d.w,
               out.data() + n * d.cout * d.ho * d.wo);
  }
}

template <typename T>
void tconv2d_backward(const Tensor<T>& in, const Tensor<T>& kern, const ConvDims& d,
                      const Tensor<T>& gout, Tensor<T>* gin, Tensor<T>* gkern) {
  const int64_t kcols = d.cout * d.kh * d.kw;
  std::vector<T> col(size_t(kcols * d.h * d.w));
  for (int64_t n = 0; n < d.n; ++n) {
    const T* go = gout.data() + n * d.cout * d.ho * d.wo;
    im2col(go, d.cout, d.ho, d.wo, d.kh, d.kw, d.stride, d.pad, d.h, d.w, col.data());
    if (gin) {
      // gIn [cin, h*w] += K [cin, kcols] x col [kcols, h*w]
      gemm_raw(false, false, d.cin, d.h * d.w, kcols, T(1), kern.data(), kcols,
               col.data(), d.h * d.w, T(1), gin->data() + n * d.cin * d.h * d.w,
               d.h * d.w);
    }
    if (gkern) {
      // gK [cin, kcols] += in [cin, h*w] x col^T [h*w, kcols]
      gemm_raw(false, true, d.cin, kcols, d.h * d.w, T(1),
               in.data() + n * d.cin * d.h * d.w, d.h * d.w, col.data(), d.h * d.w,
               T(1), gkern->data(), kcols);
    }
  }
}

// Reference direct-loop paths, used by tests to cross-check the GEMM route.
template <typename T>
void conv2d_forward_naive(const Tensor<T>& in, const Tensor<T>& kern, const ConvDims& d,
                          Tensor<T>& out) {
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t oc = 0; oc < d.cout; ++oc)
      for (int64_t oy = 0; oy < d.ho; ++oy)
        for (int64_t ox = 0; ox < d.wo; ++ox) {
          T acc = 0;
          for (int64_t ic = 0; ic < d.cin; ++ic)
            for (int64_t fy = 0; fy < d.kh; ++fy)
              for (int64_t fx = 0; fx < d.kw; ++fx) {
                int64_t iy = oy * d.stride - d.pad + fy;
                int64_t ix = ox * d.stride - d.pad + fx;
                if (iy < 0 || iy >= d.h || ix < 0 || ix >= d.w) continue;
                acc += in.at(n, ic, iy, ix) * kern[((oc * d.cin + ic) * d.kh + fy) * d.kw + fx];
              }
          out.at(n, oc, oy, ox) = acc;
        }
}

template <typename T>
void tconv2d_forward_naive(const Tensor<T>& in, const Tensor<T>& kern, const ConvDims& d,
                           Tensor<T>& out) {
  out.fill(T(0));
  for (int64_t n = 0; n < d.n; ++n)
    for (int64_t ic = 0; ic < d.cin; ++ic)
      for (int64_t iy = 0; iy < d.h; ++iy)
        for (int64_t ix = 0; ix < d.w; ++ix) {
          T v = in.at(n, ic, iy, ix);
          for (int64_t oc = 0; oc < d.cout; ++oc)
            for (int64_t fy = 0; fy < d.kh; ++fy)
              for (int64_t fx = 0; fx < d.kw; ++fx) {
                int64_t oy = iy * d.stride - d.pad + fy;
                int64_t ox = ix * d.stride - d.pad + fx;
                if (oy < 0 || oy >= d.ho || ox < 0 || ox >= d.wo) continue;
                out.at(n, oc, oy, ox) += v * kern[((ic * d.cout + oc) * d.kh + fy) * d.kw + fx];
              }
        }
}

}  // namespace kernels
}  // namespace vrc

#endif  // VRC_KERNELS_HPP_

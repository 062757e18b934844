/*
 * Copyright 2026 The cofor Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "cofor/tensor.hpp"

// Dense NN kernels with reverse-mode gradients. Layout conventions:
//   activations  NHWC
//   conv weights [Kh][Kw][Cin][Cout]
//   depthwise    [Kh][Kw][C]
//   dense        [In][Out]
// Every parallel loop assigns each output element to exactly one thread and
// keeps its reduction order fixed, so results are bit-identical for any
// thread count.

namespace cofor::nn {

enum class Padding { Same, Valid };

struct ConvGeom {
  int oh = 0, ow = 0;  // output extent
  int ph = 0, pw = 0;  // pad before (top, left)
};

inline ConvGeom conv_geometry(int h, int w, int kh, int kw, int stride, Padding pad) {
  ConvGeom g;
  if (pad == Padding::Same) {
    g.oh = (h + stride - 1) / stride;
    g.ow = (w + stride - 1) / stride;
    const int pad_h = std::max(0, (g.oh - 1) * stride + kh - h);
    const int pad_w = std::max(0, (g.ow - 1) * stride + kw - w);
    g.ph = pad_h / 2;
    g.pw = pad_w / 2;
  } else {
    if (h < kh || w < kw) fail("conv input smaller than kernel under valid padding");
    g.oh = (h - kh) / stride + 1;
    g.ow = (w - kw) / stride + 1;
  }
  return g;
}

// Output range [lo, hi) that keeps in = out*stride - pad + k inside [0, extent).
inline std::pair<int, int> valid_out_range(int k, int stride, int pad, int in_extent,
                                           int out_extent) {
  int lo = 0;
  while (lo < out_extent && lo * stride - pad + k < 0) ++lo;
  int hi = out_extent;
  while (hi > lo && (hi - 1) * stride - pad + k >= in_extent) --hi;
  return {lo, hi};
}

// For each input coordinate, the (k, out) pairs that touch it; CSR layout.
struct GatherTable {
  std::vector<int> offsets;        // size extent+1
  std::vector<std::pair<int, int>> pairs;  // (k, out)
};

inline GatherTable make_gather_table(int k_extent, int stride, int pad, int in_extent,
                                     int out_extent) {
  std::vector<std::vector<std::pair<int, int>>> per(in_extent);
  for (int k = 0; k < k_extent; ++k) {
    const auto [lo, hi] = valid_out_range(k, stride, pad, in_extent, out_extent);
    for (int o = lo; o < hi; ++o) per[static_cast<size_t>(o * stride - pad + k)].emplace_back(k, o);
  }
  GatherTable t;
  t.offsets.resize(static_cast<size_t>(in_extent) + 1, 0);
  for (int i = 0; i < in_extent; ++i)
    t.offsets[static_cast<size_t>(i) + 1] =
        t.offsets[static_cast<size_t>(i)] + static_cast<int>(per[static_cast<size_t>(i)].size());
  t.pairs.reserve(static_cast<size_t>(t.offsets.back()));
  for (auto& v : per) t.pairs.insert(t.pairs.end(), v.begin(), v.end());
  return t;
}

template <class S>
TensorT<S> conv2d_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b,
                          int stride, Padding pad) {
  if (x.rank() != 4 || w.rank() != 4) fail("conv2d expects NHWC input and KhKwCinCout weights");
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const int Kh = w.dim(0), Kw = w.dim(1), Cout = w.dim(3);
  if (w.dim(2) != Cin)
    fail("conv2d channel mismatch: input has " + std::to_string(Cin) + ", weights expect " +
         std::to_string(w.dim(2)));
  const bool has_bias = b.size() > 0;
  if (has_bias && (b.rank() != 1 || b.dim(0) != Cout)) fail("conv2d bias shape mismatch");
  const ConvGeom g = conv_geometry(H, W, Kh, Kw, stride, pad);

  TensorT<S> y = TensorT<S>::uninit({N, g.oh, g.ow, Cout});

  if (Kh == 1 && Kw == 1 && stride == 1) {
    // Pointwise fast path: a (H*W x Cin) x (Cin x Cout) product, four output
    // pixels per tile to reuse each weight row.
    const int64_t P = static_cast<int64_t>(H) * W;
    const S* __restrict wp = w.data();
    const S* __restrict bp = has_bias ? b.data() : nullptr;
#pragma omp parallel for schedule(static)
    for (int64_t chunk = 0; chunk < static_cast<int64_t>(N) * ((P + 3) / 4); ++chunk) {
      const int64_t tiles = (P + 3) / 4;
      const int n = static_cast<int>(chunk / tiles);
      const int64_t p0 = (chunk % tiles) * 4;
      const int64_t pn = std::min<int64_t>(4, P - p0);
      const S* __restrict xb = &x.v[(static_cast<size_t>(n) * P + p0) * Cin];
      S* __restrict yb = &y.v[(static_cast<size_t>(n) * P + p0) * Cout];
      if (pn == 4) {
        const S *x0 = xb, *x1 = xb + Cin, *x2 = xb + 2 * Cin, *x3 = xb + 3 * Cin;
        S *y0 = yb, *y1 = yb + Cout, *y2 = yb + 2 * Cout, *y3 = yb + 3 * Cout;
        for (int co = 0; co < Cout; ++co) {
          const S bv = bp ? bp[co] : S(0);
          y0[co] = bv; y1[co] = bv; y2[co] = bv; y3[co] = bv;
        }
        for (int ci = 0; ci < Cin; ++ci) {
          const S v0 = x0[ci], v1 = x1[ci], v2 = x2[ci], v3 = x3[ci];
          const S* __restrict wr = wp + static_cast<size_t>(ci) * Cout;
          for (int co = 0; co < Cout; ++co) {
            const S wv = wr[co];
            y0[co] += v0 * wv;
            y1[co] += v1 * wv;
            y2[co] += v2 * wv;
            y3[co] += v3 * wv;
          }
        }
      } else {
        for (int64_t p = 0; p < pn; ++p) {
          const S* __restrict xr = xb + p * Cin;
          S* __restrict yr = yb + p * Cout;
          for (int co = 0; co < Cout; ++co) yr[co] = bp ? bp[co] : S(0);
          for (int ci = 0; ci < Cin; ++ci) {
            const S v = xr[ci];
            const S* __restrict wr = wp + static_cast<size_t>(ci) * Cout;
            for (int co = 0; co < Cout; ++co) yr[co] += v * wr[co];
          }
        }
      }
    }
    return y;
  }

#pragma omp parallel
  {
    std::vector<S> acc(static_cast<size_t>(Cout));
#pragma omp for schedule(static)
    for (int64_t row = 0; row < static_cast<int64_t>(N) * g.oh; ++row) {
      const int n = static_cast<int>(row / g.oh);
      const int oh = static_cast<int>(row % g.oh);
      for (int ow = 0; ow < g.ow; ++ow) {
        S* __restrict ap = acc.data();
        if (has_bias) {
          const S* bp = b.data();
          for (int co = 0; co < Cout; ++co) ap[co] = bp[co];
        } else {
          std::fill(acc.begin(), acc.end(), S(0));
        }
        for (int kh = 0; kh < Kh; ++kh) {
          const int ih = oh * stride - g.ph + kh;
          if (ih < 0 || ih >= H) continue;
          for (int kw = 0; kw < Kw; ++kw) {
            const int iw = ow * stride - g.pw + kw;
            if (iw < 0 || iw >= W) continue;
            const S* __restrict xp = &x.v[((static_cast<size_t>(n) * H + ih) * W + iw) * Cin];
            const S* __restrict wp = &w.v[(static_cast<size_t>(kh) * Kw + kw) * Cin * Cout];
            for (int ci = 0; ci < Cin; ++ci) {
              const S xv = xp[ci];
              const S* __restrict wr = wp + static_cast<size_t>(ci) * Cout;
              for (int co = 0; co < Cout; ++co) ap[co] += xv * wr[co];
            }
          }
        }
        S* __restrict yp = &y.v[((static_cast<size_t>(n) * g.oh + oh) * g.ow + ow) * Cout];
        for (int co = 0; co < Cout; ++co) yp[co] = ap[co];
      }
    }
  }
  return y;
}

// Weight transpose [Kh][Kw][Cin][Cout] -> [Kh][Kw][Cout][Cin]; lets the
// input-gradient gather run with contiguous inner loops.
template <class S>
std::vector<S> transpose_weights(const TensorT<S>& w) {
  const int Kh = w.dim(0), Kw = w.dim(1), Cin = w.dim(2), Cout = w.dim(3);
  std::vector<S> wt(w.v.size());
  for (int k = 0; k < Kh * Kw; ++k) {
    const S* src = &w.v[static_cast<size_t>(k) * Cin * Cout];
    S* dst = &wt[static_cast<size_t>(k) * Cin * Cout];
    for (int ci = 0; ci < Cin; ++ci)
      for (int co = 0; co < Cout; ++co)
        dst[static_cast<size_t>(co) * Cin + ci] = src[static_cast<size_t>(ci) * Cout + co];
  }
  return wt;
}

/// Gradients accumulate (+=) into dw/db; dx is written fresh when requested.
template <class S>
void conv2d_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy, int stride,
                     Padding pad, TensorT<S>* dx, TensorT<S>* dw, TensorT<S>* db) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), Cin = x.dim(3);
  const int Kh = w.dim(0), Kw = w.dim(1), Cout = w.dim(3);
  const ConvGeom g = conv_geometry(H, W, Kh, Kw, stride, pad);
  if (dy.dim(0) != N || dy.dim(1) != g.oh || dy.dim(2) != g.ow || dy.dim(3) != Cout)
    fail("conv2d_backward upstream shape mismatch");
  const bool pointwise = (Kh == 1 && Kw == 1 && stride == 1);

  if (db) {
    S* __restrict dbp = db->data();
    for (int64_t r = 0; r < static_cast<int64_t>(N) * g.oh * g.ow; ++r) {
      const S* __restrict dyp = &dy.v[static_cast<size_t>(r) * Cout];
      for (int co = 0; co < Cout; ++co) dbp[co] += dyp[co];
    }
  }

  if (dw && pointwise) {
    const int64_t P = static_cast<int64_t>(H) * W;
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int tid = omp_get_thread_num();
      const int ci_lo = static_cast<int>(static_cast<int64_t>(Cin) * tid / nt);
      const int ci_hi = static_cast<int>(static_cast<int64_t>(Cin) * (tid + 1) / nt);
      for (int64_t p0 = 0; p0 < static_cast<int64_t>(N) * P; p0 += 4) {
        const int64_t pn = std::min<int64_t>(4, static_cast<int64_t>(N) * P - p0);
        const S* __restrict xb = &x.v[static_cast<size_t>(p0) * Cin];
        const S* __restrict db_ = &dy.v[static_cast<size_t>(p0) * Cout];
        if (pn == 4) {
          const S *x0 = xb, *x1 = xb + Cin, *x2 = xb + 2 * Cin, *x3 = xb + 3 * Cin;
          const S *d0 = db_, *d1 = db_ + Cout, *d2 = db_ + 2 * Cout, *d3 = db_ + 3 * Cout;
          for (int ci = ci_lo; ci < ci_hi; ++ci) {
            const S v0 = x0[ci], v1 = x1[ci], v2 = x2[ci], v3 = x3[ci];
            S* __restrict dwr = &dw->v[static_cast<size_t>(ci) * Cout];
            for (int co = 0; co < Cout; ++co) {
              dwr[co] += v0 * d0[co] + v1 * d1[co] + v2 * d2[co] + v3 * d3[co];
            }
          }
        } else {
          for (int64_t p = 0; p < pn; ++p) {
            const S* __restrict xr = xb + p * Cin;
            const S* __restrict dr = db_ + p * Cout;
            for (int ci = ci_lo; ci < ci_hi; ++ci) {
              const S v = xr[ci];
              S* __restrict dwr = &dw->v[static_cast<size_t>(ci) * Cout];
              for (int co = 0; co < Cout; ++co) dwr[co] += v * dr[co];
            }
          }
        }
      }
    }
  } else if (dw) {
    // One (kh,kw) slab per task, branch-free valid ranges inside.
#pragma omp parallel for schedule(static)
    for (int kidx = 0; kidx < Kh * Kw; ++kidx) {
      const int kh = kidx / Kw, kw = kidx % Kw;
      const auto [oh_lo, oh_hi] = valid_out_range(kh, stride, g.ph, H, g.oh);
      const auto [ow_lo, ow_hi] = valid_out_range(kw, stride, g.pw, W, g.ow);
      S* __restrict dwp = &dw->v[static_cast<size_t>(kidx) * Cin * Cout];
      for (int n = 0; n < N; ++n) {
        for (int oh = oh_lo; oh < oh_hi; ++oh) {
          const int ih = oh * stride - g.ph + kh;
          const S* __restrict xrow = &x.v[(static_cast<size_t>(n) * H + ih) * W * Cin];
          const S* __restrict dyrow =
              &dy.v[(static_cast<size_t>(n) * g.oh + oh) * g.ow * Cout];
          for (int ow = ow_lo; ow < ow_hi; ++ow) {
            const int iw = ow * stride - g.pw + kw;
            const S* __restrict xp = xrow + static_cast<size_t>(iw) * Cin;
            const S* __restrict dyp = dyrow + static_cast<size_t>(ow) * Cout;
            for (int ci = 0; ci < Cin; ++ci) {
              const S v = xp[ci];
              S* __restrict dwr = dwp + static_cast<size_t>(ci) * Cout;
              for (int co = 0; co < Cout; ++co) dwr[co] += v * dyp[co];
            }
          }
        }
      }
    }
  }

  if (dx) {
    const std::vector<S> wt = transpose_weights(w);
    if (pointwise) {
      *dx = TensorT<S>({N, H, W, Cin});  // accumulated below
      const int64_t P = static_cast<int64_t>(H) * W;
      const S* __restrict wtp = wt.data();
#pragma omp parallel for schedule(static)
      for (int64_t chunk = 0; chunk < static_cast<int64_t>(N) * ((P + 3) / 4); ++chunk) {
        const int64_t tiles = (P + 3) / 4;
        const int n = static_cast<int>(chunk / tiles);
        const int64_t p0 = (chunk % tiles) * 4;
        const int64_t pn = std::min<int64_t>(4, P - p0);
        const S* __restrict dyb = &dy.v[(static_cast<size_t>(n) * P + p0) * Cout];
        S* __restrict dxb = &dx->v[(static_cast<size_t>(n) * P + p0) * Cin];
        if (pn == 4) {
          const S *d0 = dyb, *d1 = dyb + Cout, *d2 = dyb + 2 * Cout, *d3 = dyb + 3 * Cout;
          S *o0 = dxb, *o1 = dxb + Cin, *o2 = dxb + 2 * Cin, *o3 = dxb + 3 * Cin;
          for (int co = 0; co < Cout; ++co) {
            const S v0 = d0[co], v1 = d1[co], v2 = d2[co], v3 = d3[co];
            const S* __restrict wr = wtp + static_cast<size_t>(co) * Cin;
            for (int ci = 0; ci < Cin; ++ci) {
              const S wv = wr[ci];
              o0[ci] += v0 * wv;
              o1[ci] += v1 * wv;
              o2[ci] += v2 * wv;
              o3[ci] += v3 * wv;
            }
          }
        } else {
          for (int64_t p = 0; p < pn; ++p) {
            const S* __restrict dr = dyb + p * Cout;
            S* __restrict ox = dxb + p * Cin;
            for (int co = 0; co < Cout; ++co) {
              const S v = dr[co];
              const S* __restrict wr = wtp + static_cast<size_t>(co) * Cin;
              for (int ci = 0; ci < Cin; ++ci) ox[ci] += v * wr[ci];
            }
          }
        }
      }
    } else {
      *dx = TensorT<S>::uninit({N, H, W, Cin});
      const GatherTable th = make_gather_table(Kh, stride, g.ph, H, g.oh);
      const GatherTable tw = make_gather_table(Kw, stride, g.pw, W, g.ow);
#pragma omp parallel
      {
        std::vector<S> acc(static_cast<size_t>(Cin));
#pragma omp for schedule(static)
        for (int64_t row = 0; row < static_cast<int64_t>(N) * H; ++row) {
          const int n = static_cast<int>(row / H);
          const int ih = static_cast<int>(row % H);
          for (int iw = 0; iw < W; ++iw) {
            std::fill(acc.begin(), acc.end(), S(0));
            S* __restrict ap = acc.data();
            for (int hi = th.offsets[ih]; hi < th.offsets[ih + 1]; ++hi) {
              const auto [kh, oh] = th.pairs[static_cast<size_t>(hi)];
              for (int wi = tw.offsets[iw]; wi < tw.offsets[iw + 1]; ++wi) {
                const auto [kw, ow] = tw.pairs[static_cast<size_t>(wi)];
                const S* __restrict dyp =
                    &dy.v[((static_cast<size_t>(n) * g.oh + oh) * g.ow + ow) * Cout];
                const S* __restrict wtr = &wt[(static_cast<size_t>(kh) * Kw + kw) * Cin * Cout];
                for (int co = 0; co < Cout; ++co) {
                  const S dv = dyp[co];
                  const S* __restrict wr = wtr + static_cast<size_t>(co) * Cin;
                  for (int ci = 0; ci < Cin; ++ci) ap[ci] += dv * wr[ci];
                }
              }
            }
            S* __restrict dxp = &dx->v[((static_cast<size_t>(n) * H + ih) * W + iw) * Cin];
            for (int ci = 0; ci < Cin; ++ci) dxp[ci] = ap[ci];
          }
        }
      }
    }
  }
}

/// Per-channel KhxKw spatial convolution, stride 1, same padding.
template <class S>
TensorT<S> depthwise_forward(const TensorT<S>& x, const TensorT<S>& w) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int Kh = w.dim(0), Kw = w.dim(1);
  if (w.rank() != 3 || w.dim(2) != C)
    fail("depthwise channel mismatch: input has " + std::to_string(C) + " channels");
  const ConvGeom g = conv_geometry(H, W, Kh, Kw, 1, Padding::Same);

  TensorT<S> y = TensorT<S>::uninit({N, H, W, C});
#pragma omp parallel
  {
    std::vector<S> acc(static_cast<size_t>(C));
#pragma omp for schedule(static)
    for (int64_t row = 0; row < static_cast<int64_t>(N) * H; ++row) {
      const int n = static_cast<int>(row / H);
      const int oh = static_cast<int>(row % H);
      const int kh_lo = std::max(0, g.ph - oh);
      const int kh_hi = std::min(Kh, H + g.ph - oh);
      for (int ow = 0; ow < W; ++ow) {
        std::fill(acc.begin(), acc.end(), S(0));
        S* __restrict ap = acc.data();
        const int kw_lo = std::max(0, g.pw - ow);
        const int kw_hi = std::min(Kw, W + g.pw - ow);
        for (int kh = kh_lo; kh < kh_hi; ++kh) {
          const int ih = oh - g.ph + kh;
          for (int kw = kw_lo; kw < kw_hi; ++kw) {
            const int iw = ow - g.pw + kw;
            const S* __restrict xp = &x.v[((static_cast<size_t>(n) * H + ih) * W + iw) * C];
            const S* __restrict wp = &w.v[(static_cast<size_t>(kh) * Kw + kw) * C];
            for (int c = 0; c < C; ++c) ap[c] += xp[c] * wp[c];
          }
        }
        S* __restrict yp = &y.v[((static_cast<size_t>(n) * H + oh) * W + ow) * C];
        for (int c = 0; c < C; ++c) yp[c] = ap[c];
      }
    }
  }
  return y;
}

template <class S>
void depthwise_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                        TensorT<S>* dx, TensorT<S>* dw) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const int Kh = w.dim(0), Kw = w.dim(1);
  const ConvGeom g = conv_geometry(H, W, Kh, Kw, 1, Padding::Same);

  if (dw) {
#pragma omp parallel for schedule(static)
    for (int kidx = 0; kidx < Kh * Kw; ++kidx) {
      const int kh = kidx / Kw, kw = kidx % Kw;
      const auto [oh_lo, oh_hi] = valid_out_range(kh, 1, g.ph, H, H);
      const auto [ow_lo, ow_hi] = valid_out_range(kw, 1, g.pw, W, W);
      S* __restrict dwp = &dw->v[static_cast<size_t>(kidx) * C];
      for (int n = 0; n < N; ++n) {
        for (int oh = oh_lo; oh < oh_hi; ++oh) {
          const int ih = oh - g.ph + kh;
          const S* __restrict xrow = &x.v[(static_cast<size_t>(n) * H + ih) * W * C];
          const S* __restrict dyrow = &dy.v[(static_cast<size_t>(n) * H + oh) * W * C];
          for (int ow = ow_lo; ow < ow_hi; ++ow) {
            const int iw = ow - g.pw + kw;
            const S* __restrict xp = xrow + static_cast<size_t>(iw) * C;
            const S* __restrict dyp = dyrow + static_cast<size_t>(ow) * C;
            for (int c = 0; c < C; ++c) dwp[c] += xp[c] * dyp[c];
          }
        }
      }
    }
  }

  if (dx) {
    *dx = TensorT<S>({N, H, W, C});
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < static_cast<int64_t>(N) * H; ++row) {
      const int n = static_cast<int>(row / H);
      const int ih = static_cast<int>(row % H);
      // oh = ih + ph - kh must land in [0, H)
      const int kh_lo = std::max(0, ih + g.ph - H + 1);
      const int kh_hi = std::min(Kh, ih + g.ph + 1);
      for (int iw = 0; iw < W; ++iw) {
        S* __restrict dxp = &dx->v[((static_cast<size_t>(n) * H + ih) * W + iw) * C];
        const int kw_lo = std::max(0, iw + g.pw - W + 1);
        const int kw_hi = std::min(Kw, iw + g.pw + 1);
        for (int kh = kh_lo; kh < kh_hi; ++kh) {
          const int oh = ih + g.ph - kh;
          for (int kw = kw_lo; kw < kw_hi; ++kw) {
            const int ow = iw + g.pw - kw;
            const S* __restrict dyp = &dy.v[((static_cast<size_t>(n) * H + oh) * W + ow) * C];
            const S* __restrict wp = &w.v[(static_cast<size_t>(kh) * Kw + kw) * C];
            for (int c = 0; c < C; ++c) dxp[c] += dyp[c] * wp[c];
          }
        }
      }
    }
  }
}

/// Depthwise spatial convolution followed by a 1x1 cross-channel convolution.
template <class S>
TensorT<S> separable_conv2d(const TensorT<S>& x, const TensorT<S>& dw_w, const TensorT<S>& pw_w,
                            const TensorT<S>& b) {
  return conv2d_forward(depthwise_forward(x, dw_w), pw_w, b, 1, Padding::Same);
}

template <class S>
TensorT<S> relu_forward(const TensorT<S>& x) {
  TensorT<S> y = TensorT<S>::uninit(x.shape);
  const int64_t n = x.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y.v[i] = x.v[i] > S(0) ? x.v[i] : S(0);
  return y;
}

template <class S>
TensorT<S> relu_backward(const TensorT<S>& x, const TensorT<S>& dy) {
  TensorT<S> dx = TensorT<S>::uninit(x.shape);
  const int64_t n = x.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) dx.v[i] = x.v[i] > S(0) ? dy.v[i] : S(0);
  return dx;
}

template <class S>
TensorT<S> residual_add(const TensorT<S>& a, const TensorT<S>& b) {
  if (!a.same_shape(b))
    fail("residual_add shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  TensorT<S> y = TensorT<S>::uninit(a.shape);
  const int64_t n = a.size();
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < n; ++i) y.v[i] = a.v[i] + b.v[i];
  return y;
}

/// Max pooling; records the spatial argmax of each output element for the
/// backward scatter.
template <class S>
TensorT<S> maxpool2d_forward(const TensorT<S>& x, int k, int stride, Padding pad,
                             std::vector<int32_t>* argmax) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const ConvGeom g = conv_geometry(H, W, k, k, stride, pad);
  TensorT<S> y = TensorT<S>::uninit({N, g.oh, g.ow, C});
  argmax->assign(static_cast<size_t>(y.size()), -1);
#pragma omp parallel for schedule(static)
  for (int64_t row = 0; row < static_cast<int64_t>(N) * g.oh; ++row) {
    const int n = static_cast<int>(row / g.oh);
    const int oh = static_cast<int>(row % g.oh);
    for (int ow = 0; ow < g.ow; ++ow) {
      const size_t out_base = ((static_cast<size_t>(n) * g.oh + oh) * g.ow + ow) * C;
      S* __restrict yp = &y.v[out_base];
      int32_t* __restrict am = argmax->data() + out_base;
      for (int c = 0; c < C; ++c) yp[c] = -std::numeric_limits<S>::infinity();
      for (int kh = 0; kh < k; ++kh) {
        const int ih = oh * stride - g.ph + kh;
        if (ih < 0 || ih >= H) continue;
        for (int kw = 0; kw < k; ++kw) {
          const int iw = ow * stride - g.pw + kw;
          if (iw < 0 || iw >= W) continue;
          const S* __restrict xp = &x.v[((static_cast<size_t>(n) * H + ih) * W + iw) * C];
          const int32_t spatial = static_cast<int32_t>(ih * W + iw);
          for (int c = 0; c < C; ++c) {
            if (xp[c] > yp[c]) {
              yp[c] = xp[c];
              am[c] = spatial;
            }
          }
        }
      }
    }
  }
  return y;
}

template <class S>
TensorT<S> maxpool2d_backward(const TensorT<S>& dy, const std::vector<int32_t>& argmax,
                              const std::vector<int>& x_shape) {
  TensorT<S> dx(x_shape);
  const int N = x_shape[0], C = x_shape[3];
  const int64_t per_image = dy.size() / N;
  const int64_t x_per_image = dx.size() / N;
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const S* __restrict dyp = &dy.v[static_cast<size_t>(n) * per_image];
    const int32_t* __restrict am = argmax.data() + static_cast<size_t>(n) * per_image;
    S* __restrict dxp = &dx.v[static_cast<size_t>(n) * x_per_image];
    for (int64_t i = 0; i < per_image; ++i) {
      dxp[static_cast<size_t>(am[i]) * C + (i % C)] += dyp[i];
    }
  }
  return dx;
}

template <class S>
TensorT<S> global_avg_pool_forward(const TensorT<S>& x) {
  const int N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  TensorT<S> y({N, C});
  const S inv = S(1) / static_cast<S>(static_cast<int64_t>(H) * W);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    S* __restrict yp = &y.v[static_cast<size_t>(n) * C];
    const S* __restrict xp = &x.v[static_cast<size_t>(n) * H * W * C];
    for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p) {
      const S* __restrict r = xp + p * C;
      for (int c = 0; c < C; ++c) yp[c] += r[c];
    }
    for (int c = 0; c < C; ++c) yp[c] *= inv;
  }
  return y;
}

template <class S>
TensorT<S> global_avg_pool_backward(const TensorT<S>& dy, const std::vector<int>& x_shape) {
  const int N = x_shape[0], H = x_shape[1], W = x_shape[2], C = x_shape[3];
  TensorT<S> dx = TensorT<S>::uninit(x_shape);
  const S inv = S(1) / static_cast<S>(static_cast<int64_t>(H) * W);
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const S* __restrict dyp = &dy.v[static_cast<size_t>(n) * C];
    S* __restrict dxp = &dx.v[static_cast<size_t>(n) * H * W * C];
    for (int64_t p = 0; p < static_cast<int64_t>(H) * W; ++p) {
      S* __restrict r = dxp + p * C;
      for (int c = 0; c < C; ++c) r[c] = dyp[c] * inv;
    }
  }
  return dx;
}

template <class S>
TensorT<S> dense_forward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& b) {
  const int N = x.dim(0), In = x.dim(1);
  if (w.dim(0) != In) fail("dense shape mismatch");
  const int Out = w.dim(1);
  TensorT<S> y = TensorT<S>::uninit({N, Out});
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    S* __restrict yp = &y.v[static_cast<size_t>(n) * Out];
    for (int o = 0; o < Out; ++o) yp[o] = b.size() ? b.v[o] : S(0);
    const S* __restrict xp = &x.v[static_cast<size_t>(n) * In];
    for (int i = 0; i < In; ++i) {
      const S xv = xp[i];
      const S* __restrict wr = &w.v[static_cast<size_t>(i) * Out];
      for (int o = 0; o < Out; ++o) yp[o] += xv * wr[o];
    }
  }
  return y;
}

template <class S>
void dense_backward(const TensorT<S>& x, const TensorT<S>& w, const TensorT<S>& dy,
                    TensorT<S>* dx, TensorT<S>* dw, TensorT<S>* db) {
  const int N = x.dim(0), In = x.dim(1), Out = w.dim(1);
  if (db) {
    for (int n = 0; n < N; ++n) {
      const S* __restrict dyp = &dy.v[static_cast<size_t>(n) * Out];
      for (int o = 0; o < Out; ++o) db->v[o] += dyp[o];
    }
  }
  if (dw) {
#pragma omp parallel
    {
      const int nt = omp_get_num_threads();
      const int tid = omp_get_thread_num();
      const int i_lo = static_cast<int>(static_cast<int64_t>(In) * tid / nt);
      const int i_hi = static_cast<int>(static_cast<int64_t>(In) * (tid + 1) / nt);
      for (int n = 0; n < N; ++n) {
        const S* __restrict xp = &x.v[static_cast<size_t>(n) * In];
        const S* __restrict dyp = &dy.v[static_cast<size_t>(n) * Out];
        for (int i = i_lo; i < i_hi; ++i) {
          const S xv = xp[i];
          S* __restrict dwr = &dw->v[static_cast<size_t>(i) * Out];
          for (int o = 0; o < Out; ++o) dwr[o] += xv * dyp[o];
        }
      }
    }
  }
  if (dx) {
    *dx = TensorT<S>({N, In});
#pragma omp parallel for schedule(static)
    for (int n = 0; n < N; ++n) {
      const S* __restrict dyp = &dy.v[static_cast<size_t>(n) * Out];
      S* __restrict dxp = &dx->v[static_cast<size_t>(n) * In];
      for (int o = 0; o < Out; ++o) {
        const S dv = dyp[o];
        const S* __restrict wr = &w.v[static_cast<size_t>(o)];  // strided column
        for (int i = 0; i < In; ++i) dxp[i] += dv * wr[static_cast<size_t>(i) * Out];
      }
    }
  }
}

template <class S>
inline S softplus(S z) {
  if (z > S(30)) return z;
  if (z < S(-30)) return std::exp(z);
  return std::log1p(std::exp(z));
}

template <class S>
inline S sigmoid(S z) {
  if (z >= S(0)) return S(1) / (S(1) + std::exp(-z));
  const S e = std::exp(z);
  return e / (S(1) + e);
}

/// loss = softplus(logit) - label*logit; dlogit = sigmoid(logit) - label.
template <class S>
std::pair<S, S> sigmoid_xent(S logit, S label) {
  return {softplus(logit) - label * logit, sigmoid(logit) - label};
}

/// loss = logsumexp(logits) - logits[label]; dlogits = softmax - onehot.
template <class S>
std::pair<S, std::vector<S>> softmax_xent(const std::vector<S>& logits, int label) {
  const int C = static_cast<int>(logits.size());
  if (C < 2) fail("softmax_xent needs at least 2 classes");
  if (label < 0 || label >= C) fail("softmax_xent label out of range: " + std::to_string(label));
  const S mx = *std::max_element(logits.begin(), logits.end());
  S sum = S(0);
  for (S z : logits) sum += std::exp(z - mx);
  const S lse = mx + std::log(sum);
  std::vector<S> grad(logits.size());
  for (int c = 0; c < C; ++c) grad[c] = std::exp(logits[c] - lse) - (c == label ? S(1) : S(0));
  return {lse - logits[label], std::move(grad)};
}

/// Mean loss over the batch; gradient already scaled by 1/N.
template <class S>
std::pair<S, TensorT<S>> sigmoid_xent_batch(const TensorT<S>& logits,
                                            const std::vector<S>& labels) {
  const int N = logits.dim(0);
  if (logits.size() != N || static_cast<int>(labels.size()) != N)
    fail("sigmoid_xent_batch expects one logit per example");
  TensorT<S> dl(logits.shape);
  S total = S(0);
  const S inv = S(1) / static_cast<S>(N);
  for (int n = 0; n < N; ++n) {
    auto [loss, g] = sigmoid_xent(logits.v[n], labels[n]);
    total += loss;
    dl.v[n] = g * inv;
  }
  return {total * inv, std::move(dl)};
}

template <class S>
std::pair<S, TensorT<S>> softmax_xent_batch(const TensorT<S>& logits,
                                            const std::vector<int>& labels) {
  const int N = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(labels.size()) != N) fail("softmax_xent_batch label count mismatch");
  TensorT<S> dl(logits.shape);
  S total = S(0);
  const S inv = S(1) / static_cast<S>(N);
  std::vector<S> row(static_cast<size_t>(C));
  for (int n = 0; n < N; ++n) {
    std::copy_n(&logits.v[static_cast<size_t>(n) * C], C, row.begin());
    auto [loss, g] = softmax_xent(row, labels[n]);
    total += loss;
    for (int c = 0; c < C; ++c) dl.v[static_cast<size_t>(n) * C + c] = g[c] * inv;
  }
  return {total * inv, std::move(dl)};
}

template <class S>
struct LayerParamT {
  std::string name;
  TensorT<S> w;
  TensorT<S> g;       // gradient
  TensorT<S> adam_m;  // first moment
  TensorT<S> adam_v;  // second moment

  void init_state() {
    g = TensorT<S>(w.shape);
    adam_m = TensorT<S>(w.shape);
    adam_v = TensorT<S>(w.shape);
  }
  void zero_grad() { g.fill(S(0)); }
};
using LayerParam = LayerParamT<float>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int64_t step = 0;
};

/// Bias-corrected Adam update over all parameters; one shared step counter.
template <class S>
void adam_step(const std::vector<LayerParamT<S>*>& params, AdamConfig& cfg) {
  if (cfg.lr <= 0) fail("adam lr must be positive");
  if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1)
    fail("adam betas must lie in [0,1)");
  cfg.step += 1;
  const S b1 = static_cast<S>(cfg.beta1), b2 = static_cast<S>(cfg.beta2);
  const S bc1 = S(1) - static_cast<S>(std::pow(cfg.beta1, static_cast<double>(cfg.step)));
  const S bc2 = S(1) - static_cast<S>(std::pow(cfg.beta2, static_cast<double>(cfg.step)));
  const S lr = static_cast<S>(cfg.lr), eps = static_cast<S>(cfg.epsilon);
  for (auto* p : params) {
    const int64_t n = p->w.size();
    S* __restrict w = p->w.data();
    const S* __restrict g = p->g.data();
    S* __restrict m = p->adam_m.data();
    S* __restrict v = p->adam_v.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (S(1) - b1) * g[i];
      v[i] = b2 * v[i] + (S(1) - b2) * g[i] * g[i];
      const S mhat = m[i] / bc1;
      const S vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

/// Fan-in-scaled uniform init; `gain` rescales the bound so residual
/// branches can start small (no batch norm anywhere in these nets).
template <class S>
void init_uniform_fan_in(TensorT<S>& w, int fan_in, Rng& rng, double gain = 1.0) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(fan_in));
  for (auto& x : w.v) x = static_cast<S>(rng.uniform(-limit, limit));
}

}  // namespace cofor::nn

#include "netadapt/detail/kernels.hpp"

#include <algorithm>

namespace netadapt::detail {

int pad_before(int in, int out, int kernel, int stride) {
  const int total = std::max((out - 1) * stride + kernel - in, 0);
  return total / 2;
}

void conv2d_forward(const double* in, int n, const LayerSpec& layer,
                    const LayerShapes& s, double* out) {
  const int C = s.in_channels, H = s.in_h, W = s.in_w;
  const int O = s.out_channels, OH = s.out_h, OW = s.out_w;
  const int KH = layer.kernel_h, KW = layer.kernel_w, stride = layer.stride;
  const int pad_h =
      layer.padding == Padding::Same ? pad_before(H, OH, KH, stride) : 0;
  const int pad_w =
      layer.padding == Padding::Same ? pad_before(W, OW, KW, stride) : 0;
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t in_sample = in_plane * C;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
  const std::size_t out_sample = out_plane * O;
  const std::size_t filt = static_cast<std::size_t>(C) * KH * KW;

  for (int b = 0; b < n; ++b) {
    const double* x = in + b * in_sample;
    double* y = out + b * out_sample;
    for (int oc = 0; oc < O; ++oc) {
      const double* wf = layer.weights.data() + oc * filt;
      const double bias = layer.bias[oc];
      double* yp = y + oc * out_plane;
      for (int oy = 0; oy < OH; ++oy) {
        const int iy0 = oy * stride - pad_h;
        for (int ox = 0; ox < OW; ++ox) {
          const int ix0 = ox * stride - pad_w;
          double acc = bias;
          for (int ic = 0; ic < C; ++ic) {
            const double* xp = x + ic * in_plane;
            const double* wk = wf + ic * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= H) continue;
              const double* xrow = xp + static_cast<std::size_t>(iy) * W;
              const double* wrow = wk + ky * KW;
              for (int kx = 0; kx < KW; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= W) continue;
                acc += wrow[kx] * xrow[ix];
              }
            }
          }
          yp[oy * OW + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const double* in, const double* dout, int n,
                     const LayerSpec& layer, const LayerShapes& s, double* dw,
                     double* db, double* din) {
  const int C = s.in_channels, H = s.in_h, W = s.in_w;
  const int O = s.out_channels, OH = s.out_h, OW = s.out_w;
  const int KH = layer.kernel_h, KW = layer.kernel_w, stride = layer.stride;
  const int pad_h =
      layer.padding == Padding::Same ? pad_before(H, OH, KH, stride) : 0;
  const int pad_w =
      layer.padding == Padding::Same ? pad_before(W, OW, KW, stride) : 0;
  const std::size_t in_plane = static_cast<std::size_t>(H) * W;
  const std::size_t in_sample = in_plane * C;
  const std::size_t out_plane = static_cast<std::size_t>(OH) * OW;
  const std::size_t out_sample = out_plane * O;
  const std::size_t filt = static_cast<std::size_t>(C) * KH * KW;

  for (int b = 0; b < n; ++b) {
    const double* x = in + b * in_sample;
    const double* dy = dout + b * out_sample;
    double* dx = din ? din + b * in_sample : nullptr;
    for (int oc = 0; oc < O; ++oc) {
      const double* wf = layer.weights.data() + oc * filt;
      double* dwf = dw + oc * filt;
      const double* dyp = dy + oc * out_plane;
      for (int oy = 0; oy < OH; ++oy) {
        const int iy0 = oy * stride - pad_h;
        for (int ox = 0; ox < OW; ++ox) {
          const double g = dyp[oy * OW + ox];
          if (g == 0.0) continue;
          const int ix0 = ox * stride - pad_w;
          db[oc] += g;
          for (int ic = 0; ic < C; ++ic) {
            const double* xp = x + ic * in_plane;
            double* dxp = dx ? dx + ic * in_plane : nullptr;
            const double* wk = wf + ic * KH * KW;
            double* dwk = dwf + ic * KH * KW;
            for (int ky = 0; ky < KH; ++ky) {
              const int iy = iy0 + ky;
              if (iy < 0 || iy >= H) continue;
              const std::size_t row = static_cast<std::size_t>(iy) * W;
              for (int kx = 0; kx < KW; ++kx) {
                const int ix = ix0 + kx;
                if (ix < 0 || ix >= W) continue;
                dwk[ky * KW + kx] += g * xp[row + ix];
                if (dxp) dxp[row + ix] += g * wk[ky * KW + kx];
              }
            }
          }
        }
      }
    }
  }
}

void dense_forward(const double* in, int n, const LayerSpec& layer,
                   double* out) {
  const int F = layer.in_channels, O = layer.out_filters;
  for (int b = 0; b < n; ++b) {
    const double* x = in + static_cast<std::size_t>(b) * F;
    double* y = out + static_cast<std::size_t>(b) * O;
    for (int o = 0; o < O; ++o) {
      const double* w = layer.weights.data() + static_cast<std::size_t>(o) * F;
      double acc = layer.bias[o];
      for (int f = 0; f < F; ++f) acc += w[f] * x[f];
      y[o] = acc;
    }
  }
}

void dense_backward(const double* in, const double* dout, int n,
                    const LayerSpec& layer, double* dw, double* db,
                    double* din) {
  const int F = layer.in_channels, O = layer.out_filters;
  for (int b = 0; b < n; ++b) {
    const double* x = in + static_cast<std::size_t>(b) * F;
    const double* dy = dout + static_cast<std::size_t>(b) * O;
    double* dx = din ? din + static_cast<std::size_t>(b) * F : nullptr;
    for (int o = 0; o < O; ++o) {
      const double g = dy[o];
      if (g == 0.0) continue;
      const double* w = layer.weights.data() + static_cast<std::size_t>(o) * F;
      double* dwp = dw + static_cast<std::size_t>(o) * F;
      db[o] += g;
      for (int f = 0; f < F; ++f) {
        dwp[f] += g * x[f];
        if (dx) dx[f] += g * w[f];
      }
    }
  }
}

void relu_inplace(double* x, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    if (x[i] < 0.0) x[i] = 0.0;
  }
}

void relu_backward_inplace(const double* post, double* dout,
                           std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    if (post[i] <= 0.0) dout[i] = 0.0;
  }
}

}  // namespace netadapt::detail

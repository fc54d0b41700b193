#pragma once

#include <cmath>
#include <vector>

#include "netadapt/microtrain.hpp"
#include "netadapt/netgraph.hpp"
#include "netadapt/rng.hpp"

namespace testutil {

using namespace netadapt;

// Straightforward reference forward pass, kept independent of the library
// implementation: explicit zero-padded copies, one sample at a time.
inline std::vector<double> reference_forward(const NetworkSpec& net,
                                             const std::vector<double>& batch,
                                             int n) {
  std::vector<double> logits;
  const int ic0 = net.input_shape.channels;
  const int ih0 = net.input_shape.height;
  const int iw0 = net.input_shape.width;
  const std::size_t sample = static_cast<std::size_t>(ic0) * ih0 * iw0;

  for (int b = 0; b < n; ++b) {
    std::vector<double> x(batch.begin() + b * sample,
                          batch.begin() + (b + 1) * sample);
    int c = ic0, h = ih0, w = iw0;
    for (std::size_t li = 0; li < net.layers.size(); ++li) {
      const LayerSpec& layer = net.layers[li];
      std::vector<double> y;
      if (layer.kind == LayerKind::Conv2D) {
        int oh, ow, pt = 0, pl = 0;
        if (layer.padding == Padding::Same) {
          oh = (h + layer.stride - 1) / layer.stride;
          ow = (w + layer.stride - 1) / layer.stride;
          pt = std::max((oh - 1) * layer.stride + layer.kernel_h - h, 0) / 2;
          pl = std::max((ow - 1) * layer.stride + layer.kernel_w - w, 0) / 2;
        } else {
          oh = (h - layer.kernel_h) / layer.stride + 1;
          ow = (w - layer.kernel_w) / layer.stride + 1;
        }
        y.assign(static_cast<std::size_t>(layer.out_filters) * oh * ow, 0.0);
        for (int o = 0; o < layer.out_filters; ++o) {
          for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
              double acc = layer.bias[o];
              for (int ci = 0; ci < c; ++ci) {
                for (int ky = 0; ky < layer.kernel_h; ++ky) {
                  for (int kx = 0; kx < layer.kernel_w; ++kx) {
                    const int iy = oy * layer.stride - pt + ky;
                    const int ix = ox * layer.stride - pl + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    const double wv =
                        layer.weights[((static_cast<std::size_t>(o) * c + ci) *
                                           layer.kernel_h +
                                       ky) *
                                          layer.kernel_w +
                                      kx];
                    acc += wv * x[(static_cast<std::size_t>(ci) * h + iy) * w +
                                  ix];
                  }
                }
              }
              y[(static_cast<std::size_t>(o) * oh + oy) * ow + ox] = acc;
            }
          }
        }
        c = layer.out_filters;
        h = oh;
        w = ow;
      } else {
        const int in_f = layer.in_channels;
        y.assign(layer.out_filters, 0.0);
        for (int o = 0; o < layer.out_filters; ++o) {
          double acc = layer.bias[o];
          for (int f = 0; f < in_f; ++f) {
            acc += layer.weights[static_cast<std::size_t>(o) * in_f + f] * x[f];
          }
          y[o] = acc;
        }
      }
      if (layer.activation == Activation::ReLU) {
        for (double& v : y) v = std::max(v, 0.0);
      }
      x = std::move(y);
    }
    logits.insert(logits.end(), x.begin(), x.end());
  }
  return logits;
}

inline NetworkSpec small_net(int in_ch, int hw, std::vector<int> conv_filters,
                             std::vector<int> dense_units, int classes,
                             std::uint64_t seed, int kernel = 3,
                             int stride = 1,
                             Padding padding = Padding::Same) {
  NetworkSpec net;
  net.input_shape = {in_ch, hw, hw};
  net.class_count = classes;
  int ch = in_ch;
  for (int f : conv_filters) {
    LayerSpec l;
    l.kind = LayerKind::Conv2D;
    l.in_channels = ch;
    l.out_filters = f;
    l.kernel_h = l.kernel_w = kernel;
    l.stride = stride;
    l.padding = padding;
    l.activation = Activation::ReLU;
    net.layers.push_back(l);
    ch = f;
  }
  int spatial_h = hw, spatial_w = hw;
  for (std::size_t i = 0; i < conv_filters.size(); ++i) {
    if (padding == Padding::Same) {
      spatial_h = (spatial_h + stride - 1) / stride;
      spatial_w = (spatial_w + stride - 1) / stride;
    } else {
      spatial_h = (spatial_h - kernel) / stride + 1;
      spatial_w = (spatial_w - kernel) / stride + 1;
    }
  }
  int features = conv_filters.empty() ? in_ch * hw * hw
                                      : ch * spatial_h * spatial_w;
  dense_units.push_back(classes);
  for (std::size_t i = 0; i < dense_units.size(); ++i) {
    LayerSpec l;
    l.kind = LayerKind::Dense;
    l.in_channels = features;
    l.out_filters = dense_units[i];
    l.activation =
        i + 1 == dense_units.size() ? Activation::None : Activation::ReLU;
    net.layers.push_back(l);
    features = dense_units[i];
  }
  init_weights(net, seed);
  return net;
}

inline std::vector<double> random_batch(const NetworkSpec& net, int n,
                                        std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> batch(static_cast<std::size_t>(n) *
                            net.input_shape.channels * net.input_shape.height *
                            net.input_shape.width);
  for (double& v : batch) v = rng.uniform(-1.0, 1.0);
  return batch;
}

}  // namespace testutil

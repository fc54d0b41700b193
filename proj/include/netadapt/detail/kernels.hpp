#pragma once

#include <cstddef>

#include "netadapt/netgraph.hpp"

namespace netadapt::detail {

// Batched layer primitives, NCHW layout, double precision. `n` is the batch
// size; buffers are caller-allocated to the shapes implied by `s`.

void conv2d_forward(const double* in, int n, const LayerSpec& layer,
                    const LayerShapes& s, double* out);

// din may be null when input gradients are not needed (first layer).
// dw/db/din are accumulated into; the caller zeroes them first.
void conv2d_backward(const double* in, const double* dout, int n,
                     const LayerSpec& layer, const LayerShapes& s, double* dw,
                     double* db, double* din);

void dense_forward(const double* in, int n, const LayerSpec& layer,
                   double* out);

void dense_backward(const double* in, const double* dout, int n,
                    const LayerSpec& layer, double* dw, double* db,
                    double* din);

void relu_inplace(double* x, std::size_t count);

// dpre = dout where post > 0, else 0 (computed in place on dout).
void relu_backward_inplace(const double* post, double* dout,
                           std::size_t count);

// Same-padding offset before the first input row/column.
int pad_before(int in, int out, int kernel, int stride);

}  // namespace netadapt::detail

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gdse/numerics/tape.hpp"

namespace gdse {

// Elementwise binary ops; operands must have identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);

Var scale(Var a, double c);
Var add_scalar(Var a, double c);

// x: C x N, bias: C x 1 (or 1 x C). Adds bias[c] to every column of row c.
Var add_channel_bias(Var x, Var bias);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var softplus(Var a);
Var square(Var a);

// Sum of all elements -> 1 x 1.
Var sum(Var a);

// Rows [first, last) of a.
Var slice_rows(Var a, std::size_t first, std::size_t last);

// Columns [first, last) of every row.
Var slice_cols(Var a, std::size_t first, std::size_t last);

// Delays every row by `n` samples with zero fill: y[:, i] = x[:, i - n].
Var shift_right(Var x, std::size_t n);

// tanh(h) * sigmoid(g).
Var gated_activation(Var h, Var g);

struct ConvGeometry {
  std::size_t kernel = 1;
  std::size_t dilation = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;

  std::size_t span() const { return (kernel - 1) * dilation + 1; }
  std::size_t output_length(std::size_t n) const {
    return n + pad_left + pad_right - span() + 1;
  }

  static ConvGeometry causal(std::size_t kernel, std::size_t dilation) {
    return {kernel, dilation, (kernel - 1) * dilation, 0};
  }
  // Centered; requires an odd kernel.
  static ConvGeometry same(std::size_t kernel, std::size_t dilation) {
    const std::size_t half = (kernel - 1) * dilation / 2;
    return {kernel, dilation, half, half};
  }
};

// Multi-channel dilated convolution with zero padding.
//   x: Cin x N
//   w: Cout x (Cin * kernel), laid out [out][in][tap]
//   y[o][i] = sum_{c,k} w[o][c][k] * x[c][i + k*dilation - pad_left]
// Throws std::invalid_argument when the kernel span exceeds the padded input.
Var conv1d(Var x, Var w, const ConvGeometry& geom);
Var conv1d(Var x, Var w, Var bias, const ConvGeometry& geom);

// Causal dilated convolution. With shift = true the output is delayed by one
// sample so y[i] depends only on x[0..i-1]; y[0] then sees no input at all.
Var causal_dilated_conv(Var x, Var w, std::size_t kernel, std::size_t dilation,
                        bool shift);

// Weight normalization: w[o] = g[o] * v[o] / ||v[o]|| for each output row.
// v: Cout x M, g: Cout x 1.
Var weight_norm(Var v, Var g);

// Tape-free forms used by tests and inference helpers.
std::vector<double> gated_activation(std::span<const double> h,
                                     std::span<const double> g);
double softplus(double x);
double sigmoid(double x);

}  // namespace gdse

#pragma once

#include <cstddef>
#include <vector>

#include "audeform/tensor.hpp"

// Serial reference implementations. These are the oracle route for the test
// suite and the baseline side of the benchmark; they must not call into
// audeform/kernels.hpp or the tape. Everything here is written as the most
// literal loop nest that defines the operation.
namespace audeform::reference {

// Triple-loop product.
Tensor matmul(const Tensor& a, const Tensor& b);

// Six-loop direct cross-correlation, zero padding. bias may be null.
Tensor conv2d(const Tensor& in, const Tensor& kernel, const Tensor* bias, std::size_t stride,
              std::size_t pad, std::size_t groups);

// Exhaustive sum over every pixel with weights g(a,b) = max(0, 1 - |a - b|)
// in pixel coordinates; coordinates are normalized (py, px) in [-1, 1],
// clamped, then denormalized with u = (p + 1) / 2 * (extent - 1).
double bilinear_at(const Tensor& map, std::size_t channel, double py, double px);
Tensor bilinear_sample(const Tensor& map, const Tensor& pts);

// Extended-precision row softmax.
Tensor softmax_rows(const Tensor& a);

// Extended-precision erf form.
double gelu(double x);

// Extended-precision log(sum(exp(v))).
double logsumexp(const std::vector<double>& v);

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Full multi-head self-attention over the token rows (no position bias).
Tensor mhsa(const Tensor& tokens, const Tensor& wq, const Tensor& wk, const Tensor& wv,
            const Tensor& wo, std::size_t heads);

// Attention over keys/values sampled at the plain undeformed reference grid
// (factor r), queries at full resolution, bias interpolated from the table.
// This is the fixed-grid path the zero-offset equivalence checks against.
Tensor fixed_grid_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo, const Tensor& bias_table,
                            std::size_t heads, std::size_t r);

// Normalized linspace coordinate: 0 when extent == 1, else 2*i/(extent-1) - 1.
double grid_coord(std::size_t i, std::size_t extent);

}  // namespace audeform::reference

#pragma once

#include <cstddef>

// Parallel compute kernels. Every kernel writes each output element from
// exactly one thread with a serial inner reduction, so results are
// bit-identical regardless of thread count. The serial counterparts used as
// test oracles live in audeform/reference.hpp and must stay independent of
// this file.
namespace audeform::kernels {

// c[m x n] = a[m x k] * b[k x n]
void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n);

// c[m x n] += a[m x k] * b[n x k]^T
void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

// c[m x n] += a[k x m]^T * b[k x n]
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n);

struct Conv2dDims {
  std::size_t c_in, h, w;
  std::size_t c_out, kh, kw;
  std::size_t stride, pad, groups;
  std::size_t h_out() const { return (h + 2 * pad - kh) / stride + 1; }
  std::size_t w_out() const { return (w + 2 * pad - kw) / stride + 1; }
};

// Cross-correlation (no kernel flip), zero padding. kernel layout is
// [c_out, c_in/groups, kh, kw]; bias may be null.
void conv2d_forward(const double* in, const double* kernel, const double* bias, double* out,
                    const Conv2dDims& d);
void conv2d_backward_input(const double* dout, const double* kernel, double* din,
                           const Conv2dDims& d);
void conv2d_backward_kernel(const double* dout, const double* in, double* dkernel,
                            const Conv2dDims& d);
void conv2d_backward_bias(const double* dout, double* dbias, const Conv2dDims& d);

// Four-neighbor bilinear gather on a [c, h, w] map. pts holds P rows of
// normalized (py, px); coordinates are clamped to [-1, 1] and then mapped to
// pixels via u = (p + 1) / 2 * (extent - 1). out is [P, c].
void bilinear_gather(const double* map, std::size_t c, std::size_t h, std::size_t w,
                     const double* pts, std::size_t p_count, double* out);
// dmap and dpts accumulate; either may be null to skip that gradient.
void bilinear_backward(const double* map, std::size_t c, std::size_t h, std::size_t w,
                       const double* pts, std::size_t p_count, const double* dout, double* dmap,
                       double* dpts);

// Row-wise stable softmax on an [m x n] matrix.
void softmax_rows(const double* in, double* out, std::size_t m, std::size_t n);
// dx += softmax backward given the forward output y.
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t m,
                           std::size_t n);

// Row-wise layer norm with affine; saves normalized rows and 1/sigma for the
// backward pass. eps sits inside the square root.
void layer_norm(const double* in, const double* gamma, const double* beta, double* out,
                double* xhat, double* inv_sigma, std::size_t m, std::size_t n, double eps);
void layer_norm_backward(const double* xhat, const double* inv_sigma, const double* gamma,
                         const double* dy, double* dx, double* dgamma, double* dbeta,
                         std::size_t m, std::size_t n);

void tanh_forward(const double* in, double* out, std::size_t n);
void tanh_backward(const double* y, const double* dy, double* dx, std::size_t n);
// Exact erf form: 0.5 * x * (1 + erf(x / sqrt(2)))
void gelu_forward(const double* in, double* out, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);
void relu_forward(const double* in, double* out, std::size_t n);
void relu_backward(const double* x, const double* dy, double* dx, std::size_t n);

}  // namespace audeform::kernels

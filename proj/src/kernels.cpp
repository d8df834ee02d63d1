#include "audeform/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace audeform::kernels {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

inline std::int64_t i64(std::size_t v) { return static_cast<std::int64_t>(v); }
}  // namespace

void matmul(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
            std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    double* crow = c + i * i64(n);
    for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    const double* arow = a + i * i64(k);
    for (std::size_t l = 0; l < k; ++l) {
      const double av = arow[l];
      const double* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    const double* arow = a + i * i64(k);
    double* crow = c + i * i64(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    double* crow = c + i * i64(n);
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
      crow[j] += acc;
    }
  }
}

void conv2d_forward(const double* in, const double* kernel, const double* bias, double* out,
                    const Conv2dDims& d) {
  const std::size_t ho = d.h_out(), wo = d.w_out();
  const std::size_t cpg_in = d.c_in / d.groups;
  const std::size_t cpg_out = d.c_out / d.groups;
#pragma omp parallel for schedule(static)
  for (std::int64_t oc = 0; oc < i64(d.c_out); ++oc) {
    const std::size_t g = static_cast<std::size_t>(oc) / cpg_out;
    const double b0 = bias ? bias[oc] : 0.0;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = b0;
        for (std::size_t ic = 0; ic < cpg_in; ++ic) {
          const std::size_t in_c = g * cpg_in + ic;
          const double* kbase = kernel + ((oc * cpg_in + ic) * d.kh) * d.kw;
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            const std::int64_t iy = i64(oy * d.stride + ky) - i64(d.pad);
            if (iy < 0 || iy >= i64(d.h)) continue;
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const std::int64_t ix = i64(ox * d.stride + kx) - i64(d.pad);
              if (ix < 0 || ix >= i64(d.w)) continue;
              acc += kbase[ky * d.kw + kx] * in[(in_c * d.h + iy) * d.w + ix];
            }
          }
        }
        out[(oc * ho + oy) * wo + ox] = acc;
      }
    }
  }
}

void conv2d_backward_input(const double* dout, const double* kernel, double* din,
                           const Conv2dDims& d) {
  const std::size_t ho = d.h_out(), wo = d.w_out();
  const std::size_t cpg_in = d.c_in / d.groups;
  const std::size_t cpg_out = d.c_out / d.groups;
  // Gather formulation: each input pixel sums the output positions its value
  // fed, so writes stay disjoint across threads.
#pragma omp parallel for schedule(static)
  for (std::int64_t ic = 0; ic < i64(d.c_in); ++ic) {
    const std::size_t g = static_cast<std::size_t>(ic) / cpg_in;
    const std::size_t ic_in_g = static_cast<std::size_t>(ic) % cpg_in;
    for (std::size_t iy = 0; iy < d.h; ++iy) {
      for (std::size_t ix = 0; ix < d.w; ++ix) {
        double acc = 0.0;
        for (std::size_t oc_g = 0; oc_g < cpg_out; ++oc_g) {
          const std::size_t oc = g * cpg_out + oc_g;
          const double* kbase = kernel + ((oc * cpg_in + ic_in_g) * d.kh) * d.kw;
          for (std::size_t ky = 0; ky < d.kh; ++ky) {
            const std::int64_t num_y = i64(iy + d.pad) - i64(ky);
            if (num_y < 0 || num_y % i64(d.stride) != 0) continue;
            const std::int64_t oy = num_y / i64(d.stride);
            if (oy >= i64(ho)) continue;
            for (std::size_t kx = 0; kx < d.kw; ++kx) {
              const std::int64_t num_x = i64(ix + d.pad) - i64(kx);
              if (num_x < 0 || num_x % i64(d.stride) != 0) continue;
              const std::int64_t ox = num_x / i64(d.stride);
              if (ox >= i64(wo)) continue;
              acc += kbase[ky * d.kw + kx] * dout[(oc * ho + oy) * wo + ox];
            }
          }
        }
        din[(ic * d.h + iy) * d.w + ix] += acc;
      }
    }
  }
}

void conv2d_backward_kernel(const double* dout, const double* in, double* dkernel,
                            const Conv2dDims& d) {
  const std::size_t ho = d.h_out(), wo = d.w_out();
  const std::size_t cpg_in = d.c_in / d.groups;
  const std::size_t cpg_out = d.c_out / d.groups;
#pragma omp parallel for schedule(static)
  for (std::int64_t oc = 0; oc < i64(d.c_out); ++oc) {
    const std::size_t g = static_cast<std::size_t>(oc) / cpg_out;
    for (std::size_t ic = 0; ic < cpg_in; ++ic) {
      const std::size_t in_c = g * cpg_in + ic;
      for (std::size_t ky = 0; ky < d.kh; ++ky) {
        for (std::size_t kx = 0; kx < d.kw; ++kx) {
          double acc = 0.0;
          for (std::size_t oy = 0; oy < ho; ++oy) {
            const std::int64_t iy = i64(oy * d.stride + ky) - i64(d.pad);
            if (iy < 0 || iy >= i64(d.h)) continue;
            for (std::size_t ox = 0; ox < wo; ++ox) {
              const std::int64_t ix = i64(ox * d.stride + kx) - i64(d.pad);
              if (ix < 0 || ix >= i64(d.w)) continue;
              acc += dout[(oc * ho + oy) * wo + ox] * in[(in_c * d.h + iy) * d.w + ix];
            }
          }
          dkernel[((oc * cpg_in + ic) * d.kh + ky) * d.kw + kx] += acc;
        }
      }
    }
  }
}

void conv2d_backward_bias(const double* dout, double* dbias, const Conv2dDims& d) {
  const std::size_t plane = d.h_out() * d.w_out();
#pragma omp parallel for schedule(static)
  for (std::int64_t oc = 0; oc < i64(d.c_out); ++oc) {
    double acc = 0.0;
    const double* base = dout + oc * i64(plane);
    for (std::size_t i = 0; i < plane; ++i) acc += base[i];
    dbias[oc] += acc;
  }
}

namespace {

struct BilinearCell {
  std::size_t y0, x0, y1, x1;
  double fy, fx;  // fractional parts; weight of (y1, x1) corner
  double uy, ux;
};

inline BilinearCell locate(double py, double px, std::size_t h, std::size_t w) {
  BilinearCell c;
  py = std::clamp(py, -1.0, 1.0);
  px = std::clamp(px, -1.0, 1.0);
  c.uy = (py + 1.0) * 0.5 * static_cast<double>(h - 1);
  c.ux = (px + 1.0) * 0.5 * static_cast<double>(w - 1);
  c.y0 = static_cast<std::size_t>(c.uy);
  c.x0 = static_cast<std::size_t>(c.ux);
  if (c.y0 >= h - 1) c.y0 = (h >= 2) ? h - 2 : 0;
  if (c.x0 >= w - 1) c.x0 = (w >= 2) ? w - 2 : 0;
  c.y1 = (h >= 2) ? c.y0 + 1 : c.y0;
  c.x1 = (w >= 2) ? c.x0 + 1 : c.x0;
  c.fy = c.uy - static_cast<double>(c.y0);
  c.fx = c.ux - static_cast<double>(c.x0);
  return c;
}

}  // namespace

void bilinear_gather(const double* map, std::size_t c, std::size_t h, std::size_t w,
                     const double* pts, std::size_t p_count, double* out) {
#pragma omp parallel for schedule(static)
  for (std::int64_t p = 0; p < i64(p_count); ++p) {
    const BilinearCell cell = locate(pts[2 * p], pts[2 * p + 1], h, w);
    const double w00 = (1.0 - cell.fy) * (1.0 - cell.fx);
    const double w01 = (1.0 - cell.fy) * cell.fx;
    const double w10 = cell.fy * (1.0 - cell.fx);
    const double w11 = cell.fy * cell.fx;
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double* plane = map + ch * h * w;
      out[p * i64(c) + i64(ch)] = w00 * plane[cell.y0 * w + cell.x0] +
                                  w01 * plane[cell.y0 * w + cell.x1] +
                                  w10 * plane[cell.y1 * w + cell.x0] +
                                  w11 * plane[cell.y1 * w + cell.x1];
    }
  }
}

void bilinear_backward(const double* map, std::size_t c, std::size_t h, std::size_t w,
                       const double* pts, std::size_t p_count, const double* dout, double* dmap,
                       double* dpts) {
  if (dmap) {
    // Channel-parallel scatter: each thread owns whole channels.
#pragma omp parallel for schedule(static)
    for (std::int64_t ch = 0; ch < i64(c); ++ch) {
      double* plane = dmap + ch * i64(h) * i64(w);
      for (std::size_t p = 0; p < p_count; ++p) {
        const BilinearCell cell = locate(pts[2 * p], pts[2 * p + 1], h, w);
        const double g = dout[p * c + static_cast<std::size_t>(ch)];
        plane[cell.y0 * w + cell.x0] += (1.0 - cell.fy) * (1.0 - cell.fx) * g;
        plane[cell.y0 * w + cell.x1] += (1.0 - cell.fy) * cell.fx * g;
        plane[cell.y1 * w + cell.x0] += cell.fy * (1.0 - cell.fx) * g;
        plane[cell.y1 * w + cell.x1] += cell.fy * cell.fx * g;
      }
    }
  }
  if (dpts) {
#pragma omp parallel for schedule(static)
    for (std::int64_t p = 0; p < i64(p_count); ++p) {
      const double py = pts[2 * p], px = pts[2 * p + 1];
      // Clamped coordinates have zero slope outside the open interval.
      const bool live_y = py >= -1.0 && py <= 1.0;
      const bool live_x = px >= -1.0 && px <= 1.0;
      if (!live_y && !live_x) continue;
      const BilinearCell cell = locate(py, px, h, w);
      double gy = 0.0, gx = 0.0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = map + ch * h * w;
        const double v00 = plane[cell.y0 * w + cell.x0];
        const double v01 = plane[cell.y0 * w + cell.x1];
        const double v10 = plane[cell.y1 * w + cell.x0];
        const double v11 = plane[cell.y1 * w + cell.x1];
        const double g = dout[p * i64(c) + i64(ch)];
        gy += g * ((1.0 - cell.fx) * (v10 - v00) + cell.fx * (v11 - v01));
        gx += g * ((1.0 - cell.fy) * (v01 - v00) + cell.fy * (v11 - v10));
      }
      // Chain through u = (p + 1) / 2 * (extent - 1).
      if (live_y) dpts[2 * p] += gy * 0.5 * static_cast<double>(h - 1);
      if (live_x) dpts[2 * p + 1] += gx * 0.5 * static_cast<double>(w - 1);
    }
  }
}

void softmax_rows(const double* in, double* out, std::size_t m, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    const double* row = in + i * i64(n);
    double* orow = out + i * i64(n);
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    const double inv = 1.0 / sum;
    for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::size_t m,
                           std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    const double* yr = y + i * i64(n);
    const double* dyr = dy + i * i64(n);
    double* dxr = dx + i * i64(n);
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += yr[j] * dyr[j];
    for (std::size_t j = 0; j < n; ++j) dxr[j] += yr[j] * (dyr[j] - dot);
  }
}

void layer_norm(const double* in, const double* gamma, const double* beta, double* out,
                double* xhat, double* inv_sigma, std::size_t m, std::size_t n, double eps) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    const double* row = in + i * i64(n);
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[i] = inv;
    for (std::size_t j = 0; j < n; ++j) {
      const double xh = (row[j] - mean) * inv;
      xhat[i * i64(n) + i64(j)] = xh;
      out[i * i64(n) + i64(j)] = gamma[j] * xh + beta[j];
    }
  }
}

void layer_norm_backward(const double* xhat, const double* inv_sigma, const double* gamma,
                         const double* dy, double* dx, double* dgamma, double* dbeta,
                         std::size_t m, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(m); ++i) {
    const double* xh = xhat + i * i64(n);
    const double* dyr = dy + i * i64(n);
    double* dxr = dx + i * i64(n);
    double mean_g = 0.0, mean_gx = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double gdy = gamma[j] * dyr[j];
      mean_g += gdy;
      mean_gx += gdy * xh[j];
    }
    mean_g /= static_cast<double>(n);
    mean_gx /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double gdy = gamma[j] * dyr[j];
      dxr[j] += (gdy - mean_g - xh[j] * mean_gx) * inv_sigma[i];
    }
  }
  // Column-parallel reductions keep the accumulation order fixed.
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < i64(n); ++j) {
    double dg = 0.0, db = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      dg += dy[i * n + static_cast<std::size_t>(j)] * xhat[i * n + static_cast<std::size_t>(j)];
      db += dy[i * n + static_cast<std::size_t>(j)];
    }
    dgamma[j] += dg;
    dbeta[j] += db;
  }
}

void tanh_forward(const double* in, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(n); ++i) out[i] = std::tanh(in[i]);
}

void tanh_backward(const double* y, const double* dy, double* dx, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(n); ++i) dx[i] += dy[i] * (1.0 - y[i] * y[i]);
}

void gelu_forward(const double* in, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(n); ++i)
    out[i] = 0.5 * in[i] * (1.0 + std::erf(in[i] * kInvSqrt2));
}

void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(n); ++i) {
    const double cdf = 0.5 * (1.0 + std::erf(x[i] * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

void relu_forward(const double* in, double* out, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(n); ++i) out[i] = std::max(0.0, in[i]);
}

void relu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < i64(n); ++i)
    if (x[i] > 0.0) dx[i] += dy[i];
}

}  // namespace audeform::kernels

#include "audeform/reference.hpp"

#include <algorithm>
#include <cmath>

#include "audeform/error.hpp"

namespace audeform::reference {

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < k; ++l) acc += a.at2(i, l) * b.at2(l, j);
      c.at2(i, j) = acc;
    }
  return c;
}

Tensor conv2d(const Tensor& in, const Tensor& kernel, const Tensor* bias, std::size_t stride,
              std::size_t pad, std::size_t groups) {
  const std::size_t c_in = in.shape[0], h = in.shape[1], w = in.shape[2];
  const std::size_t c_out = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  const std::size_t cpg_in = c_in / groups, cpg_out = c_out / groups;
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (w + 2 * pad - kw) / stride + 1;
  Tensor out({c_out, ho, wo});
  for (std::size_t oc = 0; oc < c_out; ++oc)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        double acc = bias ? bias->data[oc] : 0.0;
        const std::size_t g = oc / cpg_out;
        for (std::size_t ic = 0; ic < cpg_in; ++ic)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long long iy = static_cast<long long>(oy * stride + ky) -
                                   static_cast<long long>(pad);
              const long long ix = static_cast<long long>(ox * stride + kx) -
                                   static_cast<long long>(pad);
              if (iy < 0 || iy >= static_cast<long long>(h) || ix < 0 ||
                  ix >= static_cast<long long>(w))
                continue;
              acc += kernel.data[((oc * cpg_in + ic) * kh + ky) * kw + kx] *
                     in.at3(g * cpg_in + ic, static_cast<std::size_t>(iy),
                            static_cast<std::size_t>(ix));
            }
        out.at3(oc, oy, ox) = acc;
      }
  return out;
}

double bilinear_at(const Tensor& map, std::size_t channel, double py, double px) {
  const std::size_t h = map.shape[1], w = map.shape[2];
  py = std::clamp(py, -1.0, 1.0);
  px = std::clamp(px, -1.0, 1.0);
  const double uy = (py + 1.0) * 0.5 * static_cast<double>(h - 1);
  const double ux = (px + 1.0) * 0.5 * static_cast<double>(w - 1);
  double acc = 0.0;
  for (std::size_t ry = 0; ry < h; ++ry)
    for (std::size_t rx = 0; rx < w; ++rx) {
      const double gy = std::max(0.0, 1.0 - std::fabs(uy - static_cast<double>(ry)));
      const double gx = std::max(0.0, 1.0 - std::fabs(ux - static_cast<double>(rx)));
      if (gy == 0.0 || gx == 0.0) continue;
      acc += gy * gx * map.at3(channel, ry, rx);
    }
  return acc;
}

Tensor bilinear_sample(const Tensor& map, const Tensor& pts) {
  const std::size_t p = pts.shape[0], c = map.shape[0];
  Tensor out({p, c});
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t ch = 0; ch < c; ++ch)
      out.at2(i, ch) = bilinear_at(map, ch, pts.at2(i, 0), pts.at2(i, 1));
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t m = a.shape[0], n = a.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    long double mx = a.at2(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max<long double>(mx, a.at2(i, j));
    long double sum = 0.0L;
    std::vector<long double> e(n);
    for (std::size_t j = 0; j < n; ++j) {
      e[j] = expl(static_cast<long double>(a.at2(i, j)) - mx);
      sum += e[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      out.at2(i, j) = static_cast<double>(e[j] / sum);
  }
  return out;
}

double gelu(double x) {
  const long double xl = x;
  return static_cast<double>(0.5L * xl * (1.0L + erfl(xl / sqrtl(2.0L))));
}

double logsumexp(const std::vector<double>& v) {
  long double mx = v[0];
  for (double x : v) mx = std::max<long double>(mx, x);
  long double sum = 0.0L;
  for (double x : v) sum += expl(static_cast<long double>(x) - mx);
  return static_cast<double>(mx + logl(sum));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t m = x.shape[0], n = x.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x.at2(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x.at2(i, j) - mean) * (x.at2(i, j) - mean);
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j)
      out.at2(i, j) = gamma.data[j] * ((x.at2(i, j) - mean) * inv) + beta.data[j];
  }
  return out;
}

double grid_coord(std::size_t i, std::size_t extent) {
  if (extent <= 1) return 0.0;
  return 2.0 * static_cast<double>(i) / static_cast<double>(extent - 1) - 1.0;
}

namespace {

// softmax((q k^T)/sqrt(d) + bias) v for one head; bias may be null.
Tensor head_attention(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor* bias) {
  const std::size_t n = q.shape[0], d = q.shape[1], kn = k.shape[0];
  Tensor logits({n, kn});
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < kn; ++j) {
      double acc = 0.0;
      for (std::size_t l = 0; l < d; ++l) acc += q.at2(i, l) * k.at2(j, l);
      logits.at2(i, j) = acc * scale + (bias ? bias->at2(i, j) : 0.0);
    }
  Tensor probs = softmax_rows(logits);
  return matmul(probs, v);
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  Tensor out({a.shape[0], c1 - c0});
  for (std::size_t i = 0; i < a.shape[0]; ++i)
    for (std::size_t j = c0; j < c1; ++j) out.at2(i, j - c0) = a.at2(i, j);
  return out;
}

}  // namespace

Tensor mhsa(const Tensor& tokens, const Tensor& wq, const Tensor& wk, const Tensor& wv,
            const Tensor& wo, std::size_t heads) {
  const std::size_t n = tokens.shape[0], c = tokens.shape[1], d = c / heads;
  const Tensor q = matmul(tokens, wq);
  const Tensor k = matmul(tokens, wk);
  const Tensor v = matmul(tokens, wv);
  Tensor z({n, c});
  for (std::size_t m = 0; m < heads; ++m) {
    Tensor zm = head_attention(slice_cols(q, m * d, (m + 1) * d),
                               slice_cols(k, m * d, (m + 1) * d),
                               slice_cols(v, m * d, (m + 1) * d), nullptr);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) z.at2(i, m * d + j) = zm.at2(i, j);
  }
  return matmul(z, wo);
}

Tensor fixed_grid_attention(const Tensor& x, const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo, const Tensor& bias_table,
                            std::size_t heads, std::size_t r) {
  const std::size_t c = x.shape[0], h = x.shape[1], t = x.shape[2];
  const std::size_t hg = h / r, tg = t / r;
  const std::size_t n = h * t, kn = hg * tg, d = c / heads;

  Tensor tokens({n, c});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) tokens.at2(i * t + j, ch) = x.at3(ch, i, j);
  const Tensor q = matmul(tokens, wq);

  // Undeformed grid points and the tokens sampled there.
  Tensor grid_pts({kn, 2});
  for (std::size_t gi = 0; gi < hg; ++gi)
    for (std::size_t gj = 0; gj < tg; ++gj) {
      grid_pts.at2(gi * tg + gj, 0) = grid_coord(gi, hg);
      grid_pts.at2(gi * tg + gj, 1) = grid_coord(gj, tg);
    }
  const Tensor sampled = bilinear_sample(x, grid_pts);
  const Tensor k = matmul(sampled, wk);
  const Tensor v = matmul(sampled, wv);

  // Bias: displacement (q_pos - k_pos)/2 per axis, interpolated in the table.
  Tensor table_map = bias_table;
  table_map.shape = {1, bias_table.shape[0], bias_table.shape[1]};
  Tensor bias({n, kn});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t kk = 0; kk < kn; ++kk) {
        const double dy = (grid_coord(i, h) - grid_pts.at2(kk, 0)) * 0.5;
        const double dx = (grid_coord(j, t) - grid_pts.at2(kk, 1)) * 0.5;
        bias.at2(i * t + j, kk) = bilinear_at(table_map, 0, dy, dx);
      }

  Tensor z({n, c});
  for (std::size_t m = 0; m < heads; ++m) {
    Tensor zm = head_attention(slice_cols(q, m * d, (m + 1) * d),
                               slice_cols(k, m * d, (m + 1) * d),
                               slice_cols(v, m * d, (m + 1) * d), &bias);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) z.at2(i, m * d + j) = zm.at2(i, j);
  }
  const Tensor out_tokens = matmul(z, wo);

  Tensor out({c, h, t});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < t; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) out.at3(ch, i, j) = out_tokens.at2(i * t + j, ch);
  return out;
}

}  // namespace audeform::reference

#include "audeform/tape.hpp"

#include <algorithm>
#include <cmath>

#include "audeform/error.hpp"
#include "audeform/kernels.hpp"

namespace audeform {

std::int32_t Tape::fresh(Tensor value, std::vector<std::int32_t> inputs, const char* op) {
  require(!consumed_, Err::DetachedGraph, "recording on a consumed tape");
  Node n;
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.op = op;
  for (std::int32_t in : n.inputs)
    if (nodes_[in].requires_grad) n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return static_cast<std::int32_t>(nodes_.size() - 1);
}

double* Tape::gbuf(std::int32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), 0.0);
  return n.grad.data();
}

void Tape::check_node(Var v, const char* who) const {
  require(v.id >= 0 && v.id < static_cast<std::int32_t>(nodes_.size()), Err::DetachedGraph,
          std::string(who) + ": var not on this tape");
}

void Tape::finite_or_throw(std::int32_t id) const {
  if (!nodes_[id].value.all_finite())
    fail(Err::NonFiniteActivation, std::string(nodes_[id].op) + " produced NaN/Inf");
}

Var Tape::constant(Tensor t) { return input(std::move(t), false); }

Var Tape::input(Tensor t, bool requires_grad) {
  require(t.all_finite(), Err::NonFiniteInput, "input tensor has NaN/Inf");
  std::int32_t id = fresh(std::move(t), {}, "input");
  nodes_[id].requires_grad = requires_grad;
  return {id};
}

Var Tape::param(Parameter& p) {
  Tensor copy;
  copy.shape = p.value.shape;
  copy.data = p.value.data;
  require(copy.all_finite(), Err::NonFiniteInput, "parameter " + p.name + " has NaN/Inf");
  std::int32_t id = fresh(std::move(copy), {}, "param");
  nodes_[id].requires_grad = true;
  nodes_[id].bound = &p;
  return {id};
}

Var Tape::matmul(Var a, Var b) {
  check_node(a, "matmul");
  check_node(b, "matmul");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  require(ta.rank() == 2 && tb.rank() == 2 && ta.shape[1] == tb.shape[0], Err::ShapeMismatch,
          "matmul " + shape_str(ta.shape) + " x " + shape_str(tb.shape));
  const std::size_t m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
  Tensor out({m, n});
  kernels::matmul(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
  macs_ += static_cast<std::uint64_t>(m) * k * n;
  std::int32_t id = fresh(std::move(out), {a.id, b.id}, "matmul");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, b, m, k, n]() {
    const double* dc = gval(id).data();
    if (needs(a.id))
      kernels::matmul_nt_acc(dc, val(b.id).data.data(), gbuf(a.id), m, n, k);
    if (needs(b.id))
      kernels::matmul_tn_acc(val(a.id).data.data(), dc, gbuf(b.id), k, m, n);
  };
  return {id};
}

Var Tape::transpose(Var a) {
  check_node(a, "transpose");
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, Err::ShapeMismatch, "transpose needs rank 2");
  const std::size_t m = ta.shape[0], n = ta.shape[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = ta.at2(i, j);
  std::int32_t id = fresh(std::move(out), {a.id}, "transpose");
  nodes_[id].back = [this, id, a, m, n]() {
    if (!needs(a.id)) return;
    const double* dy = gval(id).data();
    double* dx = gbuf(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += dy[j * m + i];
  };
  return {id};
}

Var Tape::add(Var a, Var b) {
  check_node(a, "add");
  check_node(b, "add");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  require(ta.same_shape(tb), Err::ShapeMismatch,
          "add " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] + tb.data[i];
  std::int32_t id = fresh(std::move(out), {a.id, b.id}, "add");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, b]() {
    const std::vector<double>& dy = gval(id);
    if (needs(a.id)) {
      double* da = gbuf(a.id);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (needs(b.id)) {
      double* db = gbuf(b.id);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
    }
  };
  return {id};
}

Var Tape::sub(Var a, Var b) {
  check_node(a, "sub");
  check_node(b, "sub");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  require(ta.same_shape(tb), Err::ShapeMismatch,
          "sub " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] - tb.data[i];
  std::int32_t id = fresh(std::move(out), {a.id, b.id}, "sub");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, b]() {
    const std::vector<double>& dy = gval(id);
    if (needs(a.id)) {
      double* da = gbuf(a.id);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
    }
    if (needs(b.id)) {
      double* db = gbuf(b.id);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] -= dy[i];
    }
  };
  return {id};
}

Var Tape::mul(Var a, Var b) {
  check_node(a, "mul");
  check_node(b, "mul");
  const Tensor& ta = val(a.id);
  const Tensor& tb = val(b.id);
  require(ta.same_shape(tb), Err::ShapeMismatch,
          "mul " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * tb.data[i];
  std::int32_t id = fresh(std::move(out), {a.id, b.id}, "mul");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, b]() {
    const std::vector<double>& dy = gval(id);
    if (needs(a.id)) {
      double* da = gbuf(a.id);
      const Tensor& vb = val(b.id);
      for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * vb.data[i];
    }
    if (needs(b.id)) {
      double* db = gbuf(b.id);
      const Tensor& va = val(a.id);
      for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i] * va.data[i];
    }
  };
  return {id};
}

Var Tape::scale(Var a, double c) {
  check_node(a, "scale");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = ta.data[i] * c;
  std::int32_t id = fresh(std::move(out), {a.id}, "scale");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, c]() {
    if (!needs(a.id)) return;
    const std::vector<double>& dy = gval(id);
    double* da = gbuf(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i] * c;
  };
  return {id};
}

Var Tape::add_rowvec(Var a, Var row) {
  check_node(a, "add_rowvec");
  check_node(row, "add_rowvec");
  const Tensor& ta = val(a.id);
  const Tensor& tr = val(row.id);
  require(ta.rank() == 2 && tr.numel() == ta.shape[1], Err::ShapeMismatch,
          "add_rowvec " + shape_str(ta.shape) + " + " + shape_str(tr.shape));
  const std::size_t m = ta.shape[0], n = ta.shape[1];
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at2(i, j) = ta.at2(i, j) + tr.data[j];
  std::int32_t id = fresh(std::move(out), {a.id, row.id}, "add_rowvec");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, row, m, n]() {
    const double* dy = gval(id).data();
    if (needs(a.id)) {
      double* da = gbuf(a.id);
      for (std::size_t i = 0; i < m * n; ++i) da[i] += dy[i];
    }
    if (needs(row.id)) {
      double* dr = gbuf(row.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) dr[j] += dy[i * n + j];
    }
  };
  return {id};
}

Var Tape::tanh(Var a) {
  check_node(a, "tanh");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  kernels::tanh_forward(ta.data.data(), out.data.data(), out.numel());
  std::int32_t id = fresh(std::move(out), {a.id}, "tanh");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a]() {
    if (!needs(a.id)) return;
    kernels::tanh_backward(val(id).data.data(), gval(id).data(), gbuf(a.id),
                           val(id).numel());
  };
  return {id};
}

Var Tape::gelu(Var a) {
  check_node(a, "gelu");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  kernels::gelu_forward(ta.data.data(), out.data.data(), out.numel());
  std::int32_t id = fresh(std::move(out), {a.id}, "gelu");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a]() {
    if (!needs(a.id)) return;
    kernels::gelu_backward(val(a.id).data.data(), gval(id).data(), gbuf(a.id),
                           val(id).numel());
  };
  return {id};
}

Var Tape::relu(Var a) {
  check_node(a, "relu");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  kernels::relu_forward(ta.data.data(), out.data.data(), out.numel());
  std::int32_t id = fresh(std::move(out), {a.id}, "relu");
  nodes_[id].back = [this, id, a]() {
    if (!needs(a.id)) return;
    kernels::relu_backward(val(a.id).data.data(), gval(id).data(), gbuf(a.id),
                           val(id).numel());
  };
  return {id};
}

Var Tape::clamp(Var a, double lo, double hi) {
  check_node(a, "clamp");
  const Tensor& ta = val(a.id);
  Tensor out(ta.shape);
  for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = std::clamp(ta.data[i], lo, hi);
  std::int32_t id = fresh(std::move(out), {a.id}, "clamp");
  nodes_[id].back = [this, id, a, lo, hi]() {
    if (!needs(a.id)) return;
    const std::vector<double>& dy = gval(id);
    const Tensor& x = val(a.id);
    double* dx = gbuf(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i)
      if (x.data[i] >= lo && x.data[i] <= hi) dx[i] += dy[i];
  };
  return {id};
}

Var Tape::layer_norm(Var a, Var gamma, Var beta) {
  check_node(a, "layer_norm");
  check_node(gamma, "layer_norm");
  check_node(beta, "layer_norm");
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, Err::ShapeMismatch, "layer_norm needs rank 2");
  const std::size_t m = ta.shape[0], n = ta.shape[1];
  require(val(gamma.id).numel() == n && val(beta.id).numel() == n, Err::ShapeMismatch,
          "layer_norm affine size");
  Tensor out({m, n});
  std::vector<double> xhat(m * n), inv_sigma(m);
  kernels::layer_norm(ta.data.data(), val(gamma.id).data.data(), val(beta.id).data.data(),
                      out.data.data(), xhat.data(), inv_sigma.data(), m, n, 1e-5);
  std::int32_t id = fresh(std::move(out), {a.id, gamma.id, beta.id}, "layer_norm");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, gamma, beta, m, n, xhat = std::move(xhat),
                     inv_sigma = std::move(inv_sigma)]() {
    const double* dy = gval(id).data();
    std::vector<double> sink_dx, sink_dg, sink_db;
    double* dx = needs(a.id) ? gbuf(a.id) : (sink_dx.assign(m * n, 0.0), sink_dx.data());
    double* dg = needs(gamma.id) ? gbuf(gamma.id) : (sink_dg.assign(n, 0.0), sink_dg.data());
    double* db = needs(beta.id) ? gbuf(beta.id) : (sink_db.assign(n, 0.0), sink_db.data());
    kernels::layer_norm_backward(xhat.data(), inv_sigma.data(), val(gamma.id).data.data(), dy,
                                 dx, dg, db, m, n);
  };
  return {id};
}

Var Tape::softmax_rows(Var a) {
  check_node(a, "softmax_rows");
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, Err::ShapeMismatch, "softmax_rows needs rank 2");
  require(ta.all_finite(), Err::NonFiniteInput, "softmax_rows input has NaN/Inf");
  Tensor out(ta.shape);
  kernels::softmax_rows(ta.data.data(), out.data.data(), ta.shape[0], ta.shape[1]);
  std::int32_t id = fresh(std::move(out), {a.id}, "softmax_rows");
  nodes_[id].back = [this, id, a]() {
    if (!needs(a.id)) return;
    const Tensor& y = val(id);
    kernels::softmax_rows_backward(y.data.data(), gval(id).data(), gbuf(a.id), y.shape[0],
                                   y.shape[1]);
  };
  return {id};
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
  check_node(a, "reshape");
  const Tensor& ta = val(a.id);
  require(shape_numel(shape) == ta.numel(), Err::ShapeMismatch,
          "reshape " + shape_str(ta.shape) + " -> " + shape_str(shape));
  Tensor out;
  out.shape = std::move(shape);
  out.data = ta.data;
  std::int32_t id = fresh(std::move(out), {a.id}, "reshape");
  nodes_[id].back = [this, id, a]() {
    if (!needs(a.id)) return;
    const std::vector<double>& dy = gval(id);
    double* dx = gbuf(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
  };
  return {id};
}

Var Tape::slice_rows(Var a, std::size_t r0, std::size_t r1) {
  check_node(a, "slice_rows");
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2 && r0 < r1 && r1 <= ta.shape[0], Err::ShapeMismatch, "slice_rows");
  const std::size_t n = ta.shape[1];
  Tensor out({r1 - r0, n});
  std::copy(ta.data.begin() + r0 * n, ta.data.begin() + r1 * n, out.data.begin());
  std::int32_t id = fresh(std::move(out), {a.id}, "slice_rows");
  nodes_[id].back = [this, id, a, r0, n]() {
    if (!needs(a.id)) return;
    const std::vector<double>& dy = gval(id);
    double* dx = gbuf(a.id);
    for (std::size_t i = 0; i < dy.size(); ++i) dx[r0 * n + i] += dy[i];
  };
  return {id};
}

Var Tape::slice_cols(Var a, std::size_t c0, std::size_t c1) {
  check_node(a, "slice_cols");
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2 && c0 < c1 && c1 <= ta.shape[1], Err::ShapeMismatch, "slice_cols");
  const std::size_t m = ta.shape[0], n = ta.shape[1], w = c1 - c0;
  Tensor out({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j) out.at2(i, j) = ta.at2(i, c0 + j);
  std::int32_t id = fresh(std::move(out), {a.id}, "slice_cols");
  nodes_[id].back = [this, id, a, c0, m, n, w]() {
    if (!needs(a.id)) return;
    const double* dy = gval(id).data();
    double* dx = gbuf(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) dx[i * n + c0 + j] += dy[i * w + j];
  };
  return {id};
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  require(!xs.empty(), Err::ShapeMismatch, "concat_cols of nothing");
  std::size_t m = 0, total = 0;
  std::vector<std::int32_t> ids;
  for (Var v : xs) {
    check_node(v, "concat_cols");
    const Tensor& t = val(v.id);
    require(t.rank() == 2, Err::ShapeMismatch, "concat_cols needs rank 2");
    if (ids.empty()) m = t.shape[0];
    require(t.shape[0] == m, Err::ShapeMismatch, "concat_cols row count");
    total += t.shape[1];
    ids.push_back(v.id);
  }
  Tensor out({m, total});
  std::size_t off = 0;
  for (std::int32_t in : ids) {
    const Tensor& t = val(in);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < t.shape[1]; ++j) out.at2(i, off + j) = t.at2(i, j);
    off += t.shape[1];
  }
  std::int32_t id = fresh(std::move(out), ids, "concat_cols");
  nodes_[id].back = [this, id, ids, m, total]() {
    const double* dy = gval(id).data();
    std::size_t off = 0;
    for (std::int32_t in : ids) {
      const std::size_t w = val(in).shape[1];
      if (needs(in)) {
        double* dx = gbuf(in);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j) dx[i * w + j] += dy[i * total + off + j];
      }
      off += w;
    }
  };
  return {id};
}

Var Tape::to_tokens(Var map) {
  check_node(map, "to_tokens");
  const Tensor& tm = val(map.id);
  require(tm.rank() == 3, Err::ShapeMismatch, "to_tokens needs [c,h,t]");
  const std::size_t c = tm.shape[0], h = tm.shape[1], t = tm.shape[2];
  Tensor out({h * t, c});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * t; ++i) out.at2(i, ch) = tm.data[ch * h * t + i];
  std::int32_t id = fresh(std::move(out), {map.id}, "to_tokens");
  nodes_[id].back = [this, id, map, c, h, t]() {
    if (!needs(map.id)) return;
    const double* dy = gval(id).data();
    double* dx = gbuf(map.id);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h * t; ++i) dx[ch * h * t + i] += dy[i * c + ch];
  };
  return {id};
}

Var Tape::to_map(Var tokens, std::size_t h, std::size_t t) {
  check_node(tokens, "to_map");
  const Tensor& tt = val(tokens.id);
  require(tt.rank() == 2 && tt.shape[0] == h * t, Err::ShapeMismatch,
          "to_map " + shape_str(tt.shape) + " as " + std::to_string(h) + "x" +
              std::to_string(t));
  const std::size_t c = tt.shape[1];
  Tensor out({c, h, t});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * t; ++i) out.data[ch * h * t + i] = tt.at2(i, ch);
  std::int32_t id = fresh(std::move(out), {tokens.id}, "to_map");
  nodes_[id].back = [this, id, tokens, c, h, t]() {
    if (!needs(tokens.id)) return;
    const double* dy = gval(id).data();
    double* dx = gbuf(tokens.id);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h * t; ++i) dx[i * c + ch] += dy[ch * h * t + i];
  };
  return {id};
}

Var Tape::mean_rows(Var a) {
  check_node(a, "mean_rows");
  const Tensor& ta = val(a.id);
  require(ta.rank() == 2, Err::ShapeMismatch, "mean_rows needs rank 2");
  const std::size_t m = ta.shape[0], n = ta.shape[1];
  Tensor out({1, n});
  for (std::size_t j = 0; j < n; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += ta.at2(i, j);
    out.data[j] = acc / static_cast<double>(m);
  }
  std::int32_t id = fresh(std::move(out), {a.id}, "mean_rows");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a, m, n]() {
    if (!needs(a.id)) return;
    const double* dy = gval(id).data();
    double* dx = gbuf(a.id);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += dy[j] * inv;
  };
  return {id};
}

Var Tape::sum(Var a) {
  check_node(a, "sum");
  const Tensor& ta = val(a.id);
  double acc = 0.0;
  for (double x : ta.data) acc += x;
  std::int32_t id = fresh(Tensor::scalar(acc), {a.id}, "sum");
  finite_or_throw(id);
  nodes_[id].back = [this, id, a]() {
    if (!needs(a.id)) return;
    const double dy = gval(id)[0];
    double* dx = gbuf(a.id);
    for (std::size_t i = 0; i < val(a.id).numel(); ++i) dx[i] += dy;
  };
  return {id};
}

Var Tape::conv2d(Var in, Var kernel, Var bias, std::size_t stride, std::size_t pad,
                 std::size_t groups) {
  check_node(in, "conv2d");
  check_node(kernel, "conv2d");
  const Tensor& ti = val(in.id);
  const Tensor& tk = val(kernel.id);
  require(ti.rank() == 3 && tk.rank() == 4, Err::ShapeMismatch,
          "conv2d wants [c,h,w] input and [co,ci/g,kh,kw] kernel");
  require(stride >= 1, Err::BadConfig, "conv2d stride must be >= 1");
  kernels::Conv2dDims d{ti.shape[0], ti.shape[1], ti.shape[2], tk.shape[0],
                        tk.shape[2], tk.shape[3], stride,      pad,
                        groups};
  require(groups >= 1 && d.c_in % groups == 0 && d.c_out % groups == 0, Err::BadGroups,
          "conv2d channels not divisible by groups");
  require(tk.shape[1] == d.c_in / groups, Err::ShapeMismatch,
          "conv2d kernel channel slice " + shape_str(tk.shape));
  require(d.h + 2 * pad >= d.kh && d.w + 2 * pad >= d.kw, Err::ShapeMismatch,
          "conv2d kernel larger than padded input");
  const double* bptr = nullptr;
  if (bias.valid()) {
    check_node(bias, "conv2d");
    require(val(bias.id).numel() == d.c_out, Err::ShapeMismatch, "conv2d bias size");
    bptr = val(bias.id).data.data();
  }
  Tensor out({d.c_out, d.h_out(), d.w_out()});
  kernels::conv2d_forward(ti.data.data(), tk.data.data(), bptr, out.data.data(), d);
  macs_ += static_cast<std::uint64_t>(d.c_out) * (d.c_in / groups) * d.kh * d.kw *
           d.h_out() * d.w_out();
  std::vector<std::int32_t> ins = {in.id, kernel.id};
  if (bias.valid()) ins.push_back(bias.id);
  std::int32_t id = fresh(std::move(out), std::move(ins), "conv2d");
  finite_or_throw(id);
  nodes_[id].back = [this, id, in, kernel, bias, d]() {
    const double* dy = gval(id).data();
    if (needs(in.id))
      kernels::conv2d_backward_input(dy, val(kernel.id).data.data(), gbuf(in.id), d);
    if (needs(kernel.id))
      kernels::conv2d_backward_kernel(dy, val(in.id).data.data(), gbuf(kernel.id), d);
    if (bias.valid() && needs(bias.id)) kernels::conv2d_backward_bias(dy, gbuf(bias.id), d);
  };
  return {id};
}

Var Tape::bilinear_sample(Var map, Var pts) {
  check_node(map, "bilinear_sample");
  check_node(pts, "bilinear_sample");
  const Tensor& tm = val(map.id);
  const Tensor& tp = val(pts.id);
  require(tm.rank() == 3, Err::ShapeMismatch, "bilinear_sample map must be [c,h,w]");
  require(tp.rank() == 2 && tp.shape[1] == 2, Err::ShapeMismatch,
          "bilinear_sample points must be [p,2]");
  require(tp.all_finite(), Err::NonFiniteCoord, "bilinear_sample got NaN/Inf coordinate");
  const std::size_t c = tm.shape[0], h = tm.shape[1], w = tm.shape[2], p = tp.shape[0];
  Tensor out({p, c});
  kernels::bilinear_gather(tm.data.data(), c, h, w, tp.data.data(), p, out.data.data());
  std::int32_t id = fresh(std::move(out), {map.id, pts.id}, "bilinear_sample");
  finite_or_throw(id);
  nodes_[id].back = [this, id, map, pts, c, h, w, p]() {
    const double* dy = gval(id).data();
    double* dmap = needs(map.id) ? gbuf(map.id) : nullptr;
    double* dpts = needs(pts.id) ? gbuf(pts.id) : nullptr;
    if (dmap || dpts)
      kernels::bilinear_backward(val(map.id).data.data(), c, h, w, val(pts.id).data.data(), p,
                                 dy, dmap, dpts);
  };
  return {id};
}

Var Tape::pair_displacements(Var q_pos, Var k_pos) {
  check_node(q_pos, "pair_displacements");
  check_node(k_pos, "pair_displacements");
  const Tensor& tq = val(q_pos.id);
  const Tensor& tk = val(k_pos.id);
  require(tq.rank() == 2 && tq.shape[1] == 2 && tk.rank() == 2 && tk.shape[1] == 2,
          Err::ShapeMismatch, "pair_displacements wants [n,2] and [k,2]");
  const std::size_t n = tq.shape[0], k = tk.shape[0];
  Tensor out({n * k, 2});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < k; ++j) {
      out.at2(i * k + j, 0) = (tq.at2(i, 0) - tk.at2(j, 0)) * 0.5;
      out.at2(i * k + j, 1) = (tq.at2(i, 1) - tk.at2(j, 1)) * 0.5;
    }
  std::int32_t id = fresh(std::move(out), {q_pos.id, k_pos.id}, "pair_displacements");
  nodes_[id].back = [this, id, q_pos, k_pos, n, k]() {
    const double* dy = gval(id).data();
    if (needs(q_pos.id)) {
      double* dq = gbuf(q_pos.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          dq[i * 2 + 0] += 0.5 * dy[(i * k + j) * 2 + 0];
          dq[i * 2 + 1] += 0.5 * dy[(i * k + j) * 2 + 1];
        }
    }
    if (needs(k_pos.id)) {
      double* dk = gbuf(k_pos.id);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          dk[j * 2 + 0] -= 0.5 * dy[(i * k + j) * 2 + 0];
          dk[j * 2 + 1] -= 0.5 * dy[(i * k + j) * 2 + 1];
        }
    }
  };
  return {id};
}

Var Tape::cross_entropy(Var logits, std::size_t label) {
  check_node(logits, "cross_entropy");
  const Tensor& tl = val(logits.id);
  require(tl.rank() == 1 || (tl.rank() == 2 && tl.shape[0] == 1), Err::ShapeMismatch,
          "cross_entropy wants a logit vector");
  const std::size_t k = tl.numel();
  require(label < k, Err::BadLabel,
          "label " + std::to_string(label) + " for " + std::to_string(k) + " classes");
  require(tl.all_finite(), Err::NonFiniteInput, "cross_entropy logits have NaN/Inf");
  double mx = tl.data[0];
  for (double x : tl.data) mx = std::max(mx, x);
  double sum = 0.0;
  std::vector<double> probs(k);
  for (std::size_t i = 0; i < k; ++i) {
    probs[i] = std::exp(tl.data[i] - mx);
    sum += probs[i];
  }
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < k; ++i) probs[i] /= sum;
  std::int32_t id = fresh(Tensor::scalar(lse - tl.data[label]), {logits.id}, "cross_entropy");
  finite_or_throw(id);
  nodes_[id].back = [this, id, logits, label, probs = std::move(probs)]() {
    if (!needs(logits.id)) return;
    const double dy = gval(id)[0];
    double* dl = gbuf(logits.id);
    for (std::size_t i = 0; i < probs.size(); ++i)
      dl[i] += dy * (probs[i] - (i == label ? 1.0 : 0.0));
  };
  return {id};
}

void Tape::backward(Var loss) {
  require(!consumed_, Err::DetachedGraph, "backward on a consumed tape");
  require(loss.id >= 0 && loss.id < static_cast<std::int32_t>(nodes_.size()),
          Err::DetachedGraph, "loss var not on this tape");
  require(nodes_[loss.id].value.numel() == 1, Err::NotScalar,
          "backward needs a scalar loss, got " + shape_str(nodes_[loss.id].value.shape));

  std::vector<char> reachable(nodes_.size(), 0);
  std::vector<std::int32_t> stack = {loss.id};
  reachable[loss.id] = 1;
  while (!stack.empty()) {
    const std::int32_t id = stack.back();
    stack.pop_back();
    for (std::int32_t in : nodes_[id].inputs)
      if (!reachable[in]) {
        reachable[in] = 1;
        stack.push_back(in);
      }
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id)
    if (reachable[id] && nodes_[id].requires_grad) gbuf(static_cast<std::int32_t>(id));

  nodes_[loss.id].grad[0] = 1.0;
  for (std::int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (reachable[id] && n.requires_grad && n.back) n.back();
  }

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    if (reachable[id] && n.bound) {
      n.bound->value.ensure_grad();
      for (std::size_t i = 0; i < n.grad.size(); ++i) n.bound->value.grad[i] += n.grad[i];
    }
  }
  consumed_ = true;
}

const Tensor& Tape::value(Var v) const {
  check_node(v, "value");
  return nodes_[v.id].value;
}

Tensor Tape::grad(Var v) const {
  check_node(v, "grad");
  const Node& n = nodes_[v.id];
  require(consumed_, Err::DetachedGraph, "grad requested before backward");
  require(n.grad.size() == n.value.numel(), Err::DetachedGraph,
          "no gradient recorded for this var");
  Tensor g;
  g.shape = n.value.shape;
  g.data = n.grad;
  return g;
}

double grad_check(const std::function<Var(Tape&, Var)>& f, const Tensor& x, double eps) {
  Tape tape;
  Var vx = tape.input(x, true);
  Var y = f(tape, vx);
  tape.backward(y);
  const Tensor analytic = tape.grad(vx);

  auto eval = [&](const Tensor& probe) {
    Tape t;
    Var v = t.input(probe, false);
    return t.value(f(t, v)).data[0];
  };

  double worst = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    Tensor probe = x;
    probe.data[i] += eps;
    const double fp = eval(probe);
    probe.data[i] = x.data[i] - eps;
    const double fm = eval(probe);
    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic.data[i];
    const double err =
        std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
    worst = std::max(worst, err);
  }
  return worst;
}

double grad_check_params(const std::function<Var(Tape&)>& loss_fn,
                         const std::vector<Parameter*>& params, double eps) {
  for (Parameter* p : params) {
    p->value.ensure_grad();
    p->value.zero_grad();
  }
  {
    Tape tape;
    Var loss = loss_fn(tape);
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape t;
    return t.value(loss_fn(t)).data[0];
  };

  double worst = 0.0;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double saved = p->value.data[i];
      p->value.data[i] = saved + eps;
      const double fp = eval();
      p->value.data[i] = saved - eps;
      const double fm = eval();
      p->value.data[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = p->value.grad[i];
      const double err =
          std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace audeform

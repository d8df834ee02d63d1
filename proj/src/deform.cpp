#include "audeform/deform.hpp"

#include <cmath>
#include <ostream>

#include "audeform/error.hpp"

namespace audeform {

namespace {

double lin_coord(std::size_t i, std::size_t extent) {
  if (extent <= 1) return 0.0;
  return 2.0 * static_cast<double>(i) / static_cast<double>(extent - 1) - 1.0;
}

// [(h*t), 2] rows of (py, px), the full-resolution token positions.
Tensor position_rows(std::size_t h, std::size_t t) {
  Tensor pts({h * t, 2});
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < t; ++j) {
      pts.at2(i * t + j, 0) = lin_coord(i, h);
      pts.at2(i * t + j, 1) = lin_coord(j, t);
    }
  return pts;
}

Tensor uniform_matrix(std::vector<std::size_t> shape, double bound, Rng& rng) {
  return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

}  // namespace

ReferenceGrid make_grid(std::size_t h, std::size_t t, std::size_t r) {
  require(r >= 1, Err::BadFactor, "grid factor must be >= 1");
  require(h % r == 0 && t % r == 0, Err::BadFactor,
          "grid factor " + std::to_string(r) + " does not divide " + std::to_string(h) + "x" +
              std::to_string(t));
  ReferenceGrid g;
  g.h_g = h / r;
  g.t_g = t / r;
  g.r = r;
  g.points = position_rows(g.h_g, g.t_g);
  return g;
}

void DeformAttnConfig::validate() const {
  require(heads >= 1 && channels >= 1, Err::BadConfig, "attention needs heads and channels");
  require(channels % heads == 0, Err::BadConfig, "channels not divisible by heads");
  require(groups >= 1 && heads % groups == 0, Err::BadGroups,
          "heads not divisible by offset groups");
  require(grid_factor >= 1, Err::BadFactor, "grid factor must be >= 1");
  require(offset_stride >= 1, Err::BadConfig, "offset stride must be >= 1");
  require(offset_scale >= 0.0, Err::BadScale, "offset scale must be nonnegative");
}

DeformAttnParams DeformAttnParams::init(const DeformAttnConfig& cfg, std::size_t h,
                                        std::size_t t, const std::string& prefix, Rng& rng) {
  cfg.validate();
  const double b = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
  DeformAttnParams p;
  p.wq = Parameter(prefix + ".wq", uniform_matrix({cfg.channels, cfg.channels}, b, rng));
  p.wk = Parameter(prefix + ".wk", uniform_matrix({cfg.channels, cfg.channels}, b, rng));
  p.wv = Parameter(prefix + ".wv", uniform_matrix({cfg.channels, cfg.channels}, b, rng));
  p.wo = Parameter(prefix + ".wo", uniform_matrix({cfg.channels, cfg.channels}, b, rng));
  const double bc = 1.0 / std::sqrt(25.0);
  p.off_dw = Parameter(prefix + ".off_dw", uniform_matrix({cfg.channels, 1, 5, 5}, bc, rng));
  p.off_dw_bias = Parameter(prefix + ".off_dw_bias", Tensor::zeros({cfg.channels}));
  p.off_pw = Parameter(prefix + ".off_pw",
                       uniform_matrix({2 * cfg.groups, cfg.channels, 1, 1}, b, rng));
  p.bias_table =
      Parameter(prefix + ".bias_table", Tensor::zeros({2 * h - 1, 2 * t - 1}));
  return p;
}

std::vector<Parameter*> DeformAttnParams::all() {
  return {&wq, &wk, &wv, &wo, &off_dw, &off_dw_bias, &off_pw, &bias_table};
}

MhsaParams MhsaParams::init(std::size_t channels, const std::string& prefix, Rng& rng) {
  const double b = 1.0 / std::sqrt(static_cast<double>(channels));
  MhsaParams p;
  p.wq = Parameter(prefix + ".wq", uniform_matrix({channels, channels}, b, rng));
  p.wk = Parameter(prefix + ".wk", uniform_matrix({channels, channels}, b, rng));
  p.wv = Parameter(prefix + ".wv", uniform_matrix({channels, channels}, b, rng));
  p.wo = Parameter(prefix + ".wo", uniform_matrix({channels, channels}, b, rng));
  return p;
}

std::vector<Parameter*> MhsaParams::all() { return {&wq, &wk, &wv, &wo}; }

Var audio_offset_generator(Ctx& ctx, Var q_map, const DeformAttnConfig& cfg,
                           DeformAttnParams& params) {
  Tape& tp = ctx.tape;
  const Tensor& qm = tp.value(q_map);
  require(qm.rank() == 3 && qm.shape[0] == cfg.channels, Err::ShapeMismatch,
          "offset generator input " + shape_str(qm.shape));
  const std::size_t h = qm.shape[1], t = qm.shape[2];
  const ReferenceGrid grid = make_grid(h, t, cfg.grid_factor);

  // Strided depthwise 5x5 subsamples the queries, then GELU and the bias-free
  // 1x1 produce the raw 2G offset channels.
  Var dw = tp.conv2d(q_map, ctx.use(params.off_dw), ctx.use(params.off_dw_bias),
                     cfg.offset_stride, 2, cfg.channels);
  Var act = tp.gelu(dw);
  Var raw = tp.conv2d(act, ctx.use(params.off_pw), Var{}, 1, 0, 1);

  // Resize to grid extents with the same bilinear kernel, then bound.
  Var resized_rows = tp.bilinear_sample(
      raw, tp.constant(position_rows(grid.h_g, grid.t_g)));      // [K, 2G]
  Var rows = tp.transpose(resized_rows);                          // [2G, K]
  Var bounded = tp.tanh(rows);
  Tensor axis_scale({2 * cfg.groups, grid.h_g * grid.t_g});
  for (std::size_t g = 0; g < cfg.groups; ++g)
    for (std::size_t k = 0; k < grid.h_g * grid.t_g; ++k) {
      axis_scale.at2(2 * g, k) = cfg.scale_y(h);
      axis_scale.at2(2 * g + 1, k) = cfg.scale_x(t);
    }
  return tp.mul(bounded, tp.constant(std::move(axis_scale)));
}

Var relative_bias(Ctx& ctx, Var table, Var q_pos, Var k_pos) {
  Tape& tp = ctx.tape;
  const Tensor& tt = tp.value(table);
  require(tt.rank() == 2, Err::ShapeMismatch, "bias table must be rank 2");
  const std::size_t n = tp.value(q_pos).shape[0], k = tp.value(k_pos).shape[0];
  Var disp = tp.pair_displacements(q_pos, k_pos);
  Var table_map = tp.reshape(table, {1, tt.shape[0], tt.shape[1]});
  Var vals = tp.bilinear_sample(table_map, disp);  // [(n*k), 1]
  return tp.reshape(vals, {n, k});
}

Var deform_attention(Ctx& ctx, Var x_map, const DeformAttnConfig& cfg,
                     DeformAttnParams& params, DeformAttnTrace* trace) {
  cfg.validate();
  Tape& tp = ctx.tape;
  const Tensor& xm = tp.value(x_map);
  require(xm.rank() == 3 && xm.shape[0] == cfg.channels, Err::ShapeMismatch,
          "deform_attention input " + shape_str(xm.shape));
  const std::size_t h = xm.shape[1], t = xm.shape[2];
  const std::size_t d = cfg.head_dim();
  const ReferenceGrid grid = make_grid(h, t, cfg.grid_factor);
  const std::size_t kn = grid.h_g * grid.t_g;
  const std::size_t heads_per_group = cfg.heads / cfg.groups;

  Var tokens = tp.to_tokens(x_map);                 // [N, C]
  Var q = tp.matmul(tokens, ctx.use(params.wq));    // [N, C]
  Var q_map = tp.to_map(q, h, t);
  Var offsets = audio_offset_generator(ctx, q_map, cfg, params);  // [2G, K]

  Var grid_pts = tp.constant(grid.points);
  Var q_positions = tp.constant(position_rows(h, t));

  if (trace) {
    trace->grid = grid;
    trace->offsets.groups = cfg.groups;
    trace->offsets.h_g = grid.h_g;
    trace->offsets.t_g = grid.t_g;
    trace->offsets.bound_y = cfg.scale_y(h);
    trace->offsets.bound_x = cfg.scale_x(t);
    trace->offsets.offsets = Tensor({cfg.groups, grid.h_g, grid.t_g, 2});
    trace->sample_points = Tensor({cfg.groups, kn, 2});
    trace->head_probs.clear();
    const Tensor& off = tp.value(offsets);
    for (std::size_t g = 0; g < cfg.groups; ++g)
      for (std::size_t k = 0; k < kn; ++k) {
        trace->offsets.offsets.data[(g * kn + k) * 2 + 0] = off.at2(2 * g, k);
        trace->offsets.offsets.data[(g * kn + k) * 2 + 1] = off.at2(2 * g + 1, k);
      }
  }

  std::vector<Var> head_outputs(cfg.heads);
  for (std::size_t g = 0; g < cfg.groups; ++g) {
    // Deformed sampling positions for this group, clamped to the map.
    Var off_g = tp.transpose(tp.slice_rows(offsets, 2 * g, 2 * g + 2));  // [K, 2]
    Var pts_g = tp.clamp(tp.add(grid_pts, off_g), -1.0, 1.0);

    Var sampled = tp.bilinear_sample(x_map, pts_g);              // [K, C]
    Var k_g = tp.matmul(sampled, ctx.use(params.wk));
    Var v_g = tp.matmul(sampled, ctx.use(params.wv));
    Var bias_g = relative_bias(ctx, ctx.use(params.bias_table), q_positions, pts_g);

    if (trace) {
      const Tensor& sp = tp.value(pts_g);
      for (std::size_t k = 0; k < kn; ++k) {
        trace->sample_points.data[(g * kn + k) * 2 + 0] = sp.at2(k, 0);
        trace->sample_points.data[(g * kn + k) * 2 + 1] = sp.at2(k, 1);
      }
    }

    for (std::size_t hm = 0; hm < heads_per_group; ++hm) {
      const std::size_t m = g * heads_per_group + hm;
      Var qm = tp.slice_cols(q, m * d, (m + 1) * d);
      Var km = tp.slice_cols(k_g, m * d, (m + 1) * d);
      Var vm = tp.slice_cols(v_g, m * d, (m + 1) * d);
      Var logits = tp.scale(tp.matmul(qm, tp.transpose(km)),
                            1.0 / std::sqrt(static_cast<double>(d)));
      Var probs = tp.softmax_rows(tp.add(logits, bias_g));
      if (trace) trace->head_probs.push_back(tp.value(probs));
      head_outputs[m] = tp.matmul(probs, vm);
    }
  }

  Var z = tp.concat_cols(head_outputs);
  Var out_tokens = tp.matmul(z, ctx.use(params.wo));
  return tp.to_map(out_tokens, h, t);
}

Var mhsa(Ctx& ctx, Var tokens, std::size_t heads, MhsaParams& params) {
  Tape& tp = ctx.tape;
  const Tensor& tt = tp.value(tokens);
  require(tt.rank() == 2, Err::ShapeMismatch, "mhsa wants token rows");
  const std::size_t c = tt.shape[1];
  require(c % heads == 0, Err::BadConfig, "channels not divisible by heads");
  const std::size_t d = c / heads;
  Var q = tp.matmul(tokens, ctx.use(params.wq));
  Var k = tp.matmul(tokens, ctx.use(params.wk));
  Var v = tp.matmul(tokens, ctx.use(params.wv));
  std::vector<Var> outs(heads);
  for (std::size_t m = 0; m < heads; ++m) {
    Var qm = tp.slice_cols(q, m * d, (m + 1) * d);
    Var km = tp.slice_cols(k, m * d, (m + 1) * d);
    Var vm = tp.slice_cols(v, m * d, (m + 1) * d);
    Var probs = tp.softmax_rows(
        tp.scale(tp.matmul(qm, tp.transpose(km)), 1.0 / std::sqrt(static_cast<double>(d))));
    outs[m] = tp.matmul(probs, vm);
  }
  return tp.matmul(tp.concat_cols(outs), ctx.use(params.wo));
}

void dump_offsets_csv(const DeformAttnTrace& trace, std::ostream& os) {
  os << "group,gi,gj,ref_y,ref_x,dy,dx\n";
  const std::size_t kn = trace.offsets.h_g * trace.offsets.t_g;
  for (std::size_t g = 0; g < trace.offsets.groups; ++g)
    for (std::size_t gi = 0; gi < trace.offsets.h_g; ++gi)
      for (std::size_t gj = 0; gj < trace.offsets.t_g; ++gj) {
        const std::size_t k = gi * trace.offsets.t_g + gj;
        os << g << ',' << gi << ',' << gj << ',' << trace.grid.points.at2(k, 0) << ','
           << trace.grid.points.at2(k, 1) << ','
           << trace.offsets.offsets.data[(g * kn + k) * 2 + 0] << ','
           << trace.offsets.offsets.data[(g * kn + k) * 2 + 1] << '\n';
      }
}

}  // namespace audeform

#pragma once

#include <cstddef>
#include <iosfwd>
#include <vector>

#include "audeform/tape.hpp"

namespace audeform {

// Uniform normalized grid of key/value reference points, downsampled from the
// token map by factor r. points is [(h_g * t_g), 2] rows of (py, px) with
// corners at exactly -1 and +1; an extent of 1 maps to coordinate 0.
struct ReferenceGrid {
  std::size_t h_g = 0, t_g = 0;
  std::size_t r = 1;
  Tensor points;
};

ReferenceGrid make_grid(std::size_t h, std::size_t t, std::size_t r);

struct DeformAttnConfig {
  std::size_t channels = 8;
  std::size_t heads = 2;
  std::size_t groups = 1;       // offset groups; heads split contiguously
  std::size_t grid_factor = 2;  // r
  double offset_scale = 2.0;    // grid cells; per-axis bound is scale * r / extent
  std::size_t offset_stride = 4;

  void validate() const;
  std::size_t head_dim() const { return channels / heads; }
  double scale_y(std::size_t h) const {
    return offset_scale * static_cast<double>(grid_factor) / static_cast<double>(h);
  }
  double scale_x(std::size_t t) const {
    return offset_scale * static_cast<double>(grid_factor) / static_cast<double>(t);
  }
};

// Projections plus the offset generator convs and the relative position bias
// table for one attention layer at token extents h x t.
struct DeformAttnParams {
  Parameter wq, wk, wv, wo;       // [C, C]
  Parameter off_dw, off_dw_bias;  // depthwise 5x5 and its bias
  Parameter off_pw;               // 1x1 to 2G channels, bias-free
  Parameter bias_table;           // [(2h-1), (2t-1)], zero-initialized

  static DeformAttnParams init(const DeformAttnConfig& cfg, std::size_t h, std::size_t t,
                               const std::string& prefix, Rng& rng);
  std::vector<Parameter*> all();
};

// Learned per-group offsets over the reference grid, |component| <= the
// per-axis scale bound by construction.
struct OffsetField {
  std::size_t groups = 0;
  std::size_t h_g = 0, t_g = 0;
  Tensor offsets;  // [G, h_g, t_g, 2]
  double bound_y = 0.0, bound_x = 0.0;
};

// Everything the visualization and the invariants need to observe.
struct DeformAttnTrace {
  ReferenceGrid grid;
  OffsetField offsets;
  Tensor sample_points;             // [G, h_g * t_g, 2], clamped absolute positions
  std::vector<Tensor> head_probs;   // per head, [N, h_g * t_g]
};

// Query map -> per-group offset rows. Output is [2G, h_g * t_g], rows (2g,
// 2g+1) holding the y and x components for group g. Pipeline: strided 5x5
// depthwise conv, GELU, bias-free 1x1 conv to 2G channels, bilinear resize to
// the grid extents, then the per-axis tanh bound.
Var audio_offset_generator(Ctx& ctx, Var q_map, const DeformAttnConfig& cfg,
                           DeformAttnParams& params);

// Bias matrix [n, k]: displacement (q_pos - k_pos)/2 per axis, fetched from
// the table with the bilinear kernel; differentiable in both the table and
// the key positions.
Var relative_bias(Ctx& ctx, Var table, Var q_pos, Var k_pos);

// Full deformable attention over a [C, h, t] map.
Var deform_attention(Ctx& ctx, Var x_map, const DeformAttnConfig& cfg,
                     DeformAttnParams& params, DeformAttnTrace* trace = nullptr);

// Plain multi-head self-attention (no bias, no sampling) over token rows.
struct MhsaParams {
  Parameter wq, wk, wv, wo;
  static MhsaParams init(std::size_t channels, const std::string& prefix, Rng& rng);
  std::vector<Parameter*> all();
};
Var mhsa(Ctx& ctx, Var tokens, std::size_t heads, MhsaParams& params);

// CSV rows (group, gi, gj, ref_y, ref_x, dy, dx) for offset visualization.
void dump_offsets_csv(const DeformAttnTrace& trace, std::ostream& os);

}  // namespace audeform

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "audeform/deform.hpp"
#include "audeform/error.hpp"
#include "audeform/reference.hpp"

using namespace audeform;

namespace {

Tensor random_map(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  return Tensor::uniform({c, h, w}, -1.0, 1.0, rng);
}

void zero_offset_weights(DeformAttnParams& p) {
  for (Parameter* q : {&p.off_dw, &p.off_dw_bias, &p.off_pw})
    for (double& v : q->value.data) v = 0.0;
}

Tensor map_from_tokens(const Tensor& tokens, std::size_t h, std::size_t t) {
  const std::size_t c = tokens.shape[1];
  Tensor out({c, h, t});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < h * t; ++i) out.data[ch * h * t + i] = tokens.at2(i, ch);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

}  // namespace

TEST_CASE("make_grid corners and spacing") {
  const ReferenceGrid g2 = make_grid(2, 2, 1);
  CHECK(g2.points.at2(0, 0) == -1.0);
  CHECK(g2.points.at2(0, 1) == -1.0);
  CHECK(g2.points.at2(1, 1) == 1.0);
  CHECK(g2.points.at2(3, 0) == 1.0);
  CHECK(g2.points.at2(3, 1) == 1.0);

  const ReferenceGrid g4 = make_grid(4, 4, 2);  // 2x2 grid
  CHECK(g4.h_g == 2);
  CHECK(g4.points.at2(0, 0) == -1.0);
  CHECK(g4.points.at2(3, 0) == 1.0);

  const ReferenceGrid g8 = make_grid(8, 8, 2);  // 4x4 grid, spacing 2/3
  CHECK(g8.h_g == 4);
  for (std::size_t i = 0; i + 1 < 4; ++i)
    CHECK(g8.points.at2((i + 1) * 4, 0) - g8.points.at2(i * 4, 0) ==
          doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const ReferenceGrid g1 = make_grid(3, 1, 1);  // degenerate time extent
  CHECK(g1.points.at2(0, 1) == 0.0);

  CHECK_THROWS_AS(make_grid(8, 8, 3), Error);  // BadFactor
}

TEST_CASE("offset generator with zero weights emits zero offsets") {
  Rng rng(10);
  DeformAttnConfig cfg;
  cfg.channels = 4;
  cfg.heads = 2;
  cfg.groups = 1;
  cfg.grid_factor = 2;
  DeformAttnParams p = DeformAttnParams::init(cfg, 8, 8, "d", rng);
  zero_offset_weights(p);

  Tape tape;
  Ctx ctx(tape);
  Var q_map = tape.input(random_map(4, 8, 8, rng));
  Var off = audio_offset_generator(ctx, q_map, cfg, p);
  for (double v : tape.value(off).data) CHECK(v == 0.0);
}

TEST_CASE("offsets never exceed the tanh bound") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    DeformAttnConfig cfg;
    cfg.channels = 4;
    cfg.heads = 2;
    cfg.groups = 1 + rng.below(2);
    cfg.grid_factor = 1 + rng.below(2);
    cfg.offset_stride = 1 + rng.below(4);
    const std::size_t h = 8, t = 8;
    DeformAttnParams p = DeformAttnParams::init(cfg, h, t, "d", rng);
    // Large weights push tanh toward saturation.
    for (double& v : p.off_dw.value.data) v = rng.uniform(-40.0, 40.0);
    for (double& v : p.off_pw.value.data) v = rng.uniform(-40.0, 40.0);

    Tape tape;
    Ctx ctx(tape);
    Var off = audio_offset_generator(ctx, tape.input(random_map(4, h, t, rng)), cfg, p);
    const Tensor& o = tape.value(off);
    const double sy = cfg.scale_y(h), sx = cfg.scale_x(t);
    for (std::size_t g = 0; g < cfg.groups; ++g)
      for (std::size_t k = 0; k < o.shape[1]; ++k) {
        CHECK(std::fabs(o.at2(2 * g, k)) <= sy);
        CHECK(std::fabs(o.at2(2 * g + 1, k)) <= sx);
      }
  }
}

TEST_CASE("offset generator matches the composed serial oracle") {
  Rng rng(12);
  DeformAttnConfig cfg;
  cfg.channels = 1;
  cfg.heads = 1;
  cfg.groups = 1;
  cfg.grid_factor = 2;
  cfg.offset_scale = 2.0;
  cfg.offset_stride = 4;
  const std::size_t h = 8, t = 8;
  DeformAttnParams p = DeformAttnParams::init(cfg, h, t, "d", rng);
  const Tensor q_map = random_map(1, h, t, rng);

  Tape tape;
  Ctx ctx(tape);
  Var off = audio_offset_generator(ctx, tape.input(q_map), cfg, p);
  const Tensor& got = tape.value(off);

  // Serial route: depthwise conv, gelu, pointwise conv, grid resize, tanh.
  Tensor dw = reference::conv2d(q_map, p.off_dw.value, &p.off_dw_bias.value,
                                cfg.offset_stride, 2, 1);
  for (double& v : dw.data) v = reference::gelu(v);
  const Tensor raw = reference::conv2d(dw, p.off_pw.value, nullptr, 1, 0, 1);
  const ReferenceGrid grid = make_grid(h, t, cfg.grid_factor);
  for (std::size_t k = 0; k < grid.h_g * grid.t_g; ++k) {
    const double py = grid.points.at2(k, 0), px = grid.points.at2(k, 1);
    const double ey = cfg.scale_y(h) * std::tanh(reference::bilinear_at(raw, 0, py, px));
    const double ex = cfg.scale_x(t) * std::tanh(reference::bilinear_at(raw, 1, py, px));
    CHECK(std::fabs(got.at2(0, k) - ey) < 1e-10);
    CHECK(std::fabs(got.at2(1, k) - ex) < 1e-10);
  }
}

TEST_CASE("bilinear sampling exact and midpoint cases") {
  Rng rng(13);
  const Tensor map = random_map(1, 5, 5, rng);
  Tape tape;
  Ctx ctx(tape);

  // Integer pixels: (e-1) = 4 keeps the denormalization exact.
  Tensor pts({25, 2});
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      pts.at2(i * 5 + j, 0) = 2.0 * static_cast<double>(i) / 4.0 - 1.0;
      pts.at2(i * 5 + j, 1) = 2.0 * static_cast<double>(j) / 4.0 - 1.0;
    }
  const Tensor got = tape.value(tape.bilinear_sample(tape.constant(map), tape.constant(pts)));
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(got.at2(i * 5 + j, 0) == map.at3(0, i, j));

  // Midpoint of a two-pixel axis averages the pixels.
  const Tensor two = Tensor::from({1, 1, 2}, {3.0, 5.0});
  const Tensor mid = Tensor::from({1, 2}, {0.0, 0.0});
  const Tensor m = tape.value(tape.bilinear_sample(tape.constant(two), tape.constant(mid)));
  CHECK(m.data[0] == 4.0);
}

TEST_CASE("bilinear sampling matches the exhaustive double-sum oracle") {
  Rng rng(14);
  const Tensor map = random_map(1, 5, 7, rng);
  Tensor pts({100, 2});
  for (std::size_t i = 0; i < 100; ++i) {
    pts.at2(i, 0) = rng.uniform(-1.2, 1.2);  // includes out-of-range coords
    pts.at2(i, 1) = rng.uniform(-1.2, 1.2);
  }
  Tape tape;
  const Tensor got = tape.value(tape.bilinear_sample(tape.constant(map), tape.constant(pts)));
  const Tensor want = reference::bilinear_sample(map, pts);
  CHECK(max_abs_diff(got, want) < 1e-12);
}

TEST_CASE("out-of-range coordinates clamp and never produce NaN") {
  Rng rng(15);
  const Tensor map = random_map(2, 4, 4, rng);
  const Tensor wild = Tensor::from({3, 2}, {-3.0, 0.7, 1.0, 9.0, -100.0, 100.0});
  const Tensor tame = Tensor::from({3, 2}, {-1.0, 0.7, 1.0, 1.0, -1.0, 1.0});
  Tape tape;
  const Tensor a = tape.value(tape.bilinear_sample(tape.constant(map), tape.constant(wild)));
  const Tensor b = tape.value(tape.bilinear_sample(tape.constant(map), tape.constant(tame)));
  CHECK(a.data == b.data);
  CHECK(a.all_finite());

  Tensor nan_pts = Tensor::zeros({1, 2});
  nan_pts.data[0] = std::nan("");
  CHECK_THROWS_AS(tape.bilinear_sample(tape.constant(map), tape.input(nan_pts)), Error);
}

TEST_CASE("relative bias center and constant-table cases") {
  Rng rng(16);
  Tensor table = Tensor::uniform({15, 15}, -1.0, 1.0, rng);
  Tape tape;
  Ctx ctx(tape);

  // Zero displacement reads the center entry exactly.
  Var b0 = relative_bias(ctx, tape.constant(table), tape.constant(Tensor::zeros({1, 2})),
                         tape.constant(Tensor::zeros({1, 2})));
  CHECK(tape.value(b0).data[0] == table.at2(7, 7));

  // A constant table gives a constant bias for any positions.
  const Tensor flat = Tensor::full({9, 11}, 0.37);
  Tensor qpos = Tensor::uniform({6, 2}, -1.0, 1.0, rng);
  Tensor kpos = Tensor::uniform({4, 2}, -1.0, 1.0, rng);
  Var bc = relative_bias(ctx, tape.constant(flat), tape.constant(qpos), tape.constant(kpos));
  for (double v : tape.value(bc).data) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
}

TEST_CASE("relative bias matches the double-sum oracle") {
  Rng rng(17);
  Tensor table = Tensor::uniform({15, 13}, -2.0, 2.0, rng);
  Tensor qpos = Tensor::uniform({8, 2}, -1.0, 1.0, rng);
  Tensor kpos = Tensor::uniform({5, 2}, -1.0, 1.0, rng);
  Tape tape;
  Ctx ctx(tape);
  Var bias = relative_bias(ctx, tape.constant(table), tape.constant(qpos),
                           tape.constant(kpos));
  const Tensor& got = tape.value(bias);

  Tensor table_map = table;
  table_map.shape = {1, 15, 13};
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 5; ++j) {
      const double dy = (qpos.at2(i, 0) - kpos.at2(j, 0)) * 0.5;
      const double dx = (qpos.at2(i, 1) - kpos.at2(j, 1)) * 0.5;
      CHECK(std::fabs(got.at2(i, j) - reference::bilinear_at(table_map, 0, dy, dx)) < 1e-12);
    }
}

TEST_CASE("zero offsets equal the fixed-grid attention path") {
  Rng rng(18);
  for (int trial = 0; trial < 5; ++trial) {
    DeformAttnConfig cfg;
    cfg.channels = 4;
    cfg.heads = 2;
    cfg.groups = 2;
    cfg.grid_factor = 2;
    const std::size_t h = 8, t = 8;
    DeformAttnParams p = DeformAttnParams::init(cfg, h, t, "d", rng);
    zero_offset_weights(p);
    for (double& v : p.bias_table.value.data) v = rng.uniform(-0.5, 0.5);

    const Tensor x = random_map(4, h, t, rng);
    Tape tape;
    Ctx ctx(tape);
    Var out = deform_attention(ctx, tape.input(x), cfg, p);

    const Tensor want =
        reference::fixed_grid_attention(x, p.wq.value, p.wk.value, p.wv.value, p.wo.value,
                                        p.bias_table.value, cfg.heads, cfg.grid_factor);
    CHECK(max_abs_diff(tape.value(out), want) < 1e-10);
  }
}

TEST_CASE("r=1, zero offsets, zero table degenerates to vanilla MHSA") {
  Rng rng(19);
  DeformAttnConfig cfg;
  cfg.channels = 4;
  cfg.heads = 2;
  cfg.groups = 1;
  cfg.grid_factor = 1;
  const std::size_t h = 4, t = 6;
  DeformAttnParams p = DeformAttnParams::init(cfg, h, t, "d", rng);
  zero_offset_weights(p);  // bias table is already zero-initialized

  const Tensor x = random_map(4, h, t, rng);
  Tensor tokens({h * t, 4});
  for (std::size_t ch = 0; ch < 4; ++ch)
    for (std::size_t i = 0; i < h * t; ++i) tokens.at2(i, ch) = x.data[ch * h * t + i];

  Tape tape;
  Ctx ctx(tape);
  Var out = deform_attention(ctx, tape.input(x), cfg, p);

  // Independent serial oracle.
  const Tensor want_tokens =
      reference::mhsa(tokens, p.wq.value, p.wk.value, p.wv.value, p.wo.value, cfg.heads);
  CHECK(max_abs_diff(tape.value(out), map_from_tokens(want_tokens, h, t)) < 1e-10);

  // Same-artifact vanilla attention route.
  MhsaParams mp;
  mp.wq = Parameter("m.wq", p.wq.value);
  mp.wk = Parameter("m.wk", p.wk.value);
  mp.wv = Parameter("m.wv", p.wv.value);
  mp.wo = Parameter("m.wo", p.wo.value);
  Tape tape2;
  Ctx ctx2(tape2);
  Var vanilla = mhsa(ctx2, tape2.input(tokens), cfg.heads, mp);
  CHECK(max_abs_diff(tape.value(out), map_from_tokens(tape2.value(vanilla), h, t)) < 1e-10);
}

TEST_CASE("attention rows sum to one and key count is the grid size") {
  Rng rng(20);
  DeformAttnConfig cfg;
  cfg.channels = 4;
  cfg.heads = 2;
  cfg.groups = 2;
  cfg.grid_factor = 2;
  const std::size_t h = 8, t = 8;
  DeformAttnParams p = DeformAttnParams::init(cfg, h, t, "d", rng);

  Tape tape;
  Ctx ctx(tape);
  DeformAttnTrace trace;
  deform_attention(ctx, tape.input(random_map(4, h, t, rng)), cfg, p, &trace);

  REQUIRE(trace.head_probs.size() == cfg.heads);
  for (const Tensor& probs : trace.head_probs) {
    CHECK(probs.shape[1] == (h / 2) * (t / 2));  // h_G * T_G keys per group
    for (std::size_t i = 0; i < probs.shape[0]; ++i) {
      double sum = 0.0;
      for (std::size_t j = 0; j < probs.shape[1]; ++j) sum += probs.at2(i, j);
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
  CHECK(trace.sample_points.shape[0] == cfg.groups);
  CHECK(trace.sample_points.shape[1] == (h / 2) * (t / 2));
}

TEST_CASE("deformable attention gradients flow through the sampling path") {
  Rng rng(21);
  DeformAttnConfig cfg;
  cfg.channels = 1;
  cfg.heads = 1;
  cfg.groups = 1;
  cfg.grid_factor = 2;
  const std::size_t h = 8, t = 8;
  DeformAttnParams p = DeformAttnParams::init(cfg, h, t, "d", rng);
  for (double& v : p.bias_table.value.data) v = rng.uniform(-0.3, 0.3);
  const Tensor x = random_map(1, h, t, rng);
  const Tensor probe = random_map(1, h, t, rng);

  const double err = grad_check_params(
      [&](Tape& tp) {
        Ctx ctx(tp);
        Var out = deform_attention(ctx, tp.input(x), cfg, p);
        return tp.sum(tp.mul(out, tp.constant(probe)));
      },
      p.all(), 1e-5);
  CHECK(err < 1e-4);

  // The offset convs specifically must receive signal through the sampler.
  Tape tp;
  Ctx ctx(tp);
  Var out = deform_attention(ctx, tp.input(x), cfg, p);
  tp.backward(tp.sum(tp.mul(out, tp.constant(probe))));
  double dw_norm = 0.0;
  for (double g : p.off_dw.value.grad) dw_norm += g * g;
  CHECK(dw_norm > 0.0);
}

TEST_CASE("offset csv dump shape") {
  Rng rng(22);
  DeformAttnConfig cfg;
  cfg.channels = 2;
  cfg.heads = 2;
  cfg.groups = 1;
  cfg.grid_factor = 2;
  DeformAttnParams p = DeformAttnParams::init(cfg, 4, 4, "d", rng);
  Tape tape;
  Ctx ctx(tape);
  DeformAttnTrace trace;
  deform_attention(ctx, tape.input(random_map(2, 4, 4, rng)), cfg, p, &trace);
  std::ostringstream os;
  dump_offsets_csv(trace, os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "group,gi,gj,ref_y,ref_x,dy,dx");
  std::size_t rows = 0;
  while (std::getline(is, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);  // 1 group x 2x2 grid
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "audeform/backbone.hpp"
#include "audeform/error.hpp"
#include "audeform/reference.hpp"

using namespace audeform;

namespace {

Tensor random_map(std::size_t c, std::size_t h, std::size_t w, Rng& rng) {
  return Tensor::uniform({c, h, w}, -1.0, 1.0, rng);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape == b.shape);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

// Two-stage toy model small enough for finite differences.
ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.input_h = 8;
  cfg.input_t = 8;
  cfg.patch = 2;
  cfg.patch_stride = 2;
  StageSpec s0;
  s0.depth = 1;
  s0.channels = 8;
  s0.heads = 2;
  s0.kind = BlockKind::vanilla;
  StageSpec s1 = s0;
  s1.kind = BlockKind::deformable;
  s1.deform.groups = 1;
  s1.deform.grid_factor = 2;
  cfg.stages = {s0, s1};
  cfg.num_classes = 4;
  return cfg;
}

}  // namespace

TEST_CASE("patch embedding shape contract") {
  Rng rng(31);
  Tape tape;
  // 128x1024 spectrogram, 4x4 stride 4 -> 32x256 token map.
  Var x = tape.constant(Tensor::zeros({1, 128, 1024}));
  Var k = tape.constant(Tensor::uniform({16, 1, 4, 4}, -0.1, 0.1, rng));
  Var b = tape.constant(Tensor::uniform({16}, -0.5, 0.5, rng));
  Var out = tape.conv2d(x, k, b, 4, 0, 1);
  CHECK(tape.value(out).shape == std::vector<std::size_t>{16, 32, 256});

  // Zero input: every output pixel equals the channel bias.
  const Tensor& o = tape.value(out);
  const Tensor& bias = tape.value(b);
  for (std::size_t c = 0; c < 16; ++c)
    CHECK(o.at3(c, 7, 100) == bias.data[c]);

  // 1x4x4 input with a 2x2 stride-2 patch gives a 2x2 map.
  Var small = tape.conv2d(tape.constant(Tensor::zeros({1, 4, 4})),
                          tape.constant(Tensor::zeros({3, 1, 2, 2})), Var{}, 2, 0, 1);
  CHECK(tape.value(small).shape == std::vector<std::size_t>{3, 2, 2});
}

TEST_CASE("vanilla block with zero weights is the identity") {
  Rng rng(32);
  BlockParams p = BlockParams::init(BlockKind::vanilla, 4, 2, 3, 3, {}, "blk", rng);
  for (Parameter* q : p.all())
    for (double& v : q->value.data) v = 0.0;
  const Tensor tokens = Tensor::uniform({9, 4}, -1.0, 1.0, rng);
  Tape tape;
  Ctx ctx(tape);
  Var out = transformer_block(ctx, tape.input(tokens), 3, 3, p);
  CHECK(tape.value(out).data == tokens.data);
}

TEST_CASE("single token block: softmax of one key is exact") {
  Rng rng(33);
  BlockParams p = BlockParams::init(BlockKind::vanilla, 4, 2, 1, 1, {}, "blk", rng);
  const Tensor tokens = Tensor::uniform({1, 4}, -1.0, 1.0, rng);
  Tape tape;
  Ctx ctx(tape);
  Var out = transformer_block(ctx, tape.input(tokens), 1, 1, p);
  // Attention over a single token is v W_o regardless of q/k.
  const Tensor ln = reference::layer_norm(tokens, p.ln1_g.value, p.ln1_b.value, 1e-5);
  const Tensor v = reference::matmul(ln, p.attn.wv.value);
  const Tensor att = reference::matmul(v, p.attn.wo.value);
  Tensor x1 = tokens;
  for (std::size_t i = 0; i < 4; ++i) x1.data[i] += att.data[i];
  const Tensor ln2 = reference::layer_norm(x1, p.ln2_g.value, p.ln2_b.value, 1e-5);
  Tensor hid = reference::matmul(ln2, p.mlp.w1.value);
  for (std::size_t i = 0; i < hid.numel(); ++i)
    hid.data[i] = reference::gelu(hid.data[i] + p.mlp.b1.value.data[i]);
  const Tensor mlp = reference::matmul(hid, p.mlp.w2.value);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::fabs(tape.value(out).data[i] -
                    (x1.data[i] + mlp.data[i] + p.mlp.b2.value.data[i])) < 1e-10);
}

TEST_CASE("vanilla block matches a step-by-step serial composition") {
  Rng rng(34);
  const std::size_t h = 4, t = 4, c = 8;
  BlockParams p = BlockParams::init(BlockKind::vanilla, c, 2, h, t, {}, "blk", rng);
  const Tensor tokens = Tensor::uniform({h * t, c}, -1.0, 1.0, rng);

  Tape tape;
  Ctx ctx(tape);
  Var out = transformer_block(ctx, tape.input(tokens), h, t, p);

  const Tensor ln1 = reference::layer_norm(tokens, p.ln1_g.value, p.ln1_b.value, 1e-5);
  const Tensor att = reference::mhsa(ln1, p.attn.wq.value, p.attn.wk.value, p.attn.wv.value,
                                     p.attn.wo.value, 2);
  Tensor x1 = tokens;
  for (std::size_t i = 0; i < x1.numel(); ++i) x1.data[i] += att.data[i];
  const Tensor ln2 = reference::layer_norm(x1, p.ln2_g.value, p.ln2_b.value, 1e-5);
  Tensor hid = reference::matmul(ln2, p.mlp.w1.value);
  for (std::size_t i = 0; i < hid.shape[0]; ++i)
    for (std::size_t j = 0; j < hid.shape[1]; ++j)
      hid.at2(i, j) = reference::gelu(hid.at2(i, j) + p.mlp.b1.value.data[j]);
  const Tensor mlp = reference::matmul(hid, p.mlp.w2.value);
  Tensor want = x1;
  for (std::size_t i = 0; i < want.shape[0]; ++i)
    for (std::size_t j = 0; j < want.shape[1]; ++j)
      want.at2(i, j) += mlp.at2(i, j) + p.mlp.b2.value.data[j];
  CHECK(max_abs_diff(tape.value(out), want) < 1e-10);
}

TEST_CASE("deformable block degenerates to the vanilla block") {
  Rng rng(35);
  const std::size_t h = 4, t = 4, c = 4;
  DeformSettings ds;
  ds.groups = 1;
  ds.grid_factor = 1;  // full-resolution grid
  BlockParams dp = BlockParams::init(BlockKind::deformable, c, 2, h, t, ds, "blk", rng);
  for (Parameter* q : {&dp.dattn.off_dw, &dp.dattn.off_dw_bias, &dp.dattn.off_pw})
    for (double& v : q->value.data) v = 0.0;

  BlockParams vp = BlockParams::init(BlockKind::vanilla, c, 2, h, t, {}, "vblk", rng);
  vp.ln1_g.value = dp.ln1_g.value;
  vp.ln1_b.value = dp.ln1_b.value;
  vp.ln2_g.value = dp.ln2_g.value;
  vp.ln2_b.value = dp.ln2_b.value;
  vp.attn.wq.value = dp.dattn.wq.value;
  vp.attn.wk.value = dp.dattn.wk.value;
  vp.attn.wv.value = dp.dattn.wv.value;
  vp.attn.wo.value = dp.dattn.wo.value;
  vp.mlp.w1.value = dp.mlp.w1.value;
  vp.mlp.b1.value = dp.mlp.b1.value;
  vp.mlp.w2.value = dp.mlp.w2.value;
  vp.mlp.b2.value = dp.mlp.b2.value;

  const Tensor tokens = Tensor::uniform({h * t, c}, -1.0, 1.0, rng);
  Tape t1, t2;
  Ctx c1(t1), c2(t2);
  Var a = transformer_block(c1, t1.input(tokens), h, t, dp);
  Var b = transformer_block(c2, t2.input(tokens), h, t, vp);
  CHECK(max_abs_diff(t1.value(a), t2.value(b)) < 1e-10);
}

TEST_CASE("forward produces finite logits of the configured size") {
  Rng rng(36);
  ModelConfig cfg = tiny_config();
  Model model(cfg, 123);
  Tape tape;
  Ctx ctx(tape);
  Model::Logits out = model.forward(ctx, random_map(1, 8, 8, rng));
  CHECK(tape.value(out.primary).numel() == 4);
  CHECK(tape.value(out.primary).all_finite());
  CHECK_FALSE(out.secondary.valid());
}

TEST_CASE("dual-head forward emits verb and noun vectors") {
  Rng rng(37);
  ModelConfig cfg = tiny_config();
  cfg.dual_head = true;
  cfg.num_verbs = 97;
  cfg.num_nouns = 293;
  Model model(cfg, 7);
  Tape tape;
  Ctx ctx(tape);
  Model::Logits out = model.forward(ctx, random_map(1, 8, 8, rng));
  CHECK(tape.value(out.primary).numel() == 97);
  CHECK(tape.value(out.secondary).numel() == 293);
}

TEST_CASE("permuting head rows permutes logits identically") {
  Rng rng(38);
  ModelConfig cfg = tiny_config();
  Model model(cfg, 99);
  const Tensor x = random_map(1, 8, 8, rng);

  Tape t1;
  Ctx c1(t1);
  const Tensor base = t1.value(model.forward(c1, x).primary);

  // Swap classes 0 and 2 in the head.
  Parameter* hw = nullptr;
  Parameter* hb = nullptr;
  for (Parameter* p : model.parameters()) {
    if (p->name == "head.weight") hw = p;
    if (p->name == "head.bias") hb = p;
  }
  REQUIRE(hw != nullptr);
  for (std::size_t r = 0; r < hw->value.shape[0]; ++r)
    std::swap(hw->value.at2(r, 0), hw->value.at2(r, 2));
  std::swap(hb->value.data[0], hb->value.data[2]);

  Tape t2;
  Ctx c2(t2);
  const Tensor swapped = t2.value(model.forward(c2, x).primary);
  CHECK(swapped.data[0] == base.data[2]);
  CHECK(swapped.data[2] == base.data[0]);
  CHECK(swapped.data[1] == base.data[1]);
  CHECK(swapped.data[3] == base.data[3]);
}

TEST_CASE("zero-weight model is constant in its input") {
  Rng rng(39);
  ModelConfig cfg = tiny_config();
  Model model(cfg, 5);
  for (Parameter* p : model.parameters())
    for (double& v : p->value.data) v = 0.0;
  Tape t1, t2;
  Ctx c1(t1), c2(t2);
  const Tensor a = t1.value(model.forward(c1, random_map(1, 8, 8, rng)).primary);
  const Tensor b = t2.value(model.forward(c2, random_map(1, 8, 8, rng)).primary);
  CHECK(a.data == b.data);
  for (double v : a.data) CHECK(v == 0.0);  // passthrough to the zero head bias
}

TEST_CASE("stage extents halve exactly when merge is set") {
  ModelConfig cfg = ModelConfig::desk_default();
  cfg.validate();
  auto [h0, t0] = cfg.stage_extents(0);
  CHECK(h0 == 8);
  CHECK(t0 == 16);
  auto [h1, t1] = cfg.stage_extents(1);  // merge entering stage 1
  CHECK(h1 == 4);
  CHECK(t1 == 8);
  auto [h2, t2] = cfg.stage_extents(2);  // no merge entering stage 2
  CHECK(h2 == 4);
  CHECK(t2 == 8);
  auto [h3, t3] = cfg.stage_extents(3);
  CHECK(h3 == 2);
  CHECK(t3 == 4);

  ModelConfig no_merge = cfg;
  for (StageSpec& st : no_merge.stages) st.merge = false;
  auto [ha, ta] = no_merge.stage_extents(3);
  CHECK(ha == 8);
  CHECK(ta == 16);
}

TEST_CASE("end-to-end gradient check on the two-block toy model") {
  ModelConfig cfg = tiny_config();
  Model model(cfg, 2024);
  Rng rng(40);
  const Tensor x = random_map(1, 8, 8, rng);
  const std::size_t label = 2;
  const double err = grad_check_params(
      [&](Tape& tp) {
        Ctx ctx(tp);
        return tp.cross_entropy(model.forward(ctx, x).primary, label);
      },
      model.parameters(), 1e-5);
  CHECK(err < 1e-4);
}

TEST_CASE("analytic MAC count equals the recorded tape tally") {
  Rng rng(41);
  std::vector<ModelConfig> configs;
  configs.push_back(tiny_config());
  {
    ModelConfig c2 = tiny_config();
    c2.stages[1].merge = true;
    c2.stages[1].channels = 16;
    c2.stages[1].heads = 4;
    c2.stages[1].deform.grid_factor = 1;
    configs.push_back(c2);
  }
  {
    ModelConfig c3 = ModelConfig::desk_default();
    c3.adaptor.mode = AdaptorMode::learned;
    c3.input_h = 32;
    c3.input_t = 32;
    configs.push_back(c3);
  }
  for (ModelConfig& cfg : configs) {
    Model model(cfg, 1);
    Tape tape;
    Ctx ctx(tape);
    model.forward(ctx, random_map(cfg.in_channels, cfg.input_h, cfg.input_t, rng));
    const MacBreakdown mb = count_macs(cfg);
    CHECK(mb.total == tape.macs());
  }
}

TEST_CASE("MAC count is strictly monotone in depth, width, and input size") {
  ModelConfig base = tiny_config();
  const std::uint64_t t0 = count_macs(base).total;

  ModelConfig deeper = base;
  deeper.stages[0].depth += 1;
  CHECK(count_macs(deeper).total > t0);

  ModelConfig wider = base;
  wider.stages[1].channels *= 2;
  CHECK(count_macs(wider).total > t0);

  ModelConfig bigger = base;
  bigger.input_h *= 2;
  bigger.input_t *= 2;
  CHECK(count_macs(bigger).total > t0);

  // Additive over stages: totals equal the sum of the per-layer entries.
  const MacBreakdown mb = count_macs(base);
  std::uint64_t sum = 0;
  for (const auto& [name, macs] : mb.layers) sum += macs;
  CHECK(sum == mb.total);
}

TEST_CASE("config validation rejects bad geometry") {
  ModelConfig cfg = tiny_config();
  cfg.input_h = 9;  // not divisible by the patch stride
  CHECK_THROWS_AS(cfg.validate(), Error);

  ModelConfig cfg2 = tiny_config();
  cfg2.stages[1].deform.grid_factor = 3;  // does not divide 4x4
  CHECK_THROWS_AS(cfg2.validate(), Error);

  ModelConfig cfg3 = tiny_config();
  cfg3.stages[0].heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg3.validate(), Error);
}

#include "audeform/audit.hpp"

#include "audeform/backbone.hpp"
#include "audeform/error.hpp"

namespace audeform {

std::vector<AuditResult> run_gradient_audit(std::size_t size, std::uint64_t seed) {
  // The two-block model halves the map once and then needs grid factor 2.
  require(size >= 4 && size % 4 == 0, Err::BadConfig,
          "audit size must be a positive multiple of 4");
  const double eps = 1e-5;
  Rng rng(seed);
  std::vector<AuditResult> results;

  {
    AdaptorParams p = AdaptorParams::init(1, 5, 0.005, "audit.adaptor");
    for (double& v : p.weight.value.data) v = rng.uniform(-0.5, 0.5);
    for (double& v : p.bias.value.data) v = rng.uniform(-0.5, 0.5);
    const Tensor x = Tensor::uniform({1, size, size}, -1.0, 1.0, rng);
    const Tensor probe = Tensor::uniform({1, size, size}, -1.0, 1.0, rng);
    const double err = grad_check_params(
        [&](Tape& t) {
          Ctx ctx(t);
          return t.sum(t.mul(adapt(ctx, t.input(x), p), t.constant(probe)));
        },
        p.all(), eps);
    results.push_back({"adaptor", err});
  }

  DeformAttnConfig dcfg;
  dcfg.channels = 8;
  dcfg.heads = 2;
  dcfg.groups = 1;
  dcfg.grid_factor = 2;

  {
    DeformAttnParams p = DeformAttnParams::init(dcfg, size, size, "audit.aog", rng);
    const Tensor q_map = Tensor::uniform({8, size, size}, -1.0, 1.0, rng);
    const std::size_t kn = (size / 2) * (size / 2);
    const Tensor probe = Tensor::uniform({2, kn}, -1.0, 1.0, rng);
    std::vector<Parameter*> aog_params = {&p.off_dw, &p.off_dw_bias, &p.off_pw};
    const double err = grad_check_params(
        [&](Tape& t) {
          Ctx ctx(t);
          Var off = audio_offset_generator(ctx, t.input(q_map), dcfg, p);
          return t.sum(t.mul(off, t.constant(probe)));
        },
        aog_params, eps);
    results.push_back({"offset_generator", err});
  }

  {
    BlockParams p = BlockParams::init(BlockKind::deformable, 8, 2, size, size,
                                      {1, 2, 2.0, 4}, "audit.dblock", rng);
    for (double& v : p.dattn.bias_table.value.data) v = rng.uniform(-0.3, 0.3);
    const Tensor tokens = Tensor::uniform({size * size, 8}, -1.0, 1.0, rng);
    const Tensor probe = Tensor::uniform({size * size, 8}, -1.0, 1.0, rng);
    const double err = grad_check_params(
        [&](Tape& t) {
          Ctx ctx(t);
          Var out = transformer_block(ctx, t.input(tokens), size, size, p);
          return t.sum(t.mul(out, t.constant(probe)));
        },
        p.all(), eps);
    results.push_back({"deformable_block", err});
  }

  {
    BlockParams p =
        BlockParams::init(BlockKind::vanilla, 8, 2, size, size, {}, "audit.vblock", rng);
    const Tensor tokens = Tensor::uniform({size * size, 8}, -1.0, 1.0, rng);
    const Tensor probe = Tensor::uniform({size * size, 8}, -1.0, 1.0, rng);
    const double err = grad_check_params(
        [&](Tape& t) {
          Ctx ctx(t);
          Var out = transformer_block(ctx, t.input(tokens), size, size, p);
          return t.sum(t.mul(out, t.constant(probe)));
        },
        p.all(), eps);
    results.push_back({"vanilla_block", err});
  }

  {
    ModelConfig cfg;
    cfg.input_h = size;
    cfg.input_t = size;
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
    Model model(cfg, seed);
    const Tensor x = Tensor::uniform({1, size, size}, -1.0, 1.0, rng);
    const double err = grad_check_params(
        [&](Tape& t) {
          Ctx ctx(t);
          return t.cross_entropy(model.forward(ctx, x).primary, 1);
        },
        model.parameters(), eps);
    results.push_back({"full_model", err});
  }

  return results;
}

}  // namespace audeform

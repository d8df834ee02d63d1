#include "audeform/backbone.hpp"

#include <cmath>
#include <sstream>

#include "audeform/error.hpp"

namespace audeform {

BlockKind block_kind_from(const std::string& s) {
  if (s == "vanilla") return BlockKind::vanilla;
  if (s == "deformable") return BlockKind::deformable;
  fail(Err::BadConfig, "unknown block kind '" + s + "'");
}

const char* block_kind_name(BlockKind k) {
  return k == BlockKind::vanilla ? "vanilla" : "deformable";
}

ModelConfig ModelConfig::desk_default() {
  ModelConfig cfg;
  cfg.input_h = 32;
  cfg.input_t = 64;
  cfg.patch = 4;
  cfg.patch_stride = 4;
  const std::size_t depths[4] = {1, 1, 2, 1};
  const std::size_t channels[4] = {16, 32, 64, 128};
  const std::size_t heads[4] = {1, 2, 4, 8};
  const bool merges[4] = {false, true, false, true};
  for (int s = 0; s < 4; ++s) {
    StageSpec st;
    st.depth = depths[s];
    st.channels = channels[s];
    st.heads = heads[s];
    st.kind = (s >= 2) ? BlockKind::deformable : BlockKind::vanilla;
    st.merge = merges[s];
    cfg.stages.push_back(st);
  }
  return cfg;
}

void ModelConfig::validate() const {
  require(!stages.empty(), Err::BadConfig, "model needs at least one stage");
  require(patch >= 1 && patch_stride >= 1, Err::BadConfig, "bad patch geometry");
  require(input_h >= patch && input_t >= patch, Err::ConfigMismatch,
          "input smaller than the embed patch");
  require((input_h - patch) % patch_stride == 0 && (input_t - patch) % patch_stride == 0,
          Err::ConfigMismatch, "input extents not divisible by the patch stride");
  std::size_t h = (input_h - patch) / patch_stride + 1;
  std::size_t t = (input_t - patch) / patch_stride + 1;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    require(st.depth >= 1, Err::BadConfig, "stage depth must be >= 1");
    require(st.channels % st.heads == 0, Err::BadConfig,
            "stage " + std::to_string(s) + ": channels not divisible by heads");
    if (st.merge) {
      require(s > 0, Err::BadConfig, "stage 0 cannot merge");
      require(h % 2 == 0 && t % 2 == 0, Err::ConfigMismatch,
              "stage " + std::to_string(s) + ": extents not divisible by merge");
      h /= 2;
      t /= 2;
    }
    if (st.kind == BlockKind::deformable) {
      const std::size_t r = st.deform.grid_factor;
      require(r >= 1 && h % r == 0 && t % r == 0, Err::BadFactor,
              "stage " + std::to_string(s) + ": grid factor does not divide " +
                  std::to_string(h) + "x" + std::to_string(t));
    }
  }
  if (dual_head)
    require(num_verbs >= 1 && num_nouns >= 1, Err::BadConfig, "dual head class counts");
  else
    require(num_classes >= 1, Err::BadConfig, "num_classes must be >= 1");
}

std::pair<std::size_t, std::size_t> ModelConfig::stage_extents(std::size_t s) const {
  std::size_t h = (input_h - patch) / patch_stride + 1;
  std::size_t t = (input_t - patch) / patch_stride + 1;
  for (std::size_t i = 0; i <= s && i < stages.size(); ++i)
    if (stages[i].merge) {
      h /= 2;
      t /= 2;
    }
  return {h, t};
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "model.in_channels = " << in_channels << "\n";
  os << "model.input_h = " << input_h << "\n";
  os << "model.input_t = " << input_t << "\n";
  os << "model.patch = " << patch << "\n";
  os << "model.patch_stride = " << patch_stride << "\n";
  os << "model.num_stages = " << stages.size() << "\n";
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const StageSpec& st = stages[s];
    const std::string p = "model.stages." + std::to_string(s) + ".";
    os << p << "depth = " << st.depth << "\n";
    os << p << "channels = " << st.channels << "\n";
    os << p << "heads = " << st.heads << "\n";
    os << p << "kind = " << block_kind_name(st.kind) << "\n";
    os << p << "merge = " << (st.merge ? 1 : 0) << "\n";
    os << p << "groups = " << st.deform.groups << "\n";
    os << p << "r = " << st.deform.grid_factor << "\n";
    os << p << "offset_scale = " << st.deform.offset_scale << "\n";
    os << p << "offset_stride = " << st.deform.offset_stride << "\n";
  }
  os << "model.dual_head = " << (dual_head ? 1 : 0) << "\n";
  os << "model.num_classes = " << num_classes << "\n";
  os << "model.num_verbs = " << num_verbs << "\n";
  os << "model.num_nouns = " << num_nouns << "\n";
  os << "adaptor.mode = " << adaptor_mode_name(adaptor.mode) << "\n";
  os << "adaptor.lambda = " << adaptor.lambda << "\n";
  os << "adaptor.kernel = " << adaptor.kernel << "\n";
  os << "adaptor.noise_scale = " << adaptor.noise_scale << "\n";
  return os.str();
}

std::uint64_t ModelConfig::hash() const {
  // FNV-1a over the canonical serialization.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

MlpParams MlpParams::init(std::size_t channels, std::size_t hidden, const std::string& prefix,
                          Rng& rng) {
  MlpParams p;
  const double b1 = 1.0 / std::sqrt(static_cast<double>(channels));
  const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.w1 = Parameter(prefix + ".w1", Tensor::uniform({channels, hidden}, -b1, b1, rng));
  p.b1 = Parameter(prefix + ".b1", Tensor::zeros({hidden}));
  p.w2 = Parameter(prefix + ".w2", Tensor::uniform({hidden, channels}, -b2, b2, rng));
  p.b2 = Parameter(prefix + ".b2", Tensor::zeros({channels}));
  return p;
}

std::vector<Parameter*> MlpParams::all() { return {&w1, &b1, &w2, &b2}; }

BlockParams BlockParams::init(BlockKind kind, std::size_t channels, std::size_t heads,
                              std::size_t h, std::size_t t, const DeformSettings& ds,
                              const std::string& prefix, Rng& rng) {
  BlockParams p;
  p.kind = kind;
  p.heads = heads;
  p.ln1_g = Parameter(prefix + ".ln1.gamma", Tensor::full({channels}, 1.0));
  p.ln1_b = Parameter(prefix + ".ln1.beta", Tensor::zeros({channels}));
  p.ln2_g = Parameter(prefix + ".ln2.gamma", Tensor::full({channels}, 1.0));
  p.ln2_b = Parameter(prefix + ".ln2.beta", Tensor::zeros({channels}));
  if (kind == BlockKind::deformable) {
    p.deform_cfg.channels = channels;
    p.deform_cfg.heads = heads;
    p.deform_cfg.groups = ds.groups ? ds.groups : std::max<std::size_t>(1, heads / 2);
    p.deform_cfg.grid_factor = ds.grid_factor;
    p.deform_cfg.offset_scale = ds.offset_scale;
    p.deform_cfg.offset_stride = ds.offset_stride;
    p.dattn = DeformAttnParams::init(p.deform_cfg, h, t, prefix + ".attn", rng);
  } else {
    p.attn = MhsaParams::init(channels, prefix + ".attn", rng);
  }
  p.mlp = MlpParams::init(channels, 4 * channels, prefix + ".mlp", rng);
  return p;
}

std::vector<Parameter*> BlockParams::all() {
  std::vector<Parameter*> out = {&ln1_g, &ln1_b, &ln2_g, &ln2_b};
  const std::vector<Parameter*> att =
      (kind == BlockKind::deformable) ? dattn.all() : attn.all();
  out.insert(out.end(), att.begin(), att.end());
  const std::vector<Parameter*> ml = mlp.all();
  out.insert(out.end(), ml.begin(), ml.end());
  return out;
}

Var transformer_block(Ctx& ctx, Var tokens, std::size_t h, std::size_t t, BlockParams& params,
                      DeformAttnTrace* trace) {
  Tape& tp = ctx.tape;
  Var normed = tp.layer_norm(tokens, ctx.use(params.ln1_g), ctx.use(params.ln1_b));
  Var attn_out;
  if (params.kind == BlockKind::deformable) {
    Var mixed = deform_attention(ctx, tp.to_map(normed, h, t), params.deform_cfg,
                                 params.dattn, trace);
    attn_out = tp.to_tokens(mixed);
  } else {
    attn_out = mhsa(ctx, normed, params.heads, params.attn);
  }
  Var x1 = tp.add(tokens, attn_out);

  Var normed2 = tp.layer_norm(x1, ctx.use(params.ln2_g), ctx.use(params.ln2_b));
  Var hidden = tp.gelu(
      tp.add_rowvec(tp.matmul(normed2, ctx.use(params.mlp.w1)), ctx.use(params.mlp.b1)));
  Var mlp_out = tp.add_rowvec(tp.matmul(hidden, ctx.use(params.mlp.w2)), ctx.use(params.mlp.b2));
  return tp.add(x1, mlp_out);
}

Model::Model(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(seed);
  adaptor_ = AdaptorParams::init(cfg_.in_channels, cfg_.adaptor.kernel, cfg_.adaptor.lambda,
                                 "adaptor");

  const std::size_t c0 = cfg_.stages[0].channels;
  const double pb = 1.0 / std::sqrt(static_cast<double>(cfg_.in_channels) * cfg_.patch *
                                    cfg_.patch);
  patch_w = Parameter("patch_embed.weight",
                      Tensor::uniform({c0, cfg_.in_channels, cfg_.patch, cfg_.patch}, -pb, pb,
                                      rng));
  patch_b = Parameter("patch_embed.bias", Tensor::zeros({c0}));

  std::size_t prev_c = c0;
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    const StageSpec& st = cfg_.stages[s];
    const auto [h, t] = cfg_.stage_extents(s);
    StageParams sp;
    const std::string sname = "stage" + std::to_string(s);
    if (st.merge) {
      sp.has_merge = true;
      const double mb = 1.0 / std::sqrt(static_cast<double>(prev_c) * 4.0);
      sp.merge_w = Parameter(sname + ".merge.weight",
                             Tensor::uniform({st.channels, prev_c, 2, 2}, -mb, mb, rng));
      sp.merge_b = Parameter(sname + ".merge.bias", Tensor::zeros({st.channels}));
    } else if (st.channels != prev_c) {
      sp.has_proj = true;
      const double mb = 1.0 / std::sqrt(static_cast<double>(prev_c));
      sp.merge_w = Parameter(sname + ".proj.weight",
                             Tensor::uniform({st.channels, prev_c, 1, 1}, -mb, mb, rng));
      sp.merge_b = Parameter(sname + ".proj.bias", Tensor::zeros({st.channels}));
    }
    for (std::size_t b = 0; b < st.depth; ++b)
      sp.blocks.push_back(BlockParams::init(st.kind, st.channels, st.heads, h, t, st.deform,
                                            sname + ".block" + std::to_string(b), rng));
    stages_.push_back(std::move(sp));
    prev_c = st.channels;
  }

  const std::size_t cl = cfg_.last_channels();
  const double hb = 1.0 / std::sqrt(static_cast<double>(cl));
  if (cfg_.dual_head) {
    head_w = Parameter("head.verb.weight",
                       Tensor::uniform({cl, cfg_.num_verbs}, -hb, hb, rng));
    head_b = Parameter("head.verb.bias", Tensor::zeros({cfg_.num_verbs}));
    head2_w = Parameter("head.noun.weight",
                        Tensor::uniform({cl, cfg_.num_nouns}, -hb, hb, rng));
    head2_b = Parameter("head.noun.bias", Tensor::zeros({cfg_.num_nouns}));
  } else {
    head_w = Parameter("head.weight", Tensor::uniform({cl, cfg_.num_classes}, -hb, hb, rng));
    head_b = Parameter("head.bias", Tensor::zeros({cfg_.num_classes}));
  }
}

Model::Logits Model::forward(Ctx& ctx, const Tensor& input, ModelTrace* trace) {
  require(input.rank() == 3 && input.shape[0] == cfg_.in_channels &&
              input.shape[1] == cfg_.input_h && input.shape[2] == cfg_.input_t,
          Err::ConfigMismatch,
          "model expects [" + std::to_string(cfg_.in_channels) + "," +
              std::to_string(cfg_.input_h) + "," + std::to_string(cfg_.input_t) + "], got " +
              shape_str(input.shape));
  Tape& tp = ctx.tape;
  Var x = tp.input(input, false);
  if (cfg_.adaptor.mode == AdaptorMode::learned) x = adapt(ctx, x, adaptor_);

  x = tp.conv2d(x, ctx.use(patch_w), ctx.use(patch_b), cfg_.patch_stride, 0, 1);
  Var tokens;
  bool have_tokens = false;
  for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
    StageParams& sp = stages_[s];
    const auto [h, t] = cfg_.stage_extents(s);
    if (sp.has_merge || sp.has_proj) {
      if (have_tokens) {
        const auto [ph, pt] = cfg_.stage_extents(s - 1);
        x = tp.to_map(tokens, ph, pt);
      }
      x = tp.conv2d(x, ctx.use(sp.merge_w), ctx.use(sp.merge_b), sp.has_merge ? 2 : 1, 0, 1);
      have_tokens = false;
    }
    if (!have_tokens) {
      tokens = tp.to_tokens(x);
      have_tokens = true;
    }
    for (std::size_t b = 0; b < sp.blocks.size(); ++b) {
      DeformAttnTrace* bt = nullptr;
      if (trace && sp.blocks[b].kind == BlockKind::deformable) {
        trace->deform_blocks.push_back({s, b, {}});
        bt = &trace->deform_blocks.back().attn;
      }
      tokens = transformer_block(ctx, tokens, h, t, sp.blocks[b], bt);
    }
  }

  Var pooled = tp.mean_rows(tokens);
  Logits out;
  out.primary = tp.add_rowvec(tp.matmul(pooled, ctx.use(head_w)), ctx.use(head_b));
  if (cfg_.dual_head)
    out.secondary = tp.add_rowvec(tp.matmul(pooled, ctx.use(head2_w)), ctx.use(head2_b));
  return out;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (cfg_.adaptor.mode == AdaptorMode::learned)
    for (Parameter* p : adaptor_.all()) out.push_back(p);
  out.push_back(&patch_w);
  out.push_back(&patch_b);
  for (StageParams& sp : stages_) {
    if (sp.has_merge || sp.has_proj) {
      out.push_back(&sp.merge_w);
      out.push_back(&sp.merge_b);
    }
    for (BlockParams& bp : sp.blocks)
      for (Parameter* p : bp.all()) out.push_back(p);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  if (cfg_.dual_head) {
    out.push_back(&head2_w);
    out.push_back(&head2_b);
  }
  return out;
}

void MacBreakdown::add(std::string name, std::uint64_t macs) {
  layers.emplace_back(std::move(name), macs);
  total += macs;
}

namespace {

std::uint64_t conv_macs(std::size_t c_out, std::size_t c_in_per_group, std::size_t kh,
                        std::size_t kw, std::size_t ho, std::size_t wo) {
  return static_cast<std::uint64_t>(c_out) * c_in_per_group * kh * kw * ho * wo;
}

}  // namespace

MacBreakdown count_macs(const ModelConfig& cfg) {
  cfg.validate();
  MacBreakdown mb;
  const std::size_t h0 = cfg.input_h, t0 = cfg.input_t;
  if (cfg.adaptor.mode == AdaptorMode::learned && cfg.adaptor.lambda != 0.0)
    mb.add("adaptor",
           conv_macs(cfg.in_channels, cfg.in_channels, cfg.adaptor.kernel, cfg.adaptor.kernel,
                     h0, t0));

  std::size_t h = (h0 - cfg.patch) / cfg.patch_stride + 1;
  std::size_t t = (t0 - cfg.patch) / cfg.patch_stride + 1;
  mb.add("patch_embed",
         conv_macs(cfg.stages[0].channels, cfg.in_channels, cfg.patch, cfg.patch, h, t));

  std::size_t prev_c = cfg.stages[0].channels;
  for (std::size_t s = 0; s < cfg.stages.size(); ++s) {
    const StageSpec& st = cfg.stages[s];
    const std::string sname = "stage" + std::to_string(s);
    if (st.merge) {
      h /= 2;
      t /= 2;
      mb.add(sname + ".merge", conv_macs(st.channels, prev_c, 2, 2, h, t));
    } else if (st.channels != prev_c) {
      mb.add(sname + ".proj", conv_macs(st.channels, prev_c, 1, 1, h, t));
    }
    const std::uint64_t n = static_cast<std::uint64_t>(h) * t;
    const std::uint64_t c = st.channels;
    for (std::size_t b = 0; b < st.depth; ++b) {
      const std::string bname = sname + ".block" + std::to_string(b);
      if (st.kind == BlockKind::vanilla) {
        mb.add(bname + ".attn", 4 * n * c * c + 2 * n * n * c);
      } else {
        const std::size_t groups =
            st.deform.groups ? st.deform.groups : std::max<std::size_t>(1, st.heads / 2);
        const std::size_t r = st.deform.grid_factor;
        const std::uint64_t kn = (h / r) * (t / r);
        const std::size_t hs = (h + 4 - 5) / st.deform.offset_stride + 1;
        const std::size_t ts = (t + 4 - 5) / st.deform.offset_stride + 1;
        std::uint64_t attn = n * c * c;                      // q projection
        attn += conv_macs(c, 1, 5, 5, hs, ts);               // depthwise offset conv
        attn += conv_macs(2 * groups, c, 1, 1, hs, ts);      // pointwise offset conv
        attn += static_cast<std::uint64_t>(groups) * 2 * kn * c * c;  // k, v per group
        attn += 2 * n * kn * c;                              // logits and weighted values
        attn += n * c * c;                                   // output projection
        mb.add(bname + ".attn", attn);
      }
      mb.add(bname + ".mlp", 8 * n * c * c);
    }
    prev_c = st.channels;
  }

  const std::uint64_t cl = cfg.last_channels();
  if (cfg.dual_head) {
    mb.add("head.verb", cl * cfg.num_verbs);
    mb.add("head.noun", cl * cfg.num_nouns);
  } else {
    mb.add("head", cl * cfg.num_classes);
  }
  return mb;
}

}  // namespace audeform

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "audeform/adaptor.hpp"
#include "audeform/deform.hpp"
#include "audeform/tape.hpp"

namespace audeform {

enum class BlockKind { vanilla, deformable };

BlockKind block_kind_from(const std::string& s);
const char* block_kind_name(BlockKind k);

struct DeformSettings {
  std::size_t groups = 0;  // 0 -> max(1, heads / 2)
  std::size_t grid_factor = 2;
  double offset_scale = 2.0;
  std::size_t offset_stride = 4;
};

struct StageSpec {
  std::size_t depth = 1;
  std::size_t channels = 16;
  std::size_t heads = 1;
  BlockKind kind = BlockKind::vanilla;
  bool merge = false;  // 2x spatial downsample entering this stage
  DeformSettings deform;
};

struct ModelConfig {
  std::size_t in_channels = 1;
  std::size_t input_h = 32;
  std::size_t input_t = 64;
  std::size_t patch = 2;
  std::size_t patch_stride = 2;
  std::vector<StageSpec> stages;
  bool dual_head = false;
  std::size_t num_classes = 4;
  std::size_t num_verbs = 97;
  std::size_t num_nouns = 293;
  AdaptorConfig adaptor;

  // 4 stages, depths [1,1,2,1], channels [16,32,64,128], heads [1,2,4,8],
  // vanilla early and deformable late, merges between stages.
  static ModelConfig desk_default();
  void validate() const;
  // Token-map extents entering stage s (after patch embed and any merges).
  std::pair<std::size_t, std::size_t> stage_extents(std::size_t s) const;
  std::size_t last_channels() const { return stages.back().channels; }
  // Canonical flat key=value serialization; also what checkpoints embed.
  std::string serialize() const;
  std::uint64_t hash() const;
};

struct MlpParams {
  Parameter w1, b1, w2, b2;
  static MlpParams init(std::size_t channels, std::size_t hidden, const std::string& prefix,
                        Rng& rng);
  std::vector<Parameter*> all();
};

// Pre-norm residual block: x + attn(LN(x)), then + MLP(LN(.)).
struct BlockParams {
  BlockKind kind = BlockKind::vanilla;
  std::size_t heads = 1;
  DeformAttnConfig deform_cfg;
  Parameter ln1_g, ln1_b, ln2_g, ln2_b;
  MhsaParams attn;
  DeformAttnParams dattn;
  MlpParams mlp;

  static BlockParams init(BlockKind kind, std::size_t channels, std::size_t heads,
                          std::size_t h, std::size_t t, const DeformSettings& ds,
                          const std::string& prefix, Rng& rng);
  std::vector<Parameter*> all();
};

Var transformer_block(Ctx& ctx, Var tokens, std::size_t h, std::size_t t, BlockParams& params,
                      DeformAttnTrace* trace = nullptr);

struct ModelTrace {
  struct BlockTrace {
    std::size_t stage = 0, block = 0;
    DeformAttnTrace attn;
  };
  std::vector<BlockTrace> deform_blocks;
};

class Model {
 public:
  Model(ModelConfig cfg, std::uint64_t seed);

  struct Logits {
    Var primary;    // single-head logits, or the verb head
    Var secondary;  // noun head; invalid unless dual_head
  };
  // input is a [in_channels, input_h, input_t] map.
  Logits forward(Ctx& ctx, const Tensor& input, ModelTrace* trace = nullptr);

  std::vector<Parameter*> parameters();
  const ModelConfig& cfg() const { return cfg_; }
  AdaptorParams& adaptor_params() { return adaptor_; }

 private:
  struct StageParams {
    bool has_merge = false;
    bool has_proj = false;
    Parameter merge_w, merge_b;
    std::vector<BlockParams> blocks;
  };

  ModelConfig cfg_;
  AdaptorParams adaptor_;
  Parameter patch_w, patch_b;
  std::vector<StageParams> stages_;
  Parameter head_w, head_b;
  Parameter head2_w, head2_b;
};

// Analytic multiply-accumulate count for one forward pass, broken down per
// layer. Counts conv2d and matmul work only, mirroring Tape::macs().
struct MacBreakdown {
  std::vector<std::pair<std::string, std::uint64_t>> layers;
  std::uint64_t total = 0;
  void add(std::string name, std::uint64_t macs);
};

MacBreakdown count_macs(const ModelConfig& cfg);

}  // namespace audeform

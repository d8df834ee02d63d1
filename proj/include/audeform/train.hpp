#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "audeform/backbone.hpp"
#include "audeform/frontend.hpp"
#include "audeform/synthetic.hpp"

namespace audeform {

struct Sample {
  Tensor input;  // [1, mels, frames], already standardized if configured
  std::size_t label = 0;
  std::size_t verb = 0, noun = 0;
};

struct Dataset {
  std::vector<Sample> items;
  std::size_t num_classes = 0;
  bool dual = false;
  std::size_t num_verbs = 0, num_nouns = 0;
};

struct PipelineConfig {
  FbankConfig fbank;
  std::size_t target_frames = 0;  // crop or floor-pad to this many frames; 0 keeps T
  bool standardize = true;        // per-spectrogram mean 0 / std 1
};

// Spectrogram -> model input map, with frame padding and standardization.
Tensor spec_to_input(const Spectrogram& s, const PipelineConfig& cfg);
Dataset build_dataset(const std::vector<Clip>& clips, const PipelineConfig& cfg,
                      std::size_t num_classes);

struct OptimConfig {
  double lr = 1e-3;  // desk-scale default; full-scale setups use 1e-5
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Decoupled weight decay applied before the moment update, bias-corrected
// first and second moments.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, OptimConfig cfg);
  void step();
  void zero_grad();
  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  OptimConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

struct EvalMetrics {
  double loss = 0.0, top1 = 0.0, top5 = 0.0;
  double verb_top1 = 0.0, noun_top1 = 0.0, action = 0.0;  // dual-head only
};

// Rank by logit, ties broken toward the lower class index; action counts
// samples where both heads are top-1 correct.
EvalMetrics evaluate(Model& model, const Dataset& data);

// true iff label lands in the top k logits under the tie rule above.
bool topk_hit(const std::vector<double>& logits, std::size_t label, std::size_t k);

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  OptimConfig optim;
};

struct EpochRow {
  std::size_t epoch = 0;
  std::string split;
  EvalMetrics m;
};

struct RunMetrics {
  bool dual = false;
  std::vector<EpochRow> rows;
  double final_train_top1() const;
};

// Deterministic under the seed: fixed shuffle order, fixed presentation
// noise. eval may be null (metrics then use the training set).
RunMetrics train(Model& model, const Dataset& train_set, const Dataset* eval_set,
                 const TrainConfig& tc);

void write_metrics_csv(const RunMetrics& rm, const std::string& path);

struct AblationRow {
  std::string label;
  bool has_lambda = false;
  double lambda = 0.0;
  double top1 = 0.0, top5 = 0.0;
  std::uint64_t config_hash = 0;
};

// The six ablation configurations: plain backbone, deformable, deformable
// with Gaussian / Laplacian input noise, and the learned adaptor at lambda
// 0.2 and 0.005. No ordering assertion is made on the resulting accuracies.
std::vector<AblationRow> ablation_suite(const ModelConfig& base, const Dataset& train_set,
                                        const Dataset& eval_set, const TrainConfig& tc);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace audeform

#pragma once

#include <string>
#include <utility>

#include "audeform/train.hpp"

namespace audeform {

// Full experiment description, parsed from flat "key = value" text plus
// per-flag overrides. Unknown keys are rejected with the offending key named.
struct RunConfig {
  ModelConfig model;

  std::string data_kind = "shifted";  // shifted | tones | manifest
  std::string data_manifest;
  std::size_t data_n_per_class = 16;
  double data_sample_rate = 43000.0;
  double data_duration = 0.65;
  double data_eval_fraction = 0.0;  // 0 evaluates on the training set
  PipelineConfig pipeline;

  TrainConfig train_cfg;

  static RunConfig defaults();
  static RunConfig from_file(const std::string& path);

  // Applies one dotted key; throws BadConfig for unknown keys or bad values.
  void apply(const std::string& key, const std::string& value);
  std::string serialize() const;
  void validate() const;
};

// Model-section keys only (shared with checkpoint config parsing); returns
// false when the key does not belong to the model section.
bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value);

ModelConfig parse_model_config(const std::string& text);

// Builds train/eval datasets per the config. Synthetic kinds generate from
// the seed; "manifest" loads spectrogram files listed in a CSV.
std::pair<Dataset, Dataset> build_datasets(const RunConfig& rc, std::uint64_t seed);

// CSV rows "path,label[,verb,noun]"; paths are relative to the manifest.
Dataset load_manifest(const std::string& path, const PipelineConfig& cfg);

}  // namespace audeform

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "audeform/audit.hpp"
#include "audeform/checkpoint.hpp"
#include "audeform/config.hpp"
#include "audeform/error.hpp"
#include "audeform/train.hpp"
#include "audeform/viz.hpp"

using namespace audeform;

namespace {

// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.
int exit_code_for(Err code) {
  switch (code) {
    case Err::IoError:
    case Err::BadMagic:
    case Err::TruncatedFile:
    case Err::TooShort:
    case Err::DataEmpty:
      return 3;
    case Err::NonFiniteInput:
    case Err::NonFiniteCoord:
    case Err::NonFiniteActivation:
      return 4;
    default:
      return 2;
  }
}

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides;
  std::uint64_t seed = 1;
};

RunConfig resolve_config(const CommonOpts& opts) {
  RunConfig rc =
      opts.config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(opts.config_path);
  for (const std::string& kv : opts.overrides) {
    const std::size_t eq = kv.find('=');
    require(eq != std::string::npos, Err::BadConfig, "--set wants key=value, got '" + kv + "'");
    std::string key = kv.substr(0, eq);
    std::string value = kv.substr(eq + 1);
    auto strip = [](std::string& s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.erase(s.begin());
      while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.pop_back();
    };
    strip(key);
    strip(value);
    rc.apply(key, value);
  }
  return rc;
}

void print_eval(const EvalMetrics& em, bool dual) {
  std::printf("loss=%.6f top1=%.4f top5=%.4f", em.loss, em.top1, em.top5);
  if (dual)
    std::printf(" verb_top1=%.4f noun_top1=%.4f action=%.4f", em.verb_top1, em.noun_top1,
                em.action);
  std::printf("\n");
}

Tensor model_input_from_spec_file(const Model& model, const std::string& spec_path) {
  const Spectrogram spec = read_spec(spec_path);
  require(spec.h == model.cfg().input_h, Err::ConfigMismatch,
          "spectrogram has " + std::to_string(spec.h) + " mel bins, model expects " +
              std::to_string(model.cfg().input_h));
  PipelineConfig pc;
  pc.target_frames = model.cfg().input_t;
  pc.standardize = true;
  return spec_to_input(spec, pc);
}

int cmd_extract(const std::string& in, const std::string& out, std::size_t mels,
                std::size_t frame_len, std::size_t shift, double rate) {
  FbankConfig cfg;
  cfg.n_mels = mels;
  cfg.frame_length = frame_len;
  cfg.frame_shift = shift;
  const Waveform w = read_audio_file(in, rate);
  const Spectrogram s = fbank(w, cfg);
  write_spec(s, out);
  std::printf("%zu x %zu\n", s.h, s.T);
  return 0;
}

int cmd_train(const CommonOpts& opts, std::size_t epochs_override, const std::string& out_dir) {
  RunConfig rc = resolve_config(opts);
  if (epochs_override) rc.train_cfg.epochs = epochs_override;
  rc.train_cfg.seed = opts.seed;
  rc.validate();
  std::filesystem::create_directories(out_dir);

  auto [train_ds, eval_ds] = build_datasets(rc, opts.seed);
  Model model(rc.model, opts.seed);
  const RunMetrics rm = train(model, train_ds, &eval_ds, rc.train_cfg);
  const std::string metrics_path = out_dir + "/metrics.csv";
  const std::string ckpt_path = out_dir + "/model.dckp";
  write_metrics_csv(rm, metrics_path);
  save_checkpoint(model, ckpt_path);
  std::printf("trained %zu epochs on %zu clips\n", rc.train_cfg.epochs, train_ds.items.size());
  if (!rm.rows.empty()) {
    std::printf("final train top1=%.4f; wrote %s and %s\n", rm.final_train_top1(),
                metrics_path.c_str(), ckpt_path.c_str());
  }
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& ckpt, const std::string& data) {
  ModelConfig mc = read_checkpoint_config(ckpt);
  Model model(mc, 0);
  load_checkpoint(model, ckpt);

  RunConfig rc = resolve_config(opts);
  rc.model = mc;
  if (!data.empty()) {
    rc.data_kind = "manifest";
    rc.data_manifest = data;
  }
  rc.validate();
  auto [train_ds, eval_ds] = build_datasets(rc, opts.seed);
  const EvalMetrics em = evaluate(model, eval_ds);
  print_eval(em, eval_ds.dual);
  return 0;
}

int cmd_ablate(const CommonOpts& opts, std::size_t epochs_override, const std::string& out_dir) {
  RunConfig rc = resolve_config(opts);
  if (epochs_override) rc.train_cfg.epochs = epochs_override;
  rc.train_cfg.seed = opts.seed;
  rc.validate();
  std::filesystem::create_directories(out_dir);

  auto [train_ds, eval_ds] = build_datasets(rc, opts.seed);
  const std::vector<AblationRow> rows =
      ablation_suite(rc.model, train_ds, eval_ds, rc.train_cfg);
  const std::string csv_path = out_dir + "/ablation.csv";
  write_ablation_csv(rows, csv_path);
  for (const AblationRow& r : rows)
    std::printf("%-32s top1=%.4f top5=%.4f\n", r.label.c_str(), r.top1, r.top5);
  std::printf("wrote %s\n", csv_path.c_str());
  return 0;
}

int cmd_gradcheck(std::size_t size, std::uint64_t seed) {
  const std::vector<AuditResult> results = run_gradient_audit(size, seed);
  bool ok = true;
  for (const AuditResult& r : results) {
    std::printf("%-18s max_rel_err=%.3e\n", r.component.c_str(), r.max_rel_err);
    if (!(r.max_rel_err < 1e-4)) ok = false;
  }
  if (!ok) {
    std::fprintf(stderr, "gradient audit exceeded 1e-4\n");
    return 4;
  }
  return 0;
}

int cmd_viz_offsets(const std::string& ckpt, const std::string& spec_path,
                    const std::string& out, std::size_t block_index) {
  ModelConfig mc = read_checkpoint_config(ckpt);
  Model model(mc, 0);
  load_checkpoint(model, ckpt);
  const Tensor input = model_input_from_spec_file(model, spec_path);

  Tape tape;
  Ctx ctx(tape);
  ModelTrace trace;
  model.forward(ctx, input, &trace);
  require(!trace.deform_blocks.empty(), Err::BadConfig,
          "checkpoint model has no deformable blocks");
  require(block_index < trace.deform_blocks.size(), Err::BadConfig,
          "only " + std::to_string(trace.deform_blocks.size()) + " deformable blocks");
  std::ofstream os(out);
  require(os.good(), Err::IoError, "cannot open " + out + " for writing");
  dump_offsets_csv(trace.deform_blocks[block_index].attn, os);
  std::printf("wrote %s (stage %zu block %zu)\n", out.c_str(),
              trace.deform_blocks[block_index].stage, trace.deform_blocks[block_index].block);
  return 0;
}

int cmd_viz_adaptor(const std::string& ckpt, const std::string& spec_path,
                    const std::string& out_prefix) {
  ModelConfig mc = read_checkpoint_config(ckpt);
  require(mc.adaptor.mode == AdaptorMode::learned, Err::BadConfig,
          "checkpoint was trained without a learned adaptor");
  Model model(mc, 0);
  load_checkpoint(model, ckpt);
  const Tensor input = model_input_from_spec_file(model, spec_path);

  Tape tape;
  Ctx ctx(tape);
  Var adapted = adapt(ctx, tape.input(input), model.adaptor_params());
  const Tensor& after = tape.value(adapted);

  const std::size_t h = input.shape[1], t = input.shape[2];
  Tensor before_img({h, t}), after_img({h, t}), diff_img({h, t});
  for (std::size_t i = 0; i < h * t; ++i) {
    before_img.data[i] = input.data[i];
    after_img.data[i] = after.data[i];
    diff_img.data[i] = after.data[i] - input.data[i];
  }
  write_pgm(before_img, out_prefix + "_before.pgm");
  write_pgm(after_img, out_prefix + "_after.pgm");
  write_pgm(diff_img, out_prefix + "_diff.pgm");
  std::printf("wrote %s_{before,after,diff}.pgm\n", out_prefix.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deformable-attention audio event classifier, desk scale"};
  app.require_subcommand(1);

  // extract
  auto* extract = app.add_subcommand("extract", "waveform -> mel spectrogram file");
  std::string ex_in, ex_out;
  std::size_t ex_mels = 128, ex_frame = 1024, ex_shift = 430;
  double ex_rate = 0.0;
  extract->add_option("--in", ex_in, "input .wav or raw float32 PCM")->required();
  extract->add_option("--out", ex_out, "output spectrogram file")->required();
  extract->add_option("--mels", ex_mels, "mel bins");
  extract->add_option("--frame-len", ex_frame, "frame length in samples");
  extract->add_option("--shift", ex_shift, "frame shift in samples");
  extract->add_option("--rate", ex_rate, "sample rate for raw PCM input");

  auto add_common = [](CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "key = value config file");
    cmd->add_option("--set", opts.overrides, "override, key=value (repeatable)");
    cmd->add_option("--seed", opts.seed, "run seed");
  };

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on the configured dataset");
  CommonOpts train_opts;
  std::size_t train_epochs = 0;
  std::string train_out = "out";
  add_common(train_cmd, train_opts);
  train_cmd->add_option("--epochs", train_epochs, "override train.epochs");
  train_cmd->add_option("--out", train_out, "output directory");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonOpts eval_opts;
  std::string eval_ckpt, eval_data;
  add_common(eval_cmd, eval_opts);
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "manifest CSV overriding the config dataset");

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "run the six-configuration ablation table");
  CommonOpts ablate_opts;
  std::size_t ablate_epochs = 0;
  std::string ablate_out = "out";
  add_common(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("--epochs", ablate_epochs, "override train.epochs");
  ablate_cmd->add_option("--out", ablate_out, "output directory");

  // gradcheck
  auto* grad_cmd = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  std::size_t grad_size = 8;
  std::uint64_t grad_seed = 1;
  grad_cmd->add_option("--size", grad_size, "map extent");
  grad_cmd->add_option("--seed", grad_seed, "audit seed");

  // viz-offsets
  auto* vo_cmd = app.add_subcommand("viz-offsets", "dump deformable offsets as CSV");
  std::string vo_ckpt, vo_spec, vo_out = "offsets.csv";
  std::size_t vo_block = 0;
  vo_cmd->add_option("--ckpt", vo_ckpt, "checkpoint file")->required();
  vo_cmd->add_option("--spec", vo_spec, "input spectrogram file")->required();
  vo_cmd->add_option("--out", vo_out, "output CSV");
  vo_cmd->add_option("--block", vo_block, "deformable block index");

  // viz-adaptor
  auto* va_cmd = app.add_subcommand("viz-adaptor", "adaptor before/after/difference as PGM");
  std::string va_ckpt, va_spec, va_out = "adaptor";
  va_cmd->add_option("--ckpt", va_ckpt, "checkpoint file")->required();
  va_cmd->add_option("--spec", va_spec, "input spectrogram file")->required();
  va_cmd->add_option("--out", va_out, "output path prefix");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(extract))
      return cmd_extract(ex_in, ex_out, ex_mels, ex_frame, ex_shift, ex_rate);
    if (app.got_subcommand(train_cmd)) return cmd_train(train_opts, train_epochs, train_out);
    if (app.got_subcommand(eval_cmd)) return cmd_eval(eval_opts, eval_ckpt, eval_data);
    if (app.got_subcommand(ablate_cmd))
      return cmd_ablate(ablate_opts, ablate_epochs, ablate_out);
    if (app.got_subcommand(grad_cmd)) return cmd_gradcheck(grad_size, grad_seed);
    if (app.got_subcommand(vo_cmd)) return cmd_viz_offsets(vo_ckpt, vo_spec, vo_out, vo_block);
    if (app.got_subcommand(va_cmd)) return cmd_viz_adaptor(va_ckpt, va_spec, va_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

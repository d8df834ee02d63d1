#include "audeform/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "audeform/error.hpp"

namespace audeform {

Tensor spec_to_input(const Spectrogram& s, const PipelineConfig& cfg) {
  const std::size_t t_out = cfg.target_frames ? cfg.target_frames : s.T;
  Tensor out({1, s.h, t_out});
  const double pad_value = std::log(1e-10);
  for (std::size_t i = 0; i < s.h; ++i)
    for (std::size_t j = 0; j < t_out; ++j)
      out.data[i * t_out + j] = (j < s.T) ? s.at(i, j) : pad_value;
  if (cfg.standardize) {
    double mean = 0.0;
    for (double v : out.data) mean += v;
    mean /= static_cast<double>(out.numel());
    double var = 0.0;
    for (double v : out.data) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.numel());
    const double inv = 1.0 / (std::sqrt(var) + 1e-6);
    for (double& v : out.data) v = (v - mean) * inv;
  }
  return out;
}

Dataset build_dataset(const std::vector<Clip>& clips, const PipelineConfig& cfg,
                      std::size_t num_classes) {
  require(!clips.empty(), Err::DataEmpty, "no clips to build a dataset from");
  Dataset ds;
  ds.num_classes = num_classes;
  for (const Clip& c : clips) {
    require(c.label < num_classes, Err::BadLabel,
            "clip label " + std::to_string(c.label) + " out of range");
    Sample s;
    s.input = spec_to_input(fbank(c.wave, cfg.fbank), cfg);
    s.label = c.label;
    ds.items.push_back(std::move(s));
  }
  return ds;
}

AdamW::AdamW(std::vector<Parameter*> params, OptimConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.emplace_back(p->numel(), 0.0);
    v_.emplace_back(p->numel(), 0.0);
  }
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i];
    p.value.ensure_grad();
    require(p.value.grad.size() == p.numel(), Err::ShapeMismatch,
            "gradient shape for " + p.name);
    double* w = p.value.data.data();
    const double* g = p.value.grad.data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    for (std::size_t j = 0; j < p.numel(); ++j) {
      w[j] -= cfg_.lr * cfg_.weight_decay * w[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      w[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void AdamW::zero_grad() {
  for (Parameter* p : params_) p->value.zero_grad();
}

bool topk_hit(const std::vector<double>& logits, std::size_t label, std::size_t k) {
  std::size_t rank = 0;
  for (std::size_t c = 0; c < logits.size(); ++c) {
    if (logits[c] > logits[label]) ++rank;
    else if (logits[c] == logits[label] && c < label) ++rank;
  }
  return rank < k;
}

namespace {

double nll(const std::vector<double>& logits, std::size_t label) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - mx);
  return mx + std::log(sum) - logits[label];
}

}  // namespace

EvalMetrics evaluate(Model& model, const Dataset& data) {
  require(!data.items.empty(), Err::DataEmpty, "evaluate on an empty dataset");
  EvalMetrics em;
  const std::size_t k5 = 5;
  for (const Sample& s : data.items) {
    Tape tape;
    Ctx ctx(tape);
    Model::Logits out = model.forward(ctx, s.input);
    const std::vector<double>& l1 = tape.value(out.primary).data;
    if (data.dual) {
      const std::vector<double>& l2 = tape.value(out.secondary).data;
      const bool verb_ok = topk_hit(l1, s.verb, 1);
      const bool noun_ok = topk_hit(l2, s.noun, 1);
      em.verb_top1 += verb_ok;
      em.noun_top1 += noun_ok;
      em.action += (verb_ok && noun_ok);
      em.top1 += verb_ok;
      em.top5 += topk_hit(l1, s.verb, k5);
      em.loss += 0.5 * (nll(l1, s.verb) + nll(l2, s.noun));
    } else {
      em.top1 += topk_hit(l1, s.label, 1);
      em.top5 += topk_hit(l1, s.label, k5);
      em.loss += nll(l1, s.label);
    }
  }
  const double n = static_cast<double>(data.items.size());
  em.loss /= n;
  em.top1 /= n;
  em.top5 /= n;
  em.verb_top1 /= n;
  em.noun_top1 /= n;
  em.action /= n;
  return em;
}

double RunMetrics::final_train_top1() const {
  for (auto it = rows.rbegin(); it != rows.rend(); ++it)
    if (it->split == "train") return it->m.top1;
  return 0.0;
}

RunMetrics train(Model& model, const Dataset& train_set, const Dataset* eval_set,
                 const TrainConfig& tc) {
  require(!train_set.items.empty(), Err::DataEmpty, "training set is empty");
  const AdaptorConfig& ac = model.cfg().adaptor;
  const bool noisy = ac.mode == AdaptorMode::gaussian || ac.mode == AdaptorMode::laplacian;

  AdamW opt(model.parameters(), tc.optim);
  Rng shuffle_rng(tc.seed ^ 0x5475a1d2f3c6b798ULL);
  RunMetrics rm;
  rm.dual = train_set.dual;

  std::vector<std::size_t> order(train_set.items.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    double top1_sum = 0.0, top5_sum = 0.0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += tc.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + tc.batch_size);
      Tape tape;
      Ctx ctx(tape);
      opt.zero_grad();
      std::vector<Var> losses;
      for (std::size_t oi = b0; oi < b1; ++oi) {
        const Sample& s = train_set.items[order[oi]];
        Tensor input = s.input;
        if (noisy)
          input = perturb(input, ac.mode, ac.noise_scale,
                          tc.seed ^ (0x9e3779b97f4a7c15ULL * (epoch + 1)) ^
                              (0xc2b2ae3d27d4eb4fULL * (order[oi] + 1)));
        Model::Logits out = model.forward(ctx, input);
        const std::vector<double>& l1 = tape.value(out.primary).data;
        if (train_set.dual) {
          Var lv = tape.cross_entropy(out.primary, s.verb);
          Var ln = tape.cross_entropy(out.secondary, s.noun);
          losses.push_back(tape.scale(tape.add(lv, ln), 0.5));
          top1_sum += topk_hit(l1, s.verb, 1);
          top5_sum += topk_hit(l1, s.verb, 5);
        } else {
          losses.push_back(tape.cross_entropy(out.primary, s.label));
          top1_sum += topk_hit(l1, s.label, 1);
          top5_sum += topk_hit(l1, s.label, 5);
        }
      }
      Var total = losses[0];
      for (std::size_t i = 1; i < losses.size(); ++i) total = tape.add(total, losses[i]);
      Var batch_loss = tape.scale(total, 1.0 / static_cast<double>(losses.size()));
      loss_sum += tape.value(batch_loss).data[0] * static_cast<double>(losses.size());
      tape.backward(batch_loss);
      opt.step();
    }

    const double n = static_cast<double>(order.size());
    EpochRow train_row;
    train_row.epoch = epoch;
    train_row.split = "train";
    train_row.m.loss = loss_sum / n;
    train_row.m.top1 = top1_sum / n;
    train_row.m.top5 = top5_sum / n;
    rm.rows.push_back(train_row);

    EpochRow eval_row;
    eval_row.epoch = epoch;
    eval_row.split = "eval";
    eval_row.m = evaluate(model, eval_set ? *eval_set : train_set);
    rm.rows.push_back(eval_row);
  }
  return rm;
}

void write_metrics_csv(const RunMetrics& rm, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), Err::IoError, "cannot open " + path + " for writing");
  char buf[64];
  if (rm.dual)
    os << "epoch,split,loss,top1,top5,verb_top1,noun_top1,action\n";
  else
    os << "epoch,split,loss,top1,top5\n";
  for (const EpochRow& r : rm.rows) {
    os << r.epoch << ',' << r.split;
    const double vals_single[3] = {r.m.loss, r.m.top1, r.m.top5};
    const double vals_dual[6] = {r.m.loss, r.m.top1,      r.m.top5,
                                 r.m.verb_top1, r.m.noun_top1, r.m.action};
    const double* vals = rm.dual ? vals_dual : vals_single;
    const int nvals = rm.dual ? 6 : 3;
    for (int i = 0; i < nvals; ++i) {
      std::snprintf(buf, sizeof buf, "%.9g", vals[i]);
      os << ',' << buf;
    }
    os << '\n';
  }
  require(os.good(), Err::IoError, "write failed for " + path);
}

std::vector<AblationRow> ablation_suite(const ModelConfig& base, const Dataset& train_set,
                                        const Dataset& eval_set, const TrainConfig& tc) {
  struct Variant {
    std::string label;
    bool deform;
    AdaptorMode mode;
    double lambda;
    bool has_lambda;
  };
  const Variant variants[6] = {
      {"without deformable", false, AdaptorMode::off, 0.0, false},
      {"with deformable", true, AdaptorMode::off, 0.0, false},
      {"deformable + N(0, 0.005)", true, AdaptorMode::gaussian, 0.0, false},
      {"deformable + L(0, 0.005)", true, AdaptorMode::laplacian, 0.0, false},
      {"deform.+adaptor: lambda=0.2", true, AdaptorMode::learned, 0.2, true},
      {"deform.+adaptor: lambda=0.005", true, AdaptorMode::learned, 0.005, true},
  };

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    ModelConfig cfg = base;
    if (!v.deform)
      for (StageSpec& st : cfg.stages) st.kind = BlockKind::vanilla;
    cfg.adaptor.mode = v.mode;
    cfg.adaptor.noise_scale = 0.005;
    if (v.has_lambda) cfg.adaptor.lambda = v.lambda;

    Model model(cfg, tc.seed);
    train(model, train_set, &eval_set, tc);
    const EvalMetrics em = evaluate(model, eval_set);

    AblationRow row;
    row.label = v.label;
    row.has_lambda = v.has_lambda;
    row.lambda = v.lambda;
    row.top1 = em.top1;
    row.top5 = em.top5;
    row.config_hash = cfg.hash();
    rows.push_back(row);
  }
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream os(path);
  require(os.good(), Err::IoError, "cannot open " + path + " for writing");
  os << "model,lambda,top1,top5,config_hash\n";
  char buf[64];
  for (const AblationRow& r : rows) {
    os << '"' << r.label << "\",";
    if (r.has_lambda) {
      std::snprintf(buf, sizeof buf, "%g", r.lambda);
      os << buf;
    }
    std::snprintf(buf, sizeof buf, ",%.9g,%.9g,", r.top1, r.top5);
    os << buf << r.config_hash << '\n';
  }
  require(os.good(), Err::IoError, "write failed for " + path);
}

}  // namespace audeform

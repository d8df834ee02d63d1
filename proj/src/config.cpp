#include "audeform/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "audeform/error.hpp"

namespace audeform {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    const long long n = std::stoll(v);
    require(n >= 0, Err::BadConfig, key + " must be nonnegative");
    return static_cast<std::size_t>(n);
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(Err::BadConfig, key + ": '" + v + "' is not an integer");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    require(used == v.size() && std::isfinite(d), Err::BadConfig,
            key + ": '" + v + "' is not a number");
    return d;
  } catch (const Error&) {
    throw;
  } catch (...) {
    fail(Err::BadConfig, key + ": '" + v + "' is not a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  fail(Err::BadConfig, key + ": '" + v + "' is not a boolean");
}

// Splits "model.stages.3.kind" into the stage index and the field name.
bool stage_key(const std::string& key, std::size_t& index, std::string& field) {
  const std::string prefix = "model.stages.";
  if (key.rfind(prefix, 0) != 0) return false;
  const std::size_t dot = key.find('.', prefix.size());
  if (dot == std::string::npos) return false;
  index = to_size(key, key.substr(prefix.size(), dot - prefix.size()));
  field = key.substr(dot + 1);
  return true;
}

void for_each_pair(const std::string& text,
                   const std::function<void(const std::string&, const std::string&)>& fn) {
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, Err::BadConfig,
            "line " + std::to_string(lineno) + ": expected key = value");
    fn(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

}  // namespace

bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
  std::size_t si = 0;
  std::string field;
  if (stage_key(key, si, field)) {
    require(si < cfg.stages.size(), Err::BadConfig,
            key + ": stage index out of range (set model.num_stages first)");
    StageSpec& st = cfg.stages[si];
    if (field == "depth") st.depth = to_size(key, value);
    else if (field == "channels") st.channels = to_size(key, value);
    else if (field == "heads") st.heads = to_size(key, value);
    else if (field == "kind") st.kind = block_kind_from(value);
    else if (field == "merge") st.merge = to_bool(key, value);
    else if (field == "groups") st.deform.groups = to_size(key, value);
    else if (field == "r") st.deform.grid_factor = to_size(key, value);
    else if (field == "offset_scale") st.deform.offset_scale = to_double(key, value);
    else if (field == "offset_stride") st.deform.offset_stride = to_size(key, value);
    else fail(Err::BadConfig, "unknown config key '" + key + "'");
    return true;
  }
  if (key == "model.in_channels") cfg.in_channels = to_size(key, value);
  else if (key == "model.input_h") cfg.input_h = to_size(key, value);
  else if (key == "model.input_t") cfg.input_t = to_size(key, value);
  else if (key == "model.patch") cfg.patch = to_size(key, value);
  else if (key == "model.patch_stride") cfg.patch_stride = to_size(key, value);
  else if (key == "model.num_stages") {
    const std::size_t n = to_size(key, value);
    require(n >= 1, Err::BadConfig, "model.num_stages must be >= 1");
    cfg.stages.resize(n);
  } else if (key == "model.dual_head") cfg.dual_head = to_bool(key, value);
  else if (key == "model.num_classes") cfg.num_classes = to_size(key, value);
  else if (key == "model.num_verbs") cfg.num_verbs = to_size(key, value);
  else if (key == "model.num_nouns") cfg.num_nouns = to_size(key, value);
  else if (key == "adaptor.enabled")
    cfg.adaptor.mode = to_bool(key, value) ? AdaptorMode::learned : AdaptorMode::off;
  else if (key == "adaptor.mode") cfg.adaptor.mode = adaptor_mode_from(value);
  else if (key == "adaptor.lambda") cfg.adaptor.lambda = to_double(key, value);
  else if (key == "adaptor.kernel") cfg.adaptor.kernel = to_size(key, value);
  else if (key == "adaptor.noise_scale") cfg.adaptor.noise_scale = to_double(key, value);
  else return false;
  return true;
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg = ModelConfig::desk_default();
  for_each_pair(text, [&cfg](const std::string& key, const std::string& value) {
    require(apply_model_key(cfg, key, value), Err::BadConfig,
            "unknown config key '" + key + "'");
  });
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::defaults() {
  RunConfig rc;
  rc.model = ModelConfig::desk_default();
  rc.pipeline.fbank.n_mels = 32;
  rc.pipeline.fbank.frame_length = 1024;
  rc.pipeline.fbank.frame_shift = 430;
  rc.pipeline.target_frames = 64;
  rc.pipeline.standardize = true;
  rc.train_cfg.epochs = 30;
  rc.train_cfg.batch_size = 8;
  rc.train_cfg.optim.lr = 1e-3;
  return rc;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  require(is.good(), Err::IoError, "cannot open config " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  RunConfig rc = defaults();
  for_each_pair(buf.str(),
                [&rc](const std::string& key, const std::string& value) { rc.apply(key, value); });
  return rc;
}

void RunConfig::apply(const std::string& key, const std::string& value) {
  if (apply_model_key(model, key, value)) return;
  if (key == "data.kind") {
    require(value == "shifted" || value == "tones" || value == "manifest", Err::BadConfig,
            "data.kind must be shifted, tones, or manifest");
    data_kind = value;
  } else if (key == "data.manifest") data_manifest = value;
  else if (key == "data.n_per_class") data_n_per_class = to_size(key, value);
  else if (key == "data.sample_rate") data_sample_rate = to_double(key, value);
  else if (key == "data.duration") data_duration = to_double(key, value);
  else if (key == "data.eval_fraction") data_eval_fraction = to_double(key, value);
  else if (key == "data.mels") pipeline.fbank.n_mels = to_size(key, value);
  else if (key == "data.frame_length") pipeline.fbank.frame_length = to_size(key, value);
  else if (key == "data.frame_shift") pipeline.fbank.frame_shift = to_size(key, value);
  else if (key == "data.frames") pipeline.target_frames = to_size(key, value);
  else if (key == "data.standardize") pipeline.standardize = to_bool(key, value);
  else if (key == "train.epochs") train_cfg.epochs = to_size(key, value);
  else if (key == "train.batch_size") train_cfg.batch_size = to_size(key, value);
  else if (key == "train.lr") train_cfg.optim.lr = to_double(key, value);
  else if (key == "train.beta1") train_cfg.optim.beta1 = to_double(key, value);
  else if (key == "train.beta2") train_cfg.optim.beta2 = to_double(key, value);
  else if (key == "train.eps") train_cfg.optim.eps = to_double(key, value);
  else if (key == "train.weight_decay") train_cfg.optim.weight_decay = to_double(key, value);
  else fail(Err::BadConfig, "unknown config key '" + key + "'");
}

std::string RunConfig::serialize() const {
  std::ostringstream os;
  os << model.serialize();
  os << "data.kind = " << data_kind << "\n";
  if (!data_manifest.empty()) os << "data.manifest = " << data_manifest << "\n";
  os << "data.n_per_class = " << data_n_per_class << "\n";
  os << "data.sample_rate = " << data_sample_rate << "\n";
  os << "data.duration = " << data_duration << "\n";
  os << "data.eval_fraction = " << data_eval_fraction << "\n";
  os << "data.mels = " << pipeline.fbank.n_mels << "\n";
  os << "data.frame_length = " << pipeline.fbank.frame_length << "\n";
  os << "data.frame_shift = " << pipeline.fbank.frame_shift << "\n";
  os << "data.frames = " << pipeline.target_frames << "\n";
  os << "data.standardize = " << (pipeline.standardize ? 1 : 0) << "\n";
  os << "train.epochs = " << train_cfg.epochs << "\n";
  os << "train.batch_size = " << train_cfg.batch_size << "\n";
  os << "train.lr = " << train_cfg.optim.lr << "\n";
  os << "train.beta1 = " << train_cfg.optim.beta1 << "\n";
  os << "train.beta2 = " << train_cfg.optim.beta2 << "\n";
  os << "train.eps = " << train_cfg.optim.eps << "\n";
  os << "train.weight_decay = " << train_cfg.optim.weight_decay << "\n";
  return os.str();
}

void RunConfig::validate() const {
  model.validate();
  require(data_eval_fraction >= 0.0 && data_eval_fraction < 1.0, Err::BadConfig,
          "data.eval_fraction must be in [0, 1)");
  require(train_cfg.batch_size >= 1, Err::BadConfig, "train.batch_size must be >= 1");
  require(pipeline.fbank.n_mels == model.input_h, Err::ConfigMismatch,
          "data.mels must equal model.input_h");
  if (data_kind == "manifest")
    require(!data_manifest.empty(), Err::BadConfig, "data.kind=manifest needs data.manifest");
}

Dataset load_manifest(const std::string& path, const PipelineConfig& cfg) {
  std::ifstream is(path);
  require(is.good(), Err::IoError, "cannot open manifest " + path);
  std::string dir;
  const std::size_t slash = path.find_last_of('/');
  if (slash != std::string::npos) dir = path.substr(0, slash + 1);

  Dataset ds;
  std::string line;
  std::size_t max_label = 0, max_verb = 0, max_noun = 0;
  bool any_dual = false, first = true;
  while (std::getline(is, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, ',')) cols.push_back(trim(col));
    if (first && cols.size() >= 2 && cols[0] == "path") {
      first = false;  // header row
      continue;
    }
    first = false;
    require(cols.size() == 2 || cols.size() == 4, Err::BadConfig,
            path + ": manifest rows need 2 or 4 columns");
    Sample s;
    const std::string spec_path = (cols[0].front() == '/') ? cols[0] : dir + cols[0];
    s.input = spec_to_input(read_spec(spec_path), cfg);
    s.label = to_size("label", cols[1]);
    max_label = std::max(max_label, s.label);
    if (cols.size() == 4) {
      any_dual = true;
      s.verb = to_size("verb", cols[2]);
      s.noun = to_size("noun", cols[3]);
      max_verb = std::max(max_verb, s.verb);
      max_noun = std::max(max_noun, s.noun);
    }
    ds.items.push_back(std::move(s));
  }
  require(!ds.items.empty(), Err::DataEmpty, path + ": manifest lists no usable rows");
  ds.num_classes = max_label + 1;
  ds.dual = any_dual;
  ds.num_verbs = max_verb + 1;
  ds.num_nouns = max_noun + 1;
  return ds;
}

std::pair<Dataset, Dataset> build_datasets(const RunConfig& rc, std::uint64_t seed) {
  rc.validate();
  Dataset all;
  if (rc.data_kind == "manifest") {
    all = load_manifest(rc.data_manifest, rc.pipeline);
  } else if (rc.data_kind == "shifted") {
    all = build_dataset(gen_shifted_task(seed, rc.data_n_per_class, rc.data_sample_rate,
                                         rc.data_duration),
                        rc.pipeline, 4);
  } else {  // tones
    std::vector<EventSpec> classes;
    const double freqs[4] = {800.0, 1600.0, 3200.0, 6400.0};
    for (std::size_t c = 0; c < 4; ++c) {
      EventSpec e;
      e.class_id = c;
      e.kind = EventKind::tone;
      e.f_lo = e.f_hi = freqs[c];
      e.duration = rc.data_duration * 0.5;
      e.snr_db = 20.0;
      classes.push_back(e);
    }
    all = build_dataset(gen_dataset(rc.data_n_per_class, classes, rc.data_sample_rate,
                                    rc.data_duration, seed),
                        rc.pipeline, 4);
  }
  require(all.num_classes == rc.model.num_classes || rc.model.dual_head, Err::ConfigMismatch,
          "dataset has " + std::to_string(all.num_classes) + " classes, model expects " +
              std::to_string(rc.model.num_classes));

  if (rc.data_eval_fraction <= 0.0) return {all, all};

  Rng rng(seed ^ 0xa0761d6478bd642fULL);
  std::vector<std::size_t> order(all.items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  const std::size_t n_eval = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(rc.data_eval_fraction *
                                               static_cast<double>(order.size()))));
  Dataset train_ds = all, eval_ds = all;
  train_ds.items.clear();
  eval_ds.items.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < order.size() - n_eval) train_ds.items.push_back(all.items[order[i]]);
    else eval_ds.items.push_back(all.items[order[i]]);
  }
  require(!train_ds.items.empty(), Err::DataEmpty, "eval split consumed every sample");
  return {train_ds, eval_ds};
}

}  // namespace audeform

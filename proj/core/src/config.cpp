#include "bhia/config.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace bhia {

namespace {

using ojson = nlohmann::ordered_json;

ojson backbone_json(const BackboneSpec& s) {
  return ojson{{"kind", s.kind},
               {"stub_mid_channels", s.stub_mid_channels},
               {"stub_out_channels", s.stub_out_channels},
               {"stub_seed", s.stub_seed},
               {"onnx_path", s.onnx_path},
               {"onnx_output", s.onnx_output},
               {"onnx_probe_size", s.onnx_probe_size}};
}

void backbone_from(const nlohmann::json& j, BackboneSpec& s) {
  s.kind = j.value("kind", s.kind);
  s.stub_mid_channels = j.value("stub_mid_channels", s.stub_mid_channels);
  s.stub_out_channels = j.value("stub_out_channels", s.stub_out_channels);
  s.stub_seed = j.value("stub_seed", s.stub_seed);
  s.onnx_path = j.value("onnx_path", s.onnx_path);
  s.onnx_output = j.value("onnx_output", s.onnx_output);
  s.onnx_probe_size = j.value("onnx_probe_size", s.onnx_probe_size);
}

ojson to_json(const PipelineConfig& c) {
  ojson j;
  j["version"] = c.version;
  j["seed"] = c.seed;
  j["dimension"] = to_string(c.dimension);
  j["paths"] = {{"corpus", c.paths.corpus},
                {"ratings", c.paths.ratings},
                {"profiles", c.paths.profiles},
                {"work", c.paths.work}};
  j["curation"] = {{"ratio", c.curation.ratio},
                   {"ratio_tol", c.curation.ratio_tol},
                   {"min_width", c.curation.min_width},
                   {"min_height", c.curation.min_height},
                   {"size_slack", c.curation.size_slack},
                   {"bins_per_channel", c.curation.bins_per_channel},
                   {"dedup_threshold", c.curation.dedup_threshold}};
  j["cleaning"] = {{"sigma_k", c.cleaning.sigma_k},
                   {"min_valid", c.cleaning.min_valid},
                   {"min_dwell_seconds", c.cleaning.min_dwell_seconds}};
  j["split"] = {{"ref_lo", c.split.ref_lo},
                {"ref_hi", c.split.ref_hi},
                {"ref_count", c.split.ref_count},
                {"ref_train", c.split.ref_train},
                {"input_train", c.split.input_train}};
  j["backbones"] = {{"retrieval", backbone_json(c.backbones.retrieval)},
                    {"model", backbone_json(c.backbones.model)},
                    {"retrieval_metric", c.backbones.retrieval_metric}};
  j["model"] = {{"short_side", c.model.short_side},
                {"crop", c.model.crop},
                {"center_frac", c.model.center_frac},
                {"corner_frac", c.model.corner_frac},
                {"hidden", c.model.hidden}};
  ojson stages = ojson::array();
  for (int s = 0; s < 3; ++s)
    stages.push_back({{"epochs", c.train.stages[s].epochs},
                      {"batch_size", c.train.stages[s].batch_size},
                      {"learning_rate", c.train.stages[s].learning_rate}});
  j["train"] = {{"stages", stages},
                {"flip_prob", c.train.flip_prob},
                {"scale_lo", c.train.scale_lo},
                {"scale_hi", c.train.scale_hi},
                {"freeze_global", c.train.freeze_global},
                {"freeze_local", c.train.freeze_local}};
  j["scoring"] = {{"threshold", c.scoring.threshold}, {"top_k", c.scoring.top_k}};
  return j;
}

PipelineConfig from_json(const nlohmann::json& j) {
  PipelineConfig c;
  c.version = j.value("version", c.version);
  if (c.version != 1)
    throw std::runtime_error("unsupported config version " + std::to_string(c.version));
  c.seed = j.value("seed", c.seed);
  if (j.contains("dimension")) c.dimension = dimension_from_string(j.at("dimension"));
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    c.paths.corpus = p.value("corpus", c.paths.corpus);
    c.paths.ratings = p.value("ratings", c.paths.ratings);
    c.paths.profiles = p.value("profiles", c.paths.profiles);
    c.paths.work = p.value("work", c.paths.work);
  }
  if (j.contains("curation")) {
    const auto& p = j.at("curation");
    c.curation.ratio = p.value("ratio", c.curation.ratio);
    c.curation.ratio_tol = p.value("ratio_tol", c.curation.ratio_tol);
    c.curation.min_width = p.value("min_width", c.curation.min_width);
    c.curation.min_height = p.value("min_height", c.curation.min_height);
    c.curation.size_slack = p.value("size_slack", c.curation.size_slack);
    c.curation.bins_per_channel = p.value("bins_per_channel", c.curation.bins_per_channel);
    c.curation.dedup_threshold = p.value("dedup_threshold", c.curation.dedup_threshold);
  }
  if (j.contains("cleaning")) {
    const auto& p = j.at("cleaning");
    c.cleaning.sigma_k = p.value("sigma_k", c.cleaning.sigma_k);
    c.cleaning.min_valid = p.value("min_valid", c.cleaning.min_valid);
    c.cleaning.min_dwell_seconds = p.value("min_dwell_seconds", c.cleaning.min_dwell_seconds);
  }
  if (j.contains("split")) {
    const auto& p = j.at("split");
    c.split.ref_lo = p.value("ref_lo", c.split.ref_lo);
    c.split.ref_hi = p.value("ref_hi", c.split.ref_hi);
    c.split.ref_count = p.value("ref_count", c.split.ref_count);
    c.split.ref_train = p.value("ref_train", c.split.ref_train);
    c.split.input_train = p.value("input_train", c.split.input_train);
  }
  if (j.contains("backbones")) {
    const auto& p = j.at("backbones");
    if (p.contains("retrieval")) backbone_from(p.at("retrieval"), c.backbones.retrieval);
    if (p.contains("model")) backbone_from(p.at("model"), c.backbones.model);
    c.backbones.retrieval_metric = p.value("retrieval_metric", c.backbones.retrieval_metric);
  }
  if (j.contains("model")) {
    const auto& p = j.at("model");
    c.model.short_side = p.value("short_side", c.model.short_side);
    c.model.crop = p.value("crop", c.model.crop);
    c.model.center_frac = p.value("center_frac", c.model.center_frac);
    c.model.corner_frac = p.value("corner_frac", c.model.corner_frac);
    c.model.hidden = p.value("hidden", c.model.hidden);
  }
  if (j.contains("train")) {
    const auto& p = j.at("train");
    if (p.contains("stages")) {
      const auto& st = p.at("stages");
      for (std::size_t s = 0; s < 3 && s < st.size(); ++s) {
        c.train.stages[s].epochs = st[s].value("epochs", c.train.stages[s].epochs);
        c.train.stages[s].batch_size = st[s].value("batch_size", c.train.stages[s].batch_size);
        c.train.stages[s].learning_rate =
            st[s].value("learning_rate", c.train.stages[s].learning_rate);
      }
    }
    c.train.flip_prob = p.value("flip_prob", c.train.flip_prob);
    c.train.scale_lo = p.value("scale_lo", c.train.scale_lo);
    c.train.scale_hi = p.value("scale_hi", c.train.scale_hi);
    c.train.freeze_global = p.value("freeze_global", c.train.freeze_global);
    c.train.freeze_local = p.value("freeze_local", c.train.freeze_local);
  }
  if (j.contains("scoring")) {
    const auto& p = j.at("scoring");
    c.scoring.threshold = p.value("threshold", c.scoring.threshold);
    c.scoring.top_k = p.value("top_k", c.scoring.top_k);
  }
  return c;
}

// "a.b.c=value" applied onto the raw JSON tree; the value is parsed as JSON
// where possible and treated as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override '" + spec + "' is not of the form key=value");
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);

  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (...) {
    value = raw;
  }

  nlohmann::json* node = &j;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw std::invalid_argument("override '" + spec + "' has an empty key part");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

}  // namespace

void PipelineConfig::validate() const {
  const auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (curation.ratio <= 0.0) fail("curation.ratio must be > 0");
  if (curation.ratio_tol < 0.0) fail("curation.ratio_tol must be >= 0");
  if (curation.min_width <= 0 || curation.min_height <= 0) fail("curation minimum dims must be > 0");
  if (curation.size_slack < 0.0 || curation.size_slack >= 1.0) fail("curation.size_slack must be in [0,1)");
  if (curation.bins_per_channel < 2) fail("curation.bins_per_channel must be >= 2");
  if (curation.dedup_threshold < 0.0) fail("curation.dedup_threshold must be >= 0");
  if (cleaning.sigma_k <= 0.0) fail("cleaning.sigma_k must be > 0");
  if (cleaning.min_valid < 1) fail("cleaning.min_valid must be >= 1");
  if (cleaning.min_dwell_seconds < 0.0) fail("cleaning.min_dwell_seconds must be >= 0");
  if (split.ref_lo >= split.ref_hi) fail("split.ref_lo must be < split.ref_hi");
  if (split.ref_train > split.ref_count) fail("split.ref_train exceeds split.ref_count");
  if (backbones.retrieval_metric != "euclidean" && backbones.retrieval_metric != "cosine")
    fail("backbones.retrieval_metric must be euclidean|cosine");
  if (model.short_side < 1 || model.crop < 1) fail("model geometry must be >= 1");
  if (model.crop > model.short_side) fail("model.crop must not exceed model.short_side");
  if (model.center_frac <= 0.0 || model.center_frac > 1.0) fail("model.center_frac must be in (0,1]");
  if (model.corner_frac <= 0.0 || model.corner_frac > 1.0) fail("model.corner_frac must be in (0,1]");
  if (model.hidden < 1) fail("model.hidden must be >= 1");
  for (int s = 0; s < 3; ++s) {
    if (train.stages[s].epochs < 1) fail("train.stages.epochs must be >= 1");
    if (train.stages[s].batch_size < 1) fail("train.stages.batch_size must be >= 1");
    if (train.stages[s].learning_rate <= 0.0) fail("train.stages.learning_rate must be > 0");
  }
  if (train.flip_prob < 0.0 || train.flip_prob > 1.0) fail("train.flip_prob must be in [0,1]");
  if (train.scale_lo <= 0.0 || train.scale_lo > train.scale_hi)
    fail("train scale range needs 0 < scale_lo <= scale_hi");
  if (scoring.top_k < 1) fail("scoring.top_k must be >= 1");
}

ModelSpec PipelineConfig::model_spec() const {
  ModelSpec s;
  s.dimension = dimension;
  s.backbone = backbones.model;
  s.preprocess = preprocess();
  s.patches = patches();
  s.hidden = model.hidden;
  s.seed = seed;
  return s;
}

TrainConfig PipelineConfig::train_config(int stage) const {
  if (stage < 1 || stage > 3) throw std::invalid_argument("train_config: stage must be 1..3");
  TrainConfig t;
  t.stage = stage;
  t.epochs = train.stages[stage - 1].epochs;
  t.batch_size = train.stages[stage - 1].batch_size;
  t.learning_rate = train.stages[stage - 1].learning_rate;
  t.seed = seed;
  t.freeze.global = stage > 1 && train.freeze_global;
  t.freeze.local = stage > 2 && train.freeze_local;
  t.freeze.emotion = false;
  t.scale_lo = train.scale_lo;
  t.scale_hi = train.scale_hi;
  t.flip_prob = train.flip_prob;
  return t;
}

PipelineConfig default_config() { return PipelineConfig{}; }

PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  nlohmann::json j;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    try {
      f >> j;
    } catch (const std::exception& e) {
      throw std::runtime_error("config file " + path + " does not parse: " + e.what());
    }
  } else {
    j = nlohmann::json::object();
  }
  for (const auto& o : overrides) apply_override(j, o);
  PipelineConfig cfg = from_json(j);
  cfg.validate();
  return cfg;
}

std::string config_to_json(const PipelineConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

void save_config(const std::string& path, const PipelineConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config: " + path);
  f << config_to_json(cfg);
}

std::string config_hash(const PipelineConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_manifest(const std::string& path, const std::string& subcommand,
                        const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& artifacts) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char ts[32];
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", &tm);

  ojson j;
  j["tool"] = "bhia";
  j["tool_version"] = kToolVersion;
  j["format_version"] = 1;
  j["subcommand"] = subcommand;
  j["timestamp"] = ts;
  j["seed"] = cfg.seed;
  j["config_hash"] = config_hash(cfg);
  j["inputs"] = inputs;
  j["artifacts"] = artifacts;
  j["effective_config"] = to_json(cfg);

  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write run manifest: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace bhia

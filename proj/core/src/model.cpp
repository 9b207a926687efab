#include "bhia/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace bhia {

// --- heads -----------------------------------------------------------------

double LinearHead::forward(std::span<const double> x) const {
  if (x.size() != w.size())
    throw std::invalid_argument("LinearHead: feature size " + std::to_string(x.size()) +
                                " does not match head width " + std::to_string(w.size()));
  double y = b;
  for (std::size_t i = 0; i < w.size(); ++i) y += w[i] * x[i];
  return y;
}

void LinearHead::accumulate_grad(std::span<const double> x, double dy, std::span<double> gw,
                                 double& gb) const {
  for (std::size_t i = 0; i < w.size(); ++i) gw[i] += dy * x[i];
  gb += dy;
}

double TwoLayerHead::forward(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != in_dim)
    throw std::invalid_argument("TwoLayerHead: feature size mismatch");
  double y = b2;
  for (int j = 0; j < hidden; ++j) {
    double pre = b1[j];
    const double* row = w1.data() + static_cast<std::size_t>(j) * in_dim;
    for (int i = 0; i < in_dim; ++i) pre += row[i] * x[i];
    if (pre > 0.0) y += w2[j] * pre;
  }
  return y;
}

void TwoLayerHead::accumulate_grad(std::span<const double> x, double dy, std::span<double> gw1,
                                   std::span<double> gb1, std::span<double> gw2,
                                   double& gb2) const {
  for (int j = 0; j < hidden; ++j) {
    double pre = b1[j];
    const double* row = w1.data() + static_cast<std::size_t>(j) * in_dim;
    for (int i = 0; i < in_dim; ++i) pre += row[i] * x[i];
    const double h = pre > 0.0 ? pre : 0.0;
    gw2[j] += dy * h;
    if (pre > 0.0) {
      const double dpre = dy * w2[j];
      double* grow = gw1.data() + static_cast<std::size_t>(j) * in_dim;
      for (int i = 0; i < in_dim; ++i) grow[i] += dpre * x[i];
      gb1[j] += dpre;
    }
  }
  gb2 += dy;
}

LinearHead make_linear_head(int in_dim, Rng& rng) {
  // Zero start: a linear map needs no symmetry breaking, and the relative
  // heads then begin unbiased at exactly 0 for any pair.
  (void)rng;
  LinearHead h;
  h.w.assign(in_dim, 0.0);
  h.b = 0.0;
  return h;
}

TwoLayerHead make_two_layer_head(int in_dim, int hidden, Rng& rng) {
  TwoLayerHead h;
  h.in_dim = in_dim;
  h.hidden = hidden;
  h.w1.resize(static_cast<std::size_t>(hidden) * in_dim);
  h.b1.assign(hidden, 0.1);  // positive bias keeps ReLU units initially active
  h.w2.resize(hidden);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (double& v : h.w1) v = rng.gaussian() * s1;
  for (double& v : h.w2) v = rng.gaussian() * s2;
  h.b2 = 0.0;
  return h;
}

// --- local patch layout ----------------------------------------------------------

std::vector<Rect> patch_rects(int width, int height, const PatchScheme& scheme) {
  if (width < 2 || height < 2) throw std::invalid_argument("patch_rects: image too small");
  const int cw = static_cast<int>(std::lround(width * scheme.center_frac));
  const int ch = static_cast<int>(std::lround(height * scheme.center_frac));
  const int kw = static_cast<int>(std::lround(width * scheme.corner_frac));
  const int kh = static_cast<int>(std::lround(height * scheme.corner_frac));
  if (cw < 1 || ch < 1 || kw < 1 || kh < 1)
    throw std::invalid_argument("patch_rects: patch fractions too small for image");
  return {
      Rect{(width - cw) / 2, (height - ch) / 2, cw, ch},  // center
      Rect{0, 0, kw, kh},                                 // top-left
      Rect{width - kw, 0, kw, kh},                        // top-right
      Rect{0, height - kh, kw, kh},                       // bottom-left
      Rect{width - kw, height - kh, kw, kh},              // bottom-right
  };
}

// --- forwards ------------------------------------------------------------------------

std::vector<double> global_pooled(const GlobalModule& m, const Tensor& preprocessed) {
  return m.backbone->pooled(preprocessed);
}

GlobalOut forward_global_from_features(const GlobalModule& m, const std::vector<double>& f_input,
                                       const std::vector<double>& f_ref) {
  if (f_input.size() != f_ref.size())
    throw std::invalid_argument("forward_global: branch feature geometry mismatch");
  GlobalOut out;
  out.input_score = m.absolute_head.forward(f_input);
  out.ref_score = m.absolute_head.forward(f_ref);
  std::vector<double> pair;
  pair.reserve(f_input.size() * 2);
  pair.insert(pair.end(), f_input.begin(), f_input.end());
  pair.insert(pair.end(), f_ref.begin(), f_ref.end());
  out.rel_score = m.relative_head.forward(pair);
  return out;
}

GlobalOut forward_global(const GlobalModule& m, const Tensor& input_pre, const Tensor& ref_pre) {
  if (!input_pre.same_shape(ref_pre))
    throw std::invalid_argument("forward_global: input/reference geometry mismatch");
  return forward_global_from_features(m, global_pooled(m, input_pre), global_pooled(m, ref_pre));
}

std::vector<double> local_concat_features(const LocalModule& m, const PatchScheme& scheme,
                                          const Tensor& scaled, int patch_input) {
  const auto rects = patch_rects(scaled.width, scaled.height, scheme);
  std::vector<double> concat;
  concat.reserve(static_cast<std::size_t>(kNumPatches) * m.backbone->channels());
  for (const auto& r : rects) {
    const Tensor patch = bilinear_resize(crop(scaled, r), patch_input, patch_input);
    const auto pooled = m.backbone->pooled(patch);
    concat.insert(concat.end(), pooled.begin(), pooled.end());
  }
  return concat;
}

double forward_local_from_features(const LocalModule& m, const std::vector<double>& f_input,
                                   const std::vector<double>& f_ref) {
  if (f_input.size() != f_ref.size())
    throw std::invalid_argument("forward_local: patch feature geometry mismatch");
  std::vector<double> pair;
  pair.reserve(f_input.size() * 2);
  pair.insert(pair.end(), f_input.begin(), f_input.end());
  pair.insert(pair.end(), f_ref.begin(), f_ref.end());
  return m.relative_head.forward(pair);
}

double forward_local(const LocalModule& m, const PatchScheme& scheme, const Tensor& input_scaled,
                     const Tensor& ref_scaled, int patch_input) {
  return forward_local_from_features(m, local_concat_features(m, scheme, input_scaled, patch_input),
                                     local_concat_features(m, scheme, ref_scaled, patch_input));
}

EmotionFeatures emotion_pooled(const EmotionModule& m, const Tensor& preprocessed,
                               EmotionTrace* trace) {
  const Tensor map_t = m.backbone_target->feature_map(preprocessed);
  const Tensor map_a = m.backbone_assist->feature_map(preprocessed);
  if (!map_t.same_shape(map_a))
    throw std::runtime_error("forward_emotion: parallel feature maps differ in shape");
  const Tensor map_d = subtract(map_t, map_a);
  EmotionFeatures f;
  f.target = average_pool(map_t);
  f.assist = average_pool(map_a);
  f.diff = average_pool(map_d);
  if (trace) {
    trace->map_target = map_t;
    trace->map_assist = map_a;
    trace->map_diff = map_d;
  }
  return f;
}

EmotionOut forward_emotion_from_features(const EmotionModule& m, const EmotionFeatures& f) {
  EmotionOut out;
  out.target = m.head_target.forward(f.target);
  out.assist = m.head_assist.forward(f.assist);
  out.diff = m.head_diff.forward(f.diff);
  return out;
}

EmotionOut forward_emotion(const EmotionModule& m, const Tensor& input_pre, EmotionTrace* trace) {
  return forward_emotion_from_features(m, emotion_pooled(m, input_pre, trace));
}

// --- bundle ---------------------------------------------------------------------------------

ModelBundle make_model_bundle(const ModelSpec& spec) {
  ModelBundle b;
  b.spec = spec;
  // Independent backbone copies: distinct seed offsets per role. The global
  // module's two branches intentionally share one instance.
  b.global.backbone = make_extractor(spec.backbone, 1);
  b.local.backbone = make_extractor(spec.backbone, 2);
  b.emotion.backbone_target = make_extractor(spec.backbone, 3);
  b.emotion.backbone_assist = make_extractor(spec.backbone, 4);

  const int d = b.global.backbone->channels();
  Rng rng = Rng::substream(spec.seed, "init.heads");
  b.global.absolute_head = make_linear_head(d, rng);
  b.global.relative_head = make_linear_head(2 * d, rng);
  b.local.relative_head = make_linear_head(2 * kNumPatches * d, rng);
  b.emotion.head_target = make_linear_head(d, rng);
  b.emotion.head_assist = make_linear_head(d, rng);
  b.emotion.head_diff = make_two_layer_head(d, spec.hidden, rng);
  return b;
}

PredictionBreakdown forward_all(const ModelBundle& bundle, const Tensor& input_rgb,
                                const Tensor& ref_rgb, double ref_truth) {
  const Preprocess& pp = bundle.spec.preprocess;
  const Tensor input_pre = preprocess_image(input_rgb, pp);
  const Tensor ref_pre = preprocess_image(ref_rgb, pp);
  const Tensor input_scaled = resize_short_side(input_rgb, pp.short_side);
  const Tensor ref_scaled = resize_short_side(ref_rgb, pp.short_side);

  PredictionBreakdown parts;
  const GlobalOut g = forward_global(bundle.global, input_pre, ref_pre);
  parts.global_input = g.input_score;
  parts.global_ref = g.ref_score;
  parts.global_rel = g.rel_score;
  parts.local_rel =
      forward_local(bundle.local, bundle.spec.patches, input_scaled, ref_scaled, pp.crop);
  const EmotionOut e = forward_emotion(bundle.emotion, input_pre);
  parts.emo_target = e.target;
  parts.emo_assist = e.assist;
  parts.emo_diff = e.diff;
  parts.ref_truth = ref_truth;
  return parts;
}

// --- parameter flattening ----------------------------------------------------------------------
// Layouts:
//   global:  [absolute.w, absolute.b, relative.w, relative.b]
//   local:   [relative.w, relative.b]
//   emotion: [target.w, target.b, assist.w, assist.b, diff.w1, diff.b1, diff.w2, diff.b2]

namespace {

void append(std::vector<double>& out, const std::vector<double>& v) {
  out.insert(out.end(), v.begin(), v.end());
}

std::size_t take(const std::vector<double>& src, std::size_t pos, std::vector<double>& dst) {
  std::copy(src.begin() + pos, src.begin() + pos + dst.size(), dst.begin());
  return pos + dst.size();
}

}  // namespace

std::vector<double> global_params(const GlobalModule& m) {
  std::vector<double> p;
  append(p, m.absolute_head.w);
  p.push_back(m.absolute_head.b);
  append(p, m.relative_head.w);
  p.push_back(m.relative_head.b);
  return p;
}

void set_global_params(GlobalModule& m, const std::vector<double>& p) {
  const std::size_t need = m.absolute_head.w.size() + 1 + m.relative_head.w.size() + 1;
  if (p.size() != need) throw std::invalid_argument("set_global_params: size mismatch");
  std::size_t pos = take(p, 0, m.absolute_head.w);
  m.absolute_head.b = p[pos++];
  pos = take(p, pos, m.relative_head.w);
  m.relative_head.b = p[pos];
}

std::vector<double> local_params(const LocalModule& m) {
  std::vector<double> p;
  append(p, m.relative_head.w);
  p.push_back(m.relative_head.b);
  return p;
}

void set_local_params(LocalModule& m, const std::vector<double>& p) {
  if (p.size() != m.relative_head.w.size() + 1)
    throw std::invalid_argument("set_local_params: size mismatch");
  const std::size_t pos = take(p, 0, m.relative_head.w);
  m.relative_head.b = p[pos];
}

std::vector<double> emotion_params(const EmotionModule& m) {
  std::vector<double> p;
  append(p, m.head_target.w);
  p.push_back(m.head_target.b);
  append(p, m.head_assist.w);
  p.push_back(m.head_assist.b);
  append(p, m.head_diff.w1);
  append(p, m.head_diff.b1);
  append(p, m.head_diff.w2);
  p.push_back(m.head_diff.b2);
  return p;
}

void set_emotion_params(EmotionModule& m, const std::vector<double>& p) {
  const std::size_t need = m.head_target.w.size() + 1 + m.head_assist.w.size() + 1 +
                           m.head_diff.w1.size() + m.head_diff.b1.size() + m.head_diff.w2.size() + 1;
  if (p.size() != need) throw std::invalid_argument("set_emotion_params: size mismatch");
  std::size_t pos = take(p, 0, m.head_target.w);
  m.head_target.b = p[pos++];
  pos = take(p, pos, m.head_assist.w);
  m.head_assist.b = p[pos++];
  pos = take(p, pos, m.head_diff.w1);
  pos = take(p, pos, m.head_diff.b1);
  pos = take(p, pos, m.head_diff.w2);
  m.head_diff.b2 = p[pos];
}

// --- checkpoints ------------------------------------------------------------------------------

namespace {

constexpr char kWeightsMagic[4] = {'B', 'H', 'C', 'W'};
constexpr std::uint32_t kWeightsVersion = 1;

void save_params(const std::string& path, const std::vector<double>& p) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write weights: " + path);
  f.write(kWeightsMagic, 4);
  const std::uint32_t v = kWeightsVersion;
  f.write(reinterpret_cast<const char*>(&v), 4);
  const std::uint64_t n = p.size();
  f.write(reinterpret_cast<const char*>(&n), 8);
  f.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(n * 8));
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<double> load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read weights: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kWeightsMagic, 4) != 0)
    throw std::runtime_error("not a weights file: " + path);
  std::uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  if (v != kWeightsVersion)
    throw std::runtime_error("unsupported weights version in " + path);
  std::uint64_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 8);
  std::vector<double> p(n);
  f.read(reinterpret_cast<char*>(p.data()), static_cast<std::streamsize>(n * 8));
  if (!f) throw std::runtime_error("truncated weights file: " + path);
  return p;
}

nlohmann::ordered_json backbone_to_json(const BackboneSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = s.kind;
  j["stub_mid_channels"] = s.stub_mid_channels;
  j["stub_out_channels"] = s.stub_out_channels;
  j["stub_seed"] = s.stub_seed;
  j["onnx_path"] = s.onnx_path;
  j["onnx_output"] = s.onnx_output;
  j["onnx_probe_size"] = s.onnx_probe_size;
  return j;
}

BackboneSpec backbone_from_json(const nlohmann::json& j) {
  BackboneSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.stub_mid_channels = j.value("stub_mid_channels", s.stub_mid_channels);
  s.stub_out_channels = j.value("stub_out_channels", s.stub_out_channels);
  s.stub_seed = j.value("stub_seed", s.stub_seed);
  s.onnx_path = j.value("onnx_path", s.onnx_path);
  s.onnx_output = j.value("onnx_output", s.onnx_output);
  s.onnx_probe_size = j.value("onnx_probe_size", s.onnx_probe_size);
  return s;
}

}  // namespace

void save_bundle(const std::string& dir, const ModelBundle& bundle) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["dimension"] = to_string(bundle.spec.dimension);
  j["backbone"] = backbone_to_json(bundle.spec.backbone);
  j["backbone_ids"] = {
      {"global", bundle.global.backbone->id()},
      {"local", bundle.local.backbone->id()},
      {"emotion_target", bundle.emotion.backbone_target->id()},
      {"emotion_assist", bundle.emotion.backbone_assist->id()},
  };
  j["preprocess"] = {{"short_side", bundle.spec.preprocess.short_side},
                     {"crop", bundle.spec.preprocess.crop}};
  j["patches"] = {{"center_frac", bundle.spec.patches.center_frac},
                  {"corner_frac", bundle.spec.patches.corner_frac}};
  j["hidden"] = bundle.spec.hidden;
  j["seed"] = bundle.spec.seed;
  j["channels"] = bundle.channels();
  j["completed_stages"] = bundle.completed_stages;

  std::ofstream mf((fs::path(dir) / "manifest.json").string());
  if (!mf) throw std::runtime_error("cannot write checkpoint manifest in " + dir);
  mf << j.dump(2) << "\n";

  save_params((fs::path(dir) / "global.bin").string(), global_params(bundle.global));
  save_params((fs::path(dir) / "local.bin").string(), local_params(bundle.local));
  save_params((fs::path(dir) / "emotion.bin").string(), emotion_params(bundle.emotion));
}

ModelBundle load_bundle(const std::string& dir) {
  const auto manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ifstream mf(manifest_path);
  if (!mf) throw std::runtime_error("cannot read checkpoint manifest: " + manifest_path);
  nlohmann::json j;
  mf >> j;
  if (j.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported checkpoint format in " + manifest_path);

  ModelSpec spec;
  spec.dimension = dimension_from_string(j.at("dimension").get<std::string>());
  spec.backbone = backbone_from_json(j.at("backbone"));
  spec.preprocess.short_side = j.at("preprocess").at("short_side").get<int>();
  spec.preprocess.crop = j.at("preprocess").at("crop").get<int>();
  spec.patches.center_frac = j.at("patches").at("center_frac").get<double>();
  spec.patches.corner_frac = j.at("patches").at("corner_frac").get<double>();
  spec.hidden = j.at("hidden").get<int>();
  spec.seed = j.at("seed").get<std::uint64_t>();

  ModelBundle b = make_model_bundle(spec);
  std::vector<double> gp = load_params((fs::path(dir) / "global.bin").string());
  std::vector<double> lp = load_params((fs::path(dir) / "local.bin").string());
  std::vector<double> ep = load_params((fs::path(dir) / "emotion.bin").string());
  set_global_params(b.global, gp);
  set_local_params(b.local, lp);
  set_emotion_params(b.emotion, ep);
  for (const auto& s : j.at("completed_stages")) b.completed_stages.insert(s.get<int>());
  return b;
}

}  // namespace bhia

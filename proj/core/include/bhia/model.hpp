#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bhia/features.hpp"
#include "bhia/rng.hpp"
#include "bhia/tensor.hpp"
#include "bhia/types.hpp"

namespace bhia {

// --- heads -----------------------------------------------------------------

// Single linear map to a scalar.
struct LinearHead {
  std::vector<double> w;
  double b = 0.0;

  double forward(std::span<const double> x) const;
  // dL/dw += dy * x, dL/db += dy
  void accumulate_grad(std::span<const double> x, double dy, std::span<double> gw, double& gb) const;
};

// in -> hidden -> 1 with ReLU.
struct TwoLayerHead {
  int in_dim = 0;
  int hidden = 0;
  std::vector<double> w1;  // hidden x in, row-major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  double forward(std::span<const double> x) const;
  void accumulate_grad(std::span<const double> x, double dy, std::span<double> gw1,
                       std::span<double> gb1, std::span<double> gw2, double& gb2) const;
};

LinearHead make_linear_head(int in_dim, Rng& rng);
TwoLayerHead make_two_layer_head(int in_dim, int hidden, Rng& rng);

// --- local patch layout -------------------------------------------------------

struct PatchScheme {
  double center_frac = 0.5;  // center crop side fraction
  double corner_frac = 0.4;  // corner crop side fraction
};

// Five patches in fixed order: center, then top-left, top-right, bottom-left,
// bottom-right. Sizes are lround(side * frac); the center patch is centered,
// corner patches are flush with their corners.
std::vector<Rect> patch_rects(int width, int height, const PatchScheme& scheme);

inline constexpr int kNumPatches = 5;

// --- modules ----------------------------------------------------------------------

// Siamese comparison: one backbone serves both branches, so the branches
// share weights by construction.
struct GlobalModule {
  std::shared_ptr<const FeatureExtractor> backbone;
  LinearHead absolute_head;  // pooled features -> score
  LinearHead relative_head;  // concat(input, reference) -> score difference
};

struct LocalModule {
  std::shared_ptr<const FeatureExtractor> backbone;
  LinearHead relative_head;  // concat of both images' patch features -> difference
};

// Two parallel backbones: one for the target dimension (map F_t), one for the
// assistant dimension (map F_a). The difference map F_t - F_a feeds the
// two-layer head that predicts target-minus-assistant.
struct EmotionModule {
  std::shared_ptr<const FeatureExtractor> backbone_target;
  std::shared_ptr<const FeatureExtractor> backbone_assist;
  LinearHead head_target;
  LinearHead head_assist;
  TwoLayerHead head_diff;
};

// --- forward passes ------------------------------------------------------------------

struct GlobalOut {
  double input_score = 0.0;  // y for the input image
  double ref_score = 0.0;    // y for the reference image
  double rel_score = 0.0;    // predicted input-minus-reference
};

std::vector<double> global_pooled(const GlobalModule& m, const Tensor& preprocessed);
GlobalOut forward_global_from_features(const GlobalModule& m, const std::vector<double>& f_input,
                                       const std::vector<double>& f_ref);
GlobalOut forward_global(const GlobalModule& m, const Tensor& input_pre, const Tensor& ref_pre);

// Concatenated pooled features of the five patches of one scaled image; each
// patch is resized to patch_input x patch_input before the backbone.
std::vector<double> local_concat_features(const LocalModule& m, const PatchScheme& scheme,
                                          const Tensor& scaled, int patch_input);
double forward_local_from_features(const LocalModule& m, const std::vector<double>& f_input,
                                   const std::vector<double>& f_ref);
double forward_local(const LocalModule& m, const PatchScheme& scheme, const Tensor& input_scaled,
                     const Tensor& ref_scaled, int patch_input);

struct EmotionOut {
  double target = 0.0;  // predicted target-dimension score
  double assist = 0.0;  // predicted assistant-dimension score
  double diff = 0.0;    // predicted target-minus-assistant
};

struct EmotionFeatures {
  std::vector<double> target;  // pooled F_t
  std::vector<double> assist;  // pooled F_a
  std::vector<double> diff;    // pooled (F_t - F_a)
};

// Instrumentation hook exposing the raw maps of a forward pass.
struct EmotionTrace {
  Tensor map_target;
  Tensor map_assist;
  Tensor map_diff;
};

EmotionFeatures emotion_pooled(const EmotionModule& m, const Tensor& preprocessed,
                               EmotionTrace* trace = nullptr);
EmotionOut forward_emotion_from_features(const EmotionModule& m, const EmotionFeatures& f);
EmotionOut forward_emotion(const EmotionModule& m, const Tensor& input_pre,
                           EmotionTrace* trace = nullptr);

// --- bundle ------------------------------------------------------------------------------

// All sub-predictions for one scored image.
struct PredictionBreakdown {
  double global_input = 0.0;  // absolute score of the input (global module)
  double global_ref = 0.0;    // absolute score of the reference (global module)
  double global_rel = 0.0;    // input-minus-reference (global module)
  double local_rel = 0.0;     // input-minus-reference (local module)
  double emo_target = 0.0;    // target-dimension score (emotion module; training-only)
  double emo_assist = 0.0;    // assistant-dimension score (emotion module)
  double emo_diff = 0.0;      // target-minus-assistant (emotion module)
  double ref_truth = 0.0;     // ground truth of the retrieved reference
};

struct ModelSpec {
  Dimension dimension = Dimension::Beauty;
  BackboneSpec backbone;
  Preprocess preprocess;
  PatchScheme patches;
  int hidden = 256;
  std::uint64_t seed = 0;
};

struct ModelBundle {
  ModelSpec spec;
  GlobalModule global;
  LocalModule local;
  EmotionModule emotion;
  std::set<int> completed_stages;

  int channels() const { return global.backbone->channels(); }
};

ModelBundle make_model_bundle(const ModelSpec& spec);

// Runs every sub-module on an input/reference pair of raw RGB images.
PredictionBreakdown forward_all(const ModelBundle& bundle, const Tensor& input_rgb,
                                const Tensor& ref_rgb, double ref_truth);

// --- trainable parameter flattening ---------------------------------------------------------

// Layouts are fixed and documented next to the definitions; checkpoints and
// the optimizer share them.
std::vector<double> global_params(const GlobalModule& m);
void set_global_params(GlobalModule& m, const std::vector<double>& p);
std::vector<double> local_params(const LocalModule& m);
void set_local_params(LocalModule& m, const std::vector<double>& p);
std::vector<double> emotion_params(const EmotionModule& m);
void set_emotion_params(EmotionModule& m, const std::vector<double>& p);

// --- checkpoints ---------------------------------------------------------------------------

// Directory layout: manifest.json + global.bin/local.bin/emotion.bin holding
// the flat parameter vectors.
void save_bundle(const std::string& dir, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& dir);

}  // namespace bhia

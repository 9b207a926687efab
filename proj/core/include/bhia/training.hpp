#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bhia/model.hpp"
#include "bhia/retrieval.hpp"
#include "bhia/rng.hpp"
#include "bhia/tensor.hpp"
#include "bhia/types.hpp"

namespace bhia {

struct FreezePolicy {
  bool global = false;
  bool local = false;
  bool emotion = false;

  // Later stages freeze previously trained modules.
  static FreezePolicy default_for_stage(int stage) {
    FreezePolicy p;
    p.global = stage > 1;
    p.local = stage > 2;
    return p;
  }

  bool frozen_for(int module_stage) const {
    return module_stage == 1 ? global : module_stage == 2 ? local : emotion;
  }
};

struct TrainConfig {
  int stage = 1;
  int epochs = 200;
  int batch_size = 16;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  FreezePolicy freeze;
  double scale_lo = 0.75;  // random resize factor range
  double scale_hi = 1.25;
  double flip_prob = 0.5;

  void validate() const;
};

// Random rescale by a factor uniform in [scale_lo, scale_hi], then horizontal
// flip with probability flip_prob. Exactly one uniform and one coin are drawn
// per call, so the stream stays aligned whatever the outcome.
Tensor augment(const Tensor& image, const TrainConfig& cfg, Rng& rng);

// augment followed by backbone geometry normalization.
Tensor augment_for_backbone(const Tensor& image, const TrainConfig& cfg, const Preprocess& pp,
                            Rng& rng);

// Adam with bias correction over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::vector<double>& params, const std::vector<double>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  long t_ = 0;
};

struct TrainSample {
  std::string image_id;
  Tensor image;      // raw RGB
  double t_target = 0.0;  // ground truth in the model's dimension
  double t_assist = 0.0;  // ground truth in the assistant dimension
};

struct EpochRecord {
  int stage = 0;
  int epoch = 0;
  double mean_loss = 0.0;
  std::string timestamp;  // ISO-8601 UTC
};

struct TrainResult {
  std::vector<EpochRecord> history;
};

// One stage of the three-stage schedule: stage 1 fits the global module,
// stage 2 the local module, stage 3 the emotion module. Earlier stages must
// be complete (bundle.completed_stages), input pairs come from the reference
// index, and a non-finite loss aborts with a diagnostic.
TrainResult train_stage(ModelBundle& bundle, const std::vector<TrainSample>& inputs,
                        const ReferenceIndex& ref_index, const FeatureExtractor& retrieval_backbone,
                        const Preprocess& retrieval_pp,
                        const std::map<std::string, Tensor>& ref_images, const TrainConfig& cfg);

void append_history(const std::string& path, const std::vector<EpochRecord>& records);

}  // namespace bhia

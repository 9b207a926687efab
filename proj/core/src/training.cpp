#include "bhia/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "bhia/losses.hpp"

namespace bhia {

void TrainConfig::validate() const {
  if (stage < 1 || stage > 3) throw std::invalid_argument("TrainConfig: stage must be 1..3");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw std::invalid_argument("TrainConfig: flip_prob must be in [0,1]");
  if (scale_lo <= 0.0 || scale_lo > scale_hi)
    throw std::invalid_argument("TrainConfig: need 0 < scale_lo <= scale_hi");
}

Tensor augment(const Tensor& image, const TrainConfig& cfg, Rng& rng) {
  const double factor = rng.uniform(cfg.scale_lo, cfg.scale_hi);
  const bool flip = rng.bernoulli(cfg.flip_prob);
  Tensor out;
  const int w = std::max(1, static_cast<int>(std::lround(image.width * factor)));
  const int h = std::max(1, static_cast<int>(std::lround(image.height * factor)));
  if (w != image.width || h != image.height)
    out = bilinear_resize(image, w, h);
  else
    out = image;
  if (flip) out = hflip(out);
  return out;
}

Tensor augment_for_backbone(const Tensor& image, const TrainConfig& cfg, const Preprocess& pp,
                            Rng& rng) {
  return preprocess_image(augment(image, cfg, rng), pp);
}

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size())
    throw std::invalid_argument("Adam::step: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i] * grads[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Pair {
  std::string ref_id;
  double t_ref = 0.0;
  const Tensor* ref_image = nullptr;
};

std::vector<double> concat(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out;
  out.reserve(a.size() + b.size());
  out.insert(out.end(), a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

TrainResult train_stage(ModelBundle& bundle, const std::vector<TrainSample>& inputs,
                        const ReferenceIndex& ref_index, const FeatureExtractor& retrieval_backbone,
                        const Preprocess& retrieval_pp,
                        const std::map<std::string, Tensor>& ref_images, const TrainConfig& cfg) {
  cfg.validate();
  if (inputs.empty()) throw std::invalid_argument("train_stage: no training samples");
  for (int prior = 1; prior < cfg.stage; ++prior) {
    if (!bundle.completed_stages.count(prior))
      throw std::runtime_error("train_stage: stage " + std::to_string(prior) +
                               " has not completed; run it before stage " +
                               std::to_string(cfg.stage));
  }
  if (cfg.freeze.frozen_for(cfg.stage))
    throw std::invalid_argument("train_stage: freeze policy freezes the active module of stage " +
                                std::to_string(cfg.stage));

  const Preprocess& pp = bundle.spec.preprocess;
  const int stage = cfg.stage;

  // Pair formation for the comparison stages. The retrieval backbone is
  // fixed, so the pairing is static and cached up front.
  std::vector<Pair> pairs(inputs.size());
  if (stage == 1 || stage == 2) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      const auto hit = retrieve_reference(inputs[i].image, ref_index, retrieval_backbone, retrieval_pp);
      const auto it = ref_images.find(hit.id);
      if (it == ref_images.end())
        throw std::runtime_error("train_stage: retrieved reference '" + hit.id +
                                 "' has no image available");
      pairs[i] = Pair{hit.id, hit.score, &it->second};
    }
  }

  const bool augmentation_active = cfg.flip_prob > 0.0 || cfg.scale_lo != 1.0 || cfg.scale_hi != 1.0;

  // Reference-side features never see augmentation; cache per reference id.
  std::map<std::string, std::vector<double>> ref_feat_cache;
  const auto ref_features = [&](std::size_t i) -> const std::vector<double>& {
    auto it = ref_feat_cache.find(pairs[i].ref_id);
    if (it == ref_feat_cache.end()) {
      std::vector<double> f;
      if (stage == 1)
        f = global_pooled(bundle.global, preprocess_image(*pairs[i].ref_image, pp));
      else
        f = local_concat_features(bundle.local, bundle.spec.patches,
                                  resize_short_side(*pairs[i].ref_image, pp.short_side), pp.crop);
      it = ref_feat_cache.emplace(pairs[i].ref_id, std::move(f)).first;
    }
    return it->second;
  };

  // Input-side features are recomputed per step while augmentation is active,
  // cached otherwise.
  std::vector<std::vector<double>> input_feat_cache(inputs.size());
  std::vector<EmotionFeatures> emotion_feat_cache(inputs.size());
  std::vector<bool> input_feat_ready(inputs.size(), false);

  Rng rng = Rng::substream(cfg.seed, "train.stage" + std::to_string(stage));

  std::vector<double> params = stage == 1   ? global_params(bundle.global)
                               : stage == 2 ? local_params(bundle.local)
                                            : emotion_params(bundle.emotion);
  Adam adam(params.size(), cfg.learning_rate);
  std::vector<double> grads(params.size(), 0.0);

  const int d = bundle.channels();
  // Flat gradient slices mirroring the parameter layouts in model.cpp.
  const auto g_abs_w = [&] { return std::span<double>(grads.data(), d); };
  const auto g_rel_w = [&](std::size_t off, std::size_t n) { return std::span<double>(grads.data() + off, n); };

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(end - start);
      std::fill(grads.begin(), grads.end(), 0.0);

      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const TrainSample& s = inputs[i];
        double sample_loss = 0.0;

        if (stage == 1) {
          std::vector<double> f_p;
          if (augmentation_active) {
            f_p = global_pooled(bundle.global, augment_for_backbone(s.image, cfg, pp, rng));
          } else {
            if (!input_feat_ready[i]) {
              input_feat_cache[i] = global_pooled(bundle.global, preprocess_image(s.image, pp));
              input_feat_ready[i] = true;
            }
            f_p = input_feat_cache[i];
          }
          const auto& f_q = ref_features(i);
          const auto out = forward_global_from_features(bundle.global, f_p, f_q);
          sample_loss = loss_global(out.input_score, out.ref_score, out.rel_score, s.t_target,
                                    pairs[i].t_ref);
          const auto dy = loss_global_grad(out.input_score, out.ref_score, out.rel_score,
                                           s.t_target, pairs[i].t_ref);
          // layout: [abs.w(d), abs.b, rel.w(2d), rel.b]
          double& g_abs_b = grads[d];
          bundle.global.absolute_head.accumulate_grad(f_p, dy.d_input * inv_batch, g_abs_w(), g_abs_b);
          bundle.global.absolute_head.accumulate_grad(f_q, dy.d_ref * inv_batch, g_abs_w(), g_abs_b);
          const auto pair_feat = concat(f_p, f_q);
          double& g_rel_b = grads[static_cast<std::size_t>(d) + 1 + 2 * d];
          bundle.global.relative_head.accumulate_grad(pair_feat, dy.d_rel * inv_batch,
                                                      g_rel_w(d + 1, 2 * d), g_rel_b);
        } else if (stage == 2) {
          std::vector<double> f_p;
          if (augmentation_active) {
            const Tensor aug = augment(s.image, cfg, rng);
            f_p = local_concat_features(bundle.local, bundle.spec.patches,
                                        resize_short_side(aug, pp.short_side), pp.crop);
          } else {
            if (!input_feat_ready[i]) {
              input_feat_cache[i] = local_concat_features(
                  bundle.local, bundle.spec.patches, resize_short_side(s.image, pp.short_side), pp.crop);
              input_feat_ready[i] = true;
            }
            f_p = input_feat_cache[i];
          }
          const auto& f_q = ref_features(i);
          const double y = forward_local_from_features(bundle.local, f_p, f_q);
          sample_loss = loss_local(y, s.t_target, pairs[i].t_ref);
          const double dy = loss_local_grad(y, s.t_target, pairs[i].t_ref);
          const auto pair_feat = concat(f_p, f_q);
          const std::size_t nw = bundle.local.relative_head.w.size();
          double& g_b = grads[nw];
          bundle.local.relative_head.accumulate_grad(pair_feat, dy * inv_batch, g_rel_w(0, nw), g_b);
        } else {
          const EmotionFeatures* f = nullptr;
          EmotionFeatures scratch;
          if (augmentation_active) {
            scratch = emotion_pooled(bundle.emotion, augment_for_backbone(s.image, cfg, pp, rng));
            f = &scratch;
          } else {
            if (!input_feat_ready[i]) {
              emotion_feat_cache[i] = emotion_pooled(bundle.emotion, preprocess_image(s.image, pp));
              input_feat_ready[i] = true;
            }
            f = &emotion_feat_cache[i];
          }
          const auto out = forward_emotion_from_features(bundle.emotion, *f);
          sample_loss = loss_emotion(out.target, out.assist, out.diff, s.t_target, s.t_assist);
          const auto dy =
              loss_emotion_grad(out.target, out.assist, out.diff, s.t_target, s.t_assist);
          // layout: [target.w(d), target.b, assist.w(d), assist.b, w1, b1, w2, b2]
          const auto& diff_head = bundle.emotion.head_diff;
          std::size_t off = 0;
          double& g_tb = grads[off + d];
          bundle.emotion.head_target.accumulate_grad(f->target, dy.d_target * inv_batch,
                                                     g_rel_w(off, d), g_tb);
          off += d + 1;
          double& g_ab = grads[off + d];
          bundle.emotion.head_assist.accumulate_grad(f->assist, dy.d_assist * inv_batch,
                                                     g_rel_w(off, d), g_ab);
          off += d + 1;
          const std::size_t n_w1 = diff_head.w1.size();
          const std::size_t n_b1 = diff_head.b1.size();
          const std::size_t n_w2 = diff_head.w2.size();
          double& g_b2 = grads[off + n_w1 + n_b1 + n_w2];
          diff_head.accumulate_grad(f->diff, dy.d_diff * inv_batch, g_rel_w(off, n_w1),
                                    g_rel_w(off + n_w1, n_b1), g_rel_w(off + n_w1 + n_b1, n_w2),
                                    g_b2);
        }

        if (!std::isfinite(sample_loss))
          throw std::runtime_error("train_stage: non-finite loss at stage " + std::to_string(stage) +
                                   ", epoch " + std::to_string(epoch) + ", image '" + s.image_id +
                                   "'");
        epoch_loss += sample_loss;
      }

      adam.step(params, grads);
      if (stage == 1)
        set_global_params(bundle.global, params);
      else if (stage == 2)
        set_local_params(bundle.local, params);
      else
        set_emotion_params(bundle.emotion, params);
    }

    EpochRecord rec;
    rec.stage = stage;
    rec.epoch = epoch;
    rec.mean_loss = epoch_loss / static_cast<double>(inputs.size());
    rec.timestamp = utc_timestamp();
    result.history.push_back(std::move(rec));
  }

  bundle.completed_stages.insert(stage);
  return result;
}

void append_history(const std::string& path, const std::vector<EpochRecord>& records) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot write history: " + path);
  if (fresh) f << "stage\tepoch\tloss\ttimestamp\n";
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof(buf), "%.17g", r.mean_loss);
    f << r.stage << '\t' << r.epoch << '\t' << buf << '\t' << r.timestamp << '\n';
  }
}

}  // namespace bhia

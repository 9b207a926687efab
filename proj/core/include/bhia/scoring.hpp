#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "bhia/model.hpp"
#include "bhia/retrieval.hpp"
#include "bhia/types.hpp"

namespace bhia {

struct FinalScore {
  std::string image_id;
  std::string reference_id;
  Dimension dimension = Dimension::Beauty;
  PredictionBreakdown parts;
  double score_cr = 0.0;    // content-referenced component
  double score_ea = 0.0;    // emotion-assisted component
  double score_sum = 0.0;   // score_cr + score_ea
  double calibrated = 0.0;  // score_sum / 4, back in score units
};

// score_cr = global_input + global_rel + local_rel + 2 * ref_truth
// score_ea = emo_assist + emo_diff
// Under a perfect predictor each component estimates the input's ground
// truth, so score_sum approaches 4x the true score; /4 restores units.
FinalScore fuse_scores(const PredictionBreakdown& parts);

// Maps a reference image id to its raw pixels.
using ImageResolver = std::function<Tensor(const std::string& id)>;

// Immutable scoring pipeline: retrieval, all forward passes, fusion.
class Scorer {
 public:
  Scorer(std::shared_ptr<const ModelBundle> model, std::shared_ptr<const ReferenceIndex> index,
         std::shared_ptr<const FeatureExtractor> retrieval_backbone, Preprocess retrieval_pp,
         ImageResolver resolve_reference);

  FinalScore score_image(const std::string& image_id, const Tensor& image_rgb) const;

  Dimension dimension() const { return model_->spec.dimension; }

 private:
  std::shared_ptr<const ModelBundle> model_;
  std::shared_ptr<const ReferenceIndex> index_;
  std::shared_ptr<const FeatureExtractor> retrieval_backbone_;
  Preprocess retrieval_pp_;
  ImageResolver resolve_reference_;
};

enum class CombineMode { Beauty, Happy, Both };

std::string to_string(CombineMode m);
CombineMode combine_mode_from_string(const std::string& s);

struct RankEntry {
  int rank = 0;
  double key = 0.0;  // calibrated score, or the mean of both dimensions
  FinalScore primary;
  std::optional<FinalScore> secondary;  // the happy score under CombineMode::Both
};

// Scores every image and returns the top k, sorted by key descending with
// image-id ties ascending. `happy_scorer` is required for CombineMode::Both.
std::vector<RankEntry> rank_images(const std::vector<std::pair<std::string, Tensor>>& images,
                                   const Scorer* beauty_scorer, const Scorer* happy_scorer,
                                   CombineMode mode, std::size_t k);

void save_scores(const std::string& path, const std::vector<FinalScore>& scores);
void save_ranking(const std::string& path, const std::vector<RankEntry>& entries, CombineMode mode);

}  // namespace bhia

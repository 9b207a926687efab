#include "bhia/scoring.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace bhia {

FinalScore fuse_scores(const PredictionBreakdown& parts) {
  FinalScore s;
  s.parts = parts;
  s.score_cr = parts.global_input + parts.global_rel + parts.local_rel + 2.0 * parts.ref_truth;
  s.score_ea = parts.emo_assist + parts.emo_diff;
  s.score_sum = s.score_cr + s.score_ea;
  s.calibrated = s.score_sum / 4.0;
  return s;
}

Scorer::Scorer(std::shared_ptr<const ModelBundle> model,
               std::shared_ptr<const ReferenceIndex> index,
               std::shared_ptr<const FeatureExtractor> retrieval_backbone, Preprocess retrieval_pp,
               ImageResolver resolve_reference)
    : model_(std::move(model)),
      index_(std::move(index)),
      retrieval_backbone_(std::move(retrieval_backbone)),
      retrieval_pp_(retrieval_pp),
      resolve_reference_(std::move(resolve_reference)) {
  if (!model_ || !index_ || !retrieval_backbone_ || !resolve_reference_)
    throw std::invalid_argument("Scorer: all components are required");
  if (index_->dimension() != model_->spec.dimension)
    throw std::invalid_argument("Scorer: index dimension '" + to_string(index_->dimension()) +
                                "' does not match model dimension '" +
                                to_string(model_->spec.dimension) + "'");
}

FinalScore Scorer::score_image(const std::string& image_id, const Tensor& image_rgb) const {
  ReferenceIndex::Hit hit;
  try {
    hit = retrieve_reference(image_rgb, *index_, *retrieval_backbone_, retrieval_pp_);
  } catch (const std::exception& e) {
    throw std::runtime_error("scoring '" + image_id + "': " + e.what());
  }
  const Tensor ref_rgb = resolve_reference_(hit.id);
  FinalScore s = fuse_scores(forward_all(*model_, image_rgb, ref_rgb, hit.score));
  s.image_id = image_id;
  s.reference_id = hit.id;
  s.dimension = model_->spec.dimension;
  return s;
}

std::string to_string(CombineMode m) {
  switch (m) {
    case CombineMode::Beauty: return "beauty";
    case CombineMode::Happy: return "happy";
    case CombineMode::Both: return "both";
  }
  throw std::logic_error("unreachable");
}

CombineMode combine_mode_from_string(const std::string& s) {
  if (s == "beauty") return CombineMode::Beauty;
  if (s == "happy") return CombineMode::Happy;
  if (s == "both") return CombineMode::Both;
  throw std::invalid_argument("unknown combine mode '" + s + "' (expected beauty|happy|both)");
}

std::vector<RankEntry> rank_images(const std::vector<std::pair<std::string, Tensor>>& images,
                                   const Scorer* beauty_scorer, const Scorer* happy_scorer,
                                   CombineMode mode, std::size_t k) {
  if (k < 1) throw std::invalid_argument("rank_images: k must be >= 1");
  const Scorer* primary = mode == CombineMode::Happy ? happy_scorer : beauty_scorer;
  if (!primary) throw std::invalid_argument("rank_images: missing scorer for " + to_string(mode));
  if (mode == CombineMode::Both && (!beauty_scorer || !happy_scorer))
    throw std::invalid_argument("rank_images: combine mode 'both' needs both scorers");

  std::vector<RankEntry> entries;
  entries.reserve(images.size());
  for (const auto& [id, rgb] : images) {
    RankEntry e;
    e.primary = primary->score_image(id, rgb);
    if (mode == CombineMode::Both) {
      e.secondary = happy_scorer->score_image(id, rgb);
      e.key = (e.primary.calibrated + e.secondary->calibrated) / 2.0;
    } else {
      e.key = e.primary.calibrated;
    }
    entries.push_back(std::move(e));
  }

  std::sort(entries.begin(), entries.end(), [](const RankEntry& a, const RankEntry& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.primary.image_id < b.primary.image_id;
  });
  if (entries.size() > k) entries.resize(k);
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i].rank = static_cast<int>(i) + 1;
  return entries;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_score_columns(std::ofstream& f, const FinalScore& s) {
  f << s.image_id << '\t' << s.reference_id << '\t' << to_string(s.dimension) << '\t'
    << fmt(s.parts.global_input) << '\t' << fmt(s.parts.global_ref) << '\t'
    << fmt(s.parts.global_rel) << '\t' << fmt(s.parts.local_rel) << '\t'
    << fmt(s.parts.emo_target) << '\t' << fmt(s.parts.emo_assist) << '\t'
    << fmt(s.parts.emo_diff) << '\t' << fmt(s.parts.ref_truth) << '\t' << fmt(s.score_cr) << '\t'
    << fmt(s.score_ea) << '\t' << fmt(s.score_sum) << '\t' << fmt(s.calibrated);
}

constexpr const char* kScoreHeader =
    "image_id\treference_id\tdimension\tglobal_input\tglobal_ref\tglobal_rel\tlocal_rel\t"
    "emo_target\temo_assist\temo_diff\tref_truth\tscore_cr\tscore_ea\tscore_sum\tcalibrated";

}  // namespace

void save_scores(const std::string& path, const std::vector<FinalScore>& scores) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write scores: " + path);
  f << "# bhia scores v1\n" << kScoreHeader << "\n";
  for (const auto& s : scores) {
    write_score_columns(f, s);
    f << '\n';
  }
}

void save_ranking(const std::string& path, const std::vector<RankEntry>& entries,
                  CombineMode mode) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write ranking: " + path);
  f << "# bhia ranking v1 combine=" << to_string(mode) << "\n";
  f << "rank\tkey\t" << kScoreHeader;
  if (mode == CombineMode::Both) f << "\thappy_calibrated\thappy_reference_id";
  f << "\n";
  for (const auto& e : entries) {
    f << e.rank << '\t' << fmt(e.key) << '\t';
    write_score_columns(f, e.primary);
    if (mode == CombineMode::Both) {
      f << '\t' << fmt(e.secondary->calibrated) << '\t' << e.secondary->reference_id;
    }
    f << '\n';
  }
}

}  // namespace bhia

// bhia command-line pipeline: curate -> ingest -> clean -> stats -> split ->
// index -> train -> evaluate -> score / rank. One JSON config drives every
// stage; --set key=value overrides individual fields (flags win).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "bhia/config.hpp"
#include "bhia/curation.hpp"
#include "bhia/image_io.hpp"
#include "bhia/metrics.hpp"
#include "bhia/model.hpp"
#include "bhia/ratings.hpp"
#include "bhia/retrieval.hpp"
#include "bhia/scoring.hpp"
#include "bhia/training.hpp"

namespace fs = std::filesystem;
using namespace bhia;

namespace {

std::string work_path(const PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.paths.work) / name).string();
}

std::string dim_name(const PipelineConfig& cfg, const std::string& stem, const std::string& ext,
                     Dimension dim) {
  return work_path(cfg, stem + "_" + to_string(dim) + ext);
}

void require_artifact(const std::string& path, const std::string& producer) {
  if (!fs::exists(path))
    throw std::runtime_error("missing artifact " + path + ": run `bhia " + producer + "` first");
}

void ensure_work_dir(const PipelineConfig& cfg) { fs::create_directories(cfg.paths.work); }

// id -> path map of the curated corpus.
std::map<std::string, std::string> corpus_paths(const PipelineConfig& cfg) {
  const std::string manifest = work_path(cfg, "curation_manifest.tsv");
  require_artifact(manifest, "curate");
  std::map<std::string, std::string> out;
  for (const auto& e : read_curation_manifest(manifest))
    if (e.kept) out[e.record.id] = e.record.path;
  return out;
}

std::map<std::string, double> label_scores(const std::vector<LabeledImage>& labels, Dimension dim) {
  std::map<std::string, double> out;
  for (const auto& l : labels) out[l.image_id] = l.score(dim);
  return out;
}

struct ScorerParts {
  std::shared_ptr<const ModelBundle> model;
  std::shared_ptr<const ReferenceIndex> index;
  std::shared_ptr<const FeatureExtractor> retrieval_backbone;
  std::unique_ptr<Scorer> scorer;
};

ScorerParts make_scorer(const PipelineConfig& cfg, Dimension dim) {
  const std::string ckpt = dim_name(cfg, "checkpoints", "", dim);
  require_artifact(ckpt + "/manifest.json", "train --set dimension=" + to_string(dim));
  auto model = std::make_shared<ModelBundle>(load_bundle(ckpt));
  for (int s : {1, 2, 3})
    if (!model->completed_stages.count(s))
      throw std::runtime_error("checkpoint " + ckpt + " is missing stage " + std::to_string(s) +
                               ": run `bhia train` to completion first");

  const std::string index_path = dim_name(cfg, "index_full", ".bhix", dim);
  require_artifact(index_path, "index --set dimension=" + to_string(dim));
  auto index = std::make_shared<ReferenceIndex>(ReferenceIndex::load(index_path));

  auto backbone = make_extractor(cfg.backbones.retrieval);
  auto paths = std::make_shared<std::map<std::string, std::string>>(corpus_paths(cfg));
  auto cache = std::make_shared<std::map<std::string, Tensor>>();
  ImageResolver resolve = [paths, cache](const std::string& id) -> Tensor {
    const auto hit = cache->find(id);
    if (hit != cache->end()) return hit->second;
    const auto it = paths->find(id);
    if (it == paths->end())
      throw std::runtime_error("reference image '" + id + "' not found in curated corpus");
    Tensor t = load_image_rgb(it->second);
    (*cache)[id] = t;
    return t;
  };

  ScorerParts parts;
  parts.scorer = std::make_unique<Scorer>(model, index, backbone, cfg.preprocess(), resolve);
  parts.model = model;
  parts.index = index;
  parts.retrieval_backbone = backbone;
  return parts;
}

// --- subcommands -------------------------------------------------------------

int cmd_curate(const PipelineConfig& cfg) {
  if (cfg.paths.corpus.empty())
    throw std::runtime_error("paths.corpus is not set; point it at the raw image directory");
  ensure_work_dir(cfg);

  CurationParams params;
  params.ratio = cfg.curation.ratio;
  params.ratio_tol = cfg.curation.ratio_tol;
  params.min_width = cfg.curation.min_width;
  params.min_height = cfg.curation.min_height;
  params.size_slack = cfg.curation.size_slack;
  params.bins_per_channel = cfg.curation.bins_per_channel;
  params.dedup_threshold = cfg.curation.dedup_threshold;

  Rng rng = Rng::substream(cfg.seed, "curation");
  const auto outcome = curate_directory(cfg.paths.corpus, params, rng);

  const std::string manifest = work_path(cfg, "curation_manifest.tsv");
  write_curation_manifest(manifest, outcome);
  write_run_manifest(work_path(cfg, "curate.manifest.json"), "curate", cfg, {cfg.paths.corpus},
                     {manifest});

  std::size_t geometry = 0, dup = 0, unreadable = 0;
  for (const auto& e : outcome.entries) {
    if (e.reason == "geometry") ++geometry;
    if (e.reason.rfind("duplicate-of:", 0) == 0) ++dup;
    if (e.reason.rfind("unreadable", 0) == 0) ++unreadable;
  }
  std::cout << "curate: scanned " << outcome.entries.size() << ", kept " << outcome.kept.size()
            << " (dropped: " << geometry << " geometry, " << dup << " duplicate, " << unreadable
            << " unreadable)\n"
            << "  manifest: " << manifest << "\n";
  return 0;
}

int cmd_ingest(const PipelineConfig& cfg) {
  if (cfg.paths.ratings.empty())
    throw std::runtime_error("paths.ratings is not set; point it at the rating table");
  if (!fs::exists(cfg.paths.ratings))
    throw std::runtime_error("rating table not found: " + cfg.paths.ratings);
  ensure_work_dir(cfg);

  const auto res = ingest_ratings(cfg.paths.ratings, cfg.cleaning.min_dwell_seconds);
  const std::string valid_path = work_path(cfg, "ratings_valid.tsv");
  save_ratings(valid_path, res.records);

  const std::string rejects_path = work_path(cfg, "ratings_rejects.tsv");
  {
    std::ofstream f(rejects_path);
    f << "line\treason\n";
    for (const auto& r : res.rejects) f << r.line_number << '\t' << r.reason << '\n';
  }
  write_run_manifest(work_path(cfg, "ingest.manifest.json"), "ingest", cfg, {cfg.paths.ratings},
                     {valid_path, rejects_path});

  std::size_t flagged = 0;
  for (const auto& r : res.records)
    if (!r.valid) ++flagged;
  std::cout << "ingest: " << res.records.size() << " records (" << flagged
            << " flagged short-dwell), " << res.rejects.size() << " rejected rows\n";
  return 0;
}

int cmd_clean(const PipelineConfig& cfg) {
  const std::string valid_path = work_path(cfg, "ratings_valid.tsv");
  require_artifact(valid_path, "ingest");

  const auto ratings = load_ratings(valid_path);
  const auto res = clean_ratings(ratings, cfg.cleaning.sigma_k, cfg.cleaning.min_valid);

  const std::string labels_path = work_path(cfg, "labels.tsv");
  save_labels(labels_path, res.labels);
  const std::string clean_path = work_path(cfg, "ratings_clean.tsv");
  save_ratings(clean_path, res.clean);
  write_run_manifest(work_path(cfg, "clean.manifest.json"), "clean", cfg, {valid_path},
                     {labels_path, clean_path});

  std::cout << "clean: " << res.images_in << " images in, " << res.images_kept << " kept; removed "
            << res.votes_removed_beauty << " beauty / " << res.votes_removed_happy
            << " happy outlier votes\n"
            << "  labels: " << labels_path << "\n";
  return 0;
}

std::string render_stats_text(const StatsReport& rep) {
  std::ostringstream os;
  os << "images: " << rep.n << "\n";
  os << "pearson(beauty, happy): ";
  if (rep.pearson) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *rep.pearson);
    os << buf;
  } else {
    os << "undefined";
  }
  os << "\n";
  os << "difference distribution (share of images with |beauty - happy| < bound):\n";
  os << "  bound   ";
  for (const auto& [b, f] : rep.gap_fractions) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%7.2f", b);
    os << buf;
  }
  os << "\n  images  ";
  for (const auto& [b, f] : rep.gap_fractions) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%6.2f%%", f * 100.0);
    os << buf;
  }
  os << "\n";
  return os.str();
}

int cmd_stats(const PipelineConfig& cfg, std::string labels_path) {
  if (labels_path.empty()) labels_path = work_path(cfg, "labels.tsv");
  require_artifact(labels_path, "clean");
  const auto labels = load_labels(labels_path);
  if (labels.empty()) throw std::runtime_error("no labels in " + labels_path);
  const auto rep = score_statistics(labels);

  ensure_work_dir(cfg);
  const std::string json_path = work_path(cfg, "stats.json");
  {
    std::ofstream f(json_path);
    f << "{\n  \"n\": " << rep.n << ",\n  \"pearson\": ";
    if (rep.pearson) {
      char buf[40];
      std::snprintf(buf, sizeof(buf), "%.17g", *rep.pearson);
      f << buf;
    } else {
      f << "null";
    }
    f << ",\n  \"gap_fractions\": [";
    for (std::size_t i = 0; i < rep.gap_fractions.size(); ++i) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%s{\"bound\": %.17g, \"fraction\": %.17g}",
                    i ? ", " : "", rep.gap_fractions[i].first, rep.gap_fractions[i].second);
      f << buf;
    }
    f << "],\n  \"beauty_hist\": [";
    for (std::size_t i = 0; i < rep.beauty_hist.size(); ++i) f << (i ? ", " : "") << rep.beauty_hist[i];
    f << "],\n  \"happy_hist\": [";
    for (std::size_t i = 0; i < rep.happy_hist.size(); ++i) f << (i ? ", " : "") << rep.happy_hist[i];
    f << "]\n}\n";
  }
  const std::string text = render_stats_text(rep);
  const std::string text_path = work_path(cfg, "stats.txt");
  {
    std::ofstream f(text_path);
    f << text;
  }

  std::vector<std::string> artifacts = {json_path, text_path};

  // Optional rater-attribute breakdown when profiles are configured.
  const std::string valid_path = work_path(cfg, "ratings_valid.tsv");
  if (!cfg.paths.profiles.empty() && fs::exists(cfg.paths.profiles) && fs::exists(valid_path)) {
    const auto profiles = ingest_profiles(cfg.paths.profiles);
    auto ratings = load_ratings(valid_path);
    std::erase_if(ratings, [](const RatingRecord& r) { return !r.valid; });
    const auto attr = rater_attribute_breakdown(ratings, profiles);
    const std::string attr_path = work_path(cfg, "attributes.tsv");
    std::ofstream f(attr_path);
    f << "attribute\tlevel\tn\tmean_beauty\tmean_happy\n";
    for (const auto& [name, levels] : attr.attributes) {
      for (const auto& l : levels) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%.17g\t%.17g", l.mean_beauty, l.mean_happy);
        f << name << '\t' << l.level << '\t' << l.n_ratings << '\t' << buf << '\n';
      }
    }
    artifacts.push_back(attr_path);
  }

  write_run_manifest(work_path(cfg, "stats.manifest.json"), "stats", cfg, {labels_path}, artifacts);
  std::cout << text;
  return 0;
}

int cmd_split(const PipelineConfig& cfg) {
  const std::string labels_path = work_path(cfg, "labels.tsv");
  require_artifact(labels_path, "clean");
  const auto labels = load_labels(labels_path);

  Rng sub = Rng::substream(cfg.seed, "split." + to_string(cfg.dimension));
  const auto manifest =
      make_splits(labels, cfg.dimension, cfg.split.ref_lo, cfg.split.ref_hi, cfg.split.ref_count,
                  cfg.split.ref_train, cfg.split.input_train, sub.next_u64());

  const std::string path = dim_name(cfg, "splits", ".tsv", cfg.dimension);
  save_split_manifest(path, manifest);
  write_run_manifest(work_path(cfg, "split.manifest.json"), "split", cfg, {labels_path}, {path});

  const auto counts = manifest.counts();
  std::cout << "split (" << to_string(cfg.dimension) << "): ";
  for (const auto role :
       {SplitRole::RefTrain, SplitRole::RefTest, SplitRole::InputTrain, SplitRole::InputTest}) {
    const auto it = counts.find(role);
    std::cout << to_string(role) << "=" << (it == counts.end() ? 0 : it->second) << " ";
  }
  std::cout << "\n  manifest: " << path << "\n";
  return 0;
}

int cmd_index(const PipelineConfig& cfg) {
  const std::string splits_path = dim_name(cfg, "splits", ".tsv", cfg.dimension);
  require_artifact(splits_path, "split");
  const std::string labels_path = work_path(cfg, "labels.tsv");
  require_artifact(labels_path, "clean");

  const auto splits = load_split_manifest(splits_path);
  const auto labels = load_labels(labels_path);
  const auto scores = label_scores(labels, cfg.dimension);
  const auto paths = corpus_paths(cfg);
  const auto backbone = make_extractor(cfg.backbones.retrieval);
  const auto metric = distance_metric_from_string(cfg.backbones.retrieval_metric);

  const auto collect = [&](const std::vector<SplitRole>& roles) {
    std::vector<std::pair<ImageRecord, double>> refs;
    for (const auto& [id, role] : splits.entries) {
      if (std::find(roles.begin(), roles.end(), role) == roles.end()) continue;
      const auto p = paths.find(id);
      if (p == paths.end())
        throw std::runtime_error("split image '" + id + "' not found in curated corpus");
      const auto s = scores.find(id);
      if (s == scores.end()) throw std::runtime_error("split image '" + id + "' has no label");
      const auto info = probe_image(p->second);
      if (!info) throw std::runtime_error("cannot decode reference image: " + p->second);
      refs.emplace_back(ImageRecord::make(id, p->second, info->width, info->height), s->second);
    }
    return refs;
  };

  // Training retrieves against ref-train only; inference against the full
  // reference set. Both indexes are built here.
  const auto train_refs = collect({SplitRole::RefTrain});
  const auto full_refs = collect({SplitRole::RefTrain, SplitRole::RefTest});
  const Preprocess pp = cfg.preprocess();
  const auto idx_train = build_index(train_refs, *backbone, pp, metric, cfg.dimension);
  const auto idx_full = build_index(full_refs, *backbone, pp, metric, cfg.dimension);

  const std::string train_path = dim_name(cfg, "index_train", ".bhix", cfg.dimension);
  const std::string full_path = dim_name(cfg, "index_full", ".bhix", cfg.dimension);
  idx_train.save(train_path);
  idx_full.save(full_path);
  write_run_manifest(work_path(cfg, "index.manifest.json"), "index", cfg,
                     {splits_path, labels_path}, {train_path, full_path});

  std::cout << "index (" << to_string(cfg.dimension) << "): ref-train " << idx_train.size()
            << " entries, full " << idx_full.size() << " entries, dim " << idx_train.dim() << "\n";
  return 0;
}

std::vector<EpochRecord> load_history(const std::string& path) {
  std::vector<EpochRecord> out;
  std::ifstream f(path);
  if (!f) return out;
  std::string line;
  bool header = true;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::istringstream ss(line);
    EpochRecord r;
    std::string loss;
    ss >> r.stage >> r.epoch >> loss >> r.timestamp;
    r.mean_loss = std::stod(loss);
    out.push_back(std::move(r));
  }
  return out;
}

int cmd_train(const PipelineConfig& cfg, const std::string& stage_arg) {
  const std::string splits_path = dim_name(cfg, "splits", ".tsv", cfg.dimension);
  require_artifact(splits_path, "split");
  const std::string labels_path = work_path(cfg, "labels.tsv");
  require_artifact(labels_path, "clean");
  const std::string index_path = dim_name(cfg, "index_train", ".bhix", cfg.dimension);
  require_artifact(index_path, "index");

  std::vector<int> stages;
  if (stage_arg == "all") {
    stages = {1, 2, 3};
  } else {
    const int s = std::stoi(stage_arg);
    if (s < 1 || s > 3) throw std::runtime_error("--stage must be 1, 2, 3 or all");
    stages = {s};
  }

  const auto splits = load_split_manifest(splits_path);
  const auto labels = load_labels(labels_path);
  const auto paths = corpus_paths(cfg);
  const Dimension dim = cfg.dimension;
  const auto target_scores = label_scores(labels, dim);
  const auto assist_scores = label_scores(labels, assistant_of(dim));

  const auto index = ReferenceIndex::load(index_path);
  const auto retrieval_backbone = make_extractor(cfg.backbones.retrieval);

  // Training samples: all input-train images with both ground truths.
  std::vector<TrainSample> samples;
  for (const auto& id : splits.ids_with_role(SplitRole::InputTrain)) {
    const auto p = paths.find(id);
    if (p == paths.end()) throw std::runtime_error("train image '" + id + "' not in corpus");
    TrainSample s;
    s.image_id = id;
    s.image = load_image_rgb(p->second);
    s.t_target = target_scores.at(id);
    s.t_assist = assist_scores.at(id);
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw std::runtime_error("no input-train images to train on");

  std::map<std::string, Tensor> ref_images;
  for (const auto& e : index.entries()) {
    const auto p = paths.find(e.id);
    if (p == paths.end()) throw std::runtime_error("reference image '" + e.id + "' not in corpus");
    ref_images[e.id] = load_image_rgb(p->second);
  }

  const std::string ckpt = dim_name(cfg, "checkpoints", "", dim);
  const int first = stages.front();
  ModelBundle bundle = (first == 1 || !fs::exists(ckpt + "/manifest.json"))
                           ? make_model_bundle(cfg.model_spec())
                           : load_bundle(ckpt);

  // Re-running a stage restarts its module from the seeded init so identical
  // configs reproduce identical checkpoints; later stages are invalidated.
  const ModelBundle fresh = make_model_bundle(cfg.model_spec());
  if (first >= 2) set_local_params(bundle.local, local_params(fresh.local));
  if (first >= 1) {
    set_emotion_params(bundle.emotion, emotion_params(fresh.emotion));
    if (first == 1) {
      set_global_params(bundle.global, global_params(fresh.global));
      set_local_params(bundle.local, local_params(fresh.local));
    }
  }
  for (auto it = bundle.completed_stages.begin(); it != bundle.completed_stages.end();) {
    if (*it >= first)
      it = bundle.completed_stages.erase(it);
    else
      ++it;
  }

  const std::string history_path = dim_name(cfg, "history", ".tsv", dim);
  auto history = load_history(history_path);
  std::erase_if(history, [&](const EpochRecord& r) { return r.stage >= first; });

  for (int stage : stages) {
    TrainConfig tc = cfg.train_config(stage);
    std::cout << "train (" << to_string(dim) << "): stage " << stage << ", " << tc.epochs
              << " epochs, batch " << tc.batch_size << ", lr " << tc.learning_rate << "\n";
    const auto result = train_stage(bundle, samples, index, *retrieval_backbone, cfg.preprocess(),
                                    ref_images, tc);
    history.insert(history.end(), result.history.begin(), result.history.end());
    const double first_loss = result.history.front().mean_loss;
    const double last_loss = result.history.back().mean_loss;
    std::cout << "  loss " << first_loss << " -> " << last_loss << "\n";
  }

  save_bundle(ckpt, bundle);
  fs::remove(history_path);
  append_history(history_path, history);
  write_run_manifest(work_path(cfg, "train.manifest.json"), "train", cfg,
                     {splits_path, labels_path, index_path}, {ckpt, history_path});
  std::cout << "  checkpoint: " << ckpt << "\n";
  return 0;
}

int cmd_evaluate(const PipelineConfig& cfg, const std::string& ablation_file) {
  ensure_work_dir(cfg);
  if (!ablation_file.empty()) {
    std::ifstream f(ablation_file);
    if (!f) throw std::runtime_error("cannot open ablation rows file: " + ablation_file);
    std::stringstream ss;
    ss << f.rdbuf();
    const auto table = ablation_from_json(ss.str());
    const std::string text = render_ablation_text(table);
    const std::string txt_path = work_path(cfg, "ablation.txt");
    const std::string json_path = work_path(cfg, "ablation.json");
    {
      std::ofstream out(txt_path);
      out << text;
    }
    {
      std::ofstream out(json_path);
      out << ablation_to_json(table);
    }
    write_run_manifest(work_path(cfg, "evaluate.manifest.json"), "evaluate", cfg, {ablation_file},
                       {txt_path, json_path});
    std::cout << text;
    return 0;
  }

  const std::string splits_path = dim_name(cfg, "splits", ".tsv", cfg.dimension);
  require_artifact(splits_path, "split");
  const std::string labels_path = work_path(cfg, "labels.tsv");
  require_artifact(labels_path, "clean");

  const auto parts = make_scorer(cfg, cfg.dimension);
  const auto splits = load_split_manifest(splits_path);
  const auto labels = load_labels(labels_path);
  const auto truth_of = label_scores(labels, cfg.dimension);
  const auto paths = corpus_paths(cfg);

  std::vector<double> pred, truth;
  std::vector<FinalScore> scores;
  for (const auto& id : splits.ids_with_role(SplitRole::InputTest)) {
    const auto p = paths.find(id);
    if (p == paths.end()) throw std::runtime_error("test image '" + id + "' not in corpus");
    const auto s = parts.scorer->score_image(id, load_image_rgb(p->second));
    pred.push_back(s.calibrated);
    truth.push_back(truth_of.at(id));
    scores.push_back(s);
  }
  const auto rep = compute_metrics(pred, truth, cfg.scoring.threshold);

  const std::string metrics_path = dim_name(cfg, "metrics", ".json", cfg.dimension);
  save_metrics(metrics_path, rep, cfg.dimension, cfg.scoring.threshold);
  const std::string scores_path = dim_name(cfg, "eval_scores", ".tsv", cfg.dimension);
  save_scores(scores_path, scores);
  write_run_manifest(work_path(cfg, "evaluate.manifest.json"), "evaluate", cfg,
                     {splits_path, labels_path}, {metrics_path, scores_path});

  char buf[160];
  std::snprintf(buf, sizeof(buf), "evaluate (%s, n=%zu): ACC %.2f%%  MSE %.4f  SRCC %s  LCC %s\n",
                to_string(cfg.dimension).c_str(), rep.n, rep.acc * 100.0, rep.mse,
                rep.srcc ? std::to_string(*rep.srcc).c_str() : "undefined",
                rep.lcc ? std::to_string(*rep.lcc).c_str() : "undefined");
  std::cout << buf << "  metrics: " << metrics_path << "\n";
  return 0;
}

int cmd_score(const PipelineConfig& cfg, const std::vector<std::string>& images) {
  if (images.empty()) throw std::runtime_error("score: pass at least one --image");
  const auto parts = make_scorer(cfg, cfg.dimension);

  std::vector<FinalScore> scores;
  for (const auto& path : images) {
    const auto img = try_load_image_rgb(path);
    if (!img) throw std::runtime_error("cannot decode image: " + path);
    scores.push_back(parts.scorer->score_image(fs::path(path).filename().string(), *img));
  }

  const std::string out_path = dim_name(cfg, "scores", ".tsv", cfg.dimension);
  save_scores(out_path, scores);
  write_run_manifest(work_path(cfg, "score.manifest.json"), "score", cfg, images, {out_path});

  for (const auto& s : scores) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-24s %s=%.3f (raw %.3f, reference %s at %.3f)\n",
                  s.image_id.c_str(), to_string(s.dimension).c_str(), s.calibrated, s.score_sum,
                  s.reference_id.c_str(), s.parts.ref_truth);
    std::cout << buf;
  }
  std::cout << "  scores: " << out_path << "\n";
  return 0;
}

int cmd_rank(const PipelineConfig& cfg, std::string dir, const std::string& combine_arg) {
  if (dir.empty()) dir = cfg.paths.corpus;
  if (dir.empty()) throw std::runtime_error("rank: pass --dir or set paths.corpus");
  const CombineMode mode = combine_mode_from_string(
      combine_arg.empty() ? to_string(cfg.dimension) : combine_arg);

  std::unique_ptr<ScorerParts> beauty, happy;
  if (mode != CombineMode::Happy)
    beauty = std::make_unique<ScorerParts>(make_scorer(cfg, Dimension::Beauty));
  if (mode != CombineMode::Beauty)
    happy = std::make_unique<ScorerParts>(make_scorer(cfg, Dimension::Happy));

  std::vector<std::pair<std::string, Tensor>> images;
  for (const auto& rel : list_image_files(dir)) {
    const std::string path = (fs::path(dir) / rel).string();
    const auto img = try_load_image_rgb(path);
    if (!img) {
      std::cerr << "warning: skipping unreadable image " << path << "\n";
      continue;
    }
    images.emplace_back(rel, std::move(*img));
  }
  if (images.empty()) std::cerr << "warning: no readable images under " << dir << "\n";

  const auto ranked =
      rank_images(images, beauty ? beauty->scorer.get() : nullptr,
                  happy ? happy->scorer.get() : nullptr, mode, cfg.scoring.top_k);

  const std::string out_path = work_path(cfg, "ranked.tsv");
  save_ranking(out_path, ranked, mode);
  write_run_manifest(work_path(cfg, "rank.manifest.json"), "rank", cfg, {dir}, {out_path});

  for (const auto& e : ranked) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%3d. %-28s %s=%.3f\n", e.rank, e.primary.image_id.c_str(),
                  to_string(mode).c_str(), e.key);
    std::cout << buf;
  }
  std::cout << "  ranking: " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bhia: beautifulness and happiness image assessment pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("--set", overrides, "override a config key, e.g. --set cleaning.sigma_k=2.5");

  // Convenience mirrors of common keys; they are folded into --set.
  std::string opt_seed, opt_work, opt_dimension, opt_corpus, opt_ratings, opt_profiles;
  app.add_option("--seed", opt_seed, "master seed (mirrors config key 'seed')");
  app.add_option("--work", opt_work, "work directory (mirrors 'paths.work')");
  app.add_option("--dimension", opt_dimension, "beauty|happy (mirrors 'dimension')");
  app.add_option("--corpus", opt_corpus, "raw image directory (mirrors 'paths.corpus')");
  app.add_option("--ratings", opt_ratings, "rating table (mirrors 'paths.ratings')");
  app.add_option("--profiles", opt_profiles, "profile table (mirrors 'paths.profiles')");

  auto* c_curate = app.add_subcommand("curate", "filter and dedup the raw image corpus");
  auto* c_ingest = app.add_subcommand("ingest", "parse and validate the rating table");
  auto* c_clean = app.add_subcommand("clean", "remove outlier votes and aggregate labels");
  auto* c_stats = app.add_subcommand("stats", "score distributions and correlation report");
  std::string stats_labels;
  c_stats->add_option("--labels", stats_labels, "labels file (defaults to work/labels.tsv)");
  auto* c_split = app.add_subcommand("split", "reference/input train/test split");
  auto* c_index = app.add_subcommand("index", "build the reference retrieval indexes");
  auto* c_train = app.add_subcommand("train", "three-stage model training");
  std::string stage_arg = "all";
  c_train->add_option("--stage", stage_arg, "1|2|3|all (default all)");
  auto* c_eval = app.add_subcommand("evaluate", "metrics on the input-test split");
  std::string ablation_file;
  c_eval->add_option("--ablation", ablation_file, "render an ablation table from metric rows JSON");
  auto* c_score = app.add_subcommand("score", "score individual images");
  std::vector<std::string> score_images;
  c_score->add_option("--image", score_images, "image file to score (repeatable)");
  auto* c_rank = app.add_subcommand("rank", "rank a directory of images");
  std::string rank_dir, rank_combine;
  c_rank->add_option("--dir", rank_dir, "directory to rank (defaults to paths.corpus)");
  c_rank->add_option("--combine", rank_combine, "beauty|happy|both (defaults to config dimension)");

  CLI11_PARSE(app, argc, argv);

  if (!opt_seed.empty()) overrides.push_back("seed=" + opt_seed);
  if (!opt_work.empty()) overrides.push_back("paths.work=" + opt_work);
  if (!opt_dimension.empty()) overrides.push_back("dimension=" + opt_dimension);
  if (!opt_corpus.empty()) overrides.push_back("paths.corpus=" + opt_corpus);
  if (!opt_ratings.empty()) overrides.push_back("paths.ratings=" + opt_ratings);
  if (!opt_profiles.empty()) overrides.push_back("paths.profiles=" + opt_profiles);

  try {
    const PipelineConfig cfg = load_config(config_path, overrides);
    if (c_curate->parsed()) return cmd_curate(cfg);
    if (c_ingest->parsed()) return cmd_ingest(cfg);
    if (c_clean->parsed()) return cmd_clean(cfg);
    if (c_stats->parsed()) return cmd_stats(cfg, stats_labels);
    if (c_split->parsed()) return cmd_split(cfg);
    if (c_index->parsed()) return cmd_index(cfg);
    if (c_train->parsed()) return cmd_train(cfg, stage_arg);
    if (c_eval->parsed()) return cmd_evaluate(cfg, ablation_file);
    if (c_score->parsed()) return cmd_score(cfg, score_images);
    if (c_rank->parsed()) return cmd_rank(cfg, rank_dir, rank_combine);
  } catch (const std::exception& e) {
    std::cerr << "bhia: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

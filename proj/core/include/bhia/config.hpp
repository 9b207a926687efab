#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bhia/features.hpp"
#include "bhia/model.hpp"
#include "bhia/training.hpp"
#include "bhia/types.hpp"

namespace bhia {

// One config file drives every stage so that seeds and splits stay coherent
// across subcommands. Flag overrides (dotted key=value) win over the file.
struct PipelineConfig {
  int version = 1;
  std::uint64_t seed = 42;
  Dimension dimension = Dimension::Beauty;

  struct Paths {
    std::string corpus;
    std::string ratings;
    std::string profiles;
    std::string work = "work";
  } paths;

  struct Curation {
    double ratio = 1.5;
    double ratio_tol = 0.1;
    int min_width = 1800;
    int min_height = 1200;
    double size_slack = 0.05;
    int bins_per_channel = 8;
    double dedup_threshold = 0.25;  // the source procedure's preset is unpublished; this is a documented guess
  } curation;

  struct Cleaning {
    double sigma_k = 2.0;
    int min_valid = 5;
    double min_dwell_seconds = 3.0;
  } cleaning;

  struct Split {
    double ref_lo = 3.8;
    double ref_hi = 4.2;
    std::uint64_t ref_count = 2218;
    std::uint64_t ref_train = 1663;
    std::uint64_t input_train = 9320;
  } split;

  struct Backbones {
    BackboneSpec retrieval;
    BackboneSpec model;
    std::string retrieval_metric = "euclidean";
  } backbones;

  struct Model {
    int short_side = 256;
    int crop = 224;
    double center_frac = 0.5;
    double corner_frac = 0.4;
    int hidden = 256;
  } model;

  struct Stage {
    int epochs = 30;
    int batch_size = 16;
    double learning_rate = 1e-4;
  };

  struct Train {
    Stage stages[3];
    double flip_prob = 0.5;
    double scale_lo = 0.75;
    double scale_hi = 1.25;
    bool freeze_global = true;   // in stages after 1
    bool freeze_local = true;    // in stage 3
  } train;

  struct Scoring {
    double threshold = 4.0;
    std::uint64_t top_k = 10;
  } scoring;

  void validate() const;

  Preprocess preprocess() const { return Preprocess{model.short_side, model.crop}; }
  PatchScheme patches() const { return PatchScheme{model.center_frac, model.corner_frac}; }
  ModelSpec model_spec() const;
  TrainConfig train_config(int stage) const;
};

PipelineConfig default_config();
PipelineConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {});
std::string config_to_json(const PipelineConfig& cfg);
void save_config(const std::string& path, const PipelineConfig& cfg);

// FNV-1a over the canonical serialized form.
std::string config_hash(const PipelineConfig& cfg);

// Sidecar describing one subcommand run: tool version, timestamp, seed,
// config hash, inputs, artifacts and the effective config. Timestamps are
// the one field excluded from determinism comparisons.
void write_run_manifest(const std::string& path, const std::string& subcommand,
                        const PipelineConfig& cfg, const std::vector<std::string>& inputs,
                        const std::vector<std::string>& artifacts);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace bhia

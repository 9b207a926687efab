#pragma once

#include <string>
#include <utility>
#include <vector>

#include "bhia/rng.hpp"
#include "bhia/tensor.hpp"
#include "bhia/types.hpp"

namespace bhia {

// Joint RGB histogram over bins_per_channel^3 cells, normalized to sum 1.
struct ColorHistogram {
  int bins_per_channel = 0;
  std::vector<double> bins;
};

ColorHistogram compute_histogram(const Tensor& rgb, int bins_per_channel);

// L1 distance between normalized histograms; bounded in [0,2].
double histogram_distance(const ColorHistogram& a, const ColorHistogram& b);

// Keeps records with |aspect_ratio - ratio| <= ratio_tol, width >= min_w and
// height >= min_h. Input order preserved; pure, so idempotent.
std::vector<ImageRecord> filter_geometry(const std::vector<ImageRecord>& images, double ratio,
                                         double ratio_tol, int min_w, int min_h);

struct DedupResult {
  std::vector<ImageRecord> kept;
  // (survivor, victim) per resolved conflict, in resolution order.
  std::vector<std::pair<std::string, std::string>> dropped;
};

// Single greedy pass in input order. Each incoming image is compared against
// the kept set; for every kept image closer than `threshold` (strict <), a
// coin from `rng` picks the victim: 0 drops the incoming image, 1 drops the
// incumbent. An image joins the kept set only after surviving all conflicts,
// so no two kept images are closer than the threshold.
DedupResult dedup_by_histogram(const std::vector<ImageRecord>& images,
                               const std::vector<ColorHistogram>& histograms, double threshold,
                               Rng& rng);

// --- directory-level pipeline ------------------------------------------

struct CurationParams {
  double ratio = 1.5;
  double ratio_tol = 0.1;
  int min_width = 1800;   // base resolution bound before slack
  int min_height = 1200;
  double size_slack = 0.05;  // "nearly": effective min = base * (1 - slack)
  int bins_per_channel = 8;
  double dedup_threshold = 0.25;

  int effective_min_width() const;
  int effective_min_height() const;
};

struct CurationEntry {
  ImageRecord record;  // width/height are 0 for unreadable files
  bool kept = false;
  std::string reason;  // "-", "geometry", "duplicate-of:<id>", "unreadable:<detail>"
};

struct CurationOutcome {
  std::vector<CurationEntry> entries;  // every scanned file, input order
  std::vector<ImageRecord> kept;
};

// Recursive scan of a directory for decodable raster images; ids are
// lexicographically sorted relative paths, which fixes the pass order.
std::vector<std::string> list_image_files(const std::string& dir);

CurationOutcome curate_directory(const std::string& dir, const CurationParams& params, Rng& rng);

// Manifest: one TSV record per scanned file (id, path, width, height,
// status, reason). Lines starting with '#' are comments.
void write_curation_manifest(const std::string& path, const CurationOutcome& outcome);

struct ManifestEntry {
  ImageRecord record;
  bool kept = false;
  std::string reason;
};

std::vector<ManifestEntry> read_curation_manifest(const std::string& path);

}  // namespace bhia

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bhia/types.hpp"

namespace bhia {

// --- ingest ---------------------------------------------------------------

struct RejectedRow {
  std::size_t line_number = 0;  // 1-based, header included
  std::string reason;
};

struct IngestResult {
  std::vector<RatingRecord> records;
  std::vector<RejectedRow> rejects;
};

// Parses a delimited rating table (tab or comma, sniffed from the header).
// Required columns: image_id, rater_id, beauty, happy, dwell_seconds.
// A missing column is a hard error naming the column; malformed rows land in
// the rejects report. Records with dwell below `min_dwell_seconds` are kept
// but flagged invalid.
IngestResult ingest_ratings(const std::string& path, double min_dwell_seconds = 3.0);

// Profile table: rater_id plus one column per attribute (data-defined).
std::vector<RaterProfile> ingest_profiles(const std::string& path);

// --- cleaning ---------------------------------------------------------------

struct CleanResult {
  // Records of surviving images whose votes survived in both dimensions.
  std::vector<RatingRecord> clean;
  // One label per surviving image, sorted by image_id.
  std::vector<LabeledImage> labels;
  std::size_t images_in = 0;
  std::size_t images_kept = 0;
  std::size_t votes_removed_beauty = 0;
  std::size_t votes_removed_happy = 0;
};

// Per image and per dimension: votes farther than sigma_k population standard
// deviations from that image's mean are removed in a single pass, then images
// with fewer than min_valid surviving votes in either dimension are deleted.
// Only records flagged valid at ingest participate.
CleanResult clean_ratings(const std::vector<RatingRecord>& ratings, double sigma_k, int min_valid);

// --- statistics -------------------------------------------------------------

struct StatsReport {
  std::size_t n = 0;
  // Score histograms over [1,7].
  int hist_bins = 12;
  std::vector<std::size_t> beauty_hist;
  std::vector<std::size_t> happy_hist;
  std::optional<double> pearson;  // nullopt when undefined (n < 2 or zero variance)
  // (bound, fraction of images with |beauty - happy| < bound)
  std::vector<std::pair<double, double>> gap_fractions;
};

StatsReport score_statistics(const std::vector<LabeledImage>& labels,
                             const std::vector<double>& gap_bounds = {0.25, 0.5, 0.75, 1.0},
                             int hist_bins = 12);

// --- rater attribute breakdown ----------------------------------------------

struct AttributeLevelStats {
  std::string level;
  std::size_t n_ratings = 0;
  double mean_beauty = 0.0;
  double mean_happy = 0.0;
};

struct AttributeReport {
  // attribute name -> per-level stats, levels sorted lexicographically.
  std::vector<std::pair<std::string, std::vector<AttributeLevelStats>>> attributes;
};

// Ratings from raters without a profile are grouped under level "unknown".
AttributeReport rater_attribute_breakdown(const std::vector<RatingRecord>& ratings,
                                          const std::vector<RaterProfile>& profiles);

// --- splits -------------------------------------------------------------------

struct SplitManifest {
  Dimension dimension = Dimension::Beauty;
  std::vector<std::pair<std::string, SplitRole>> entries;  // sorted by image_id

  std::vector<std::string> ids_with_role(SplitRole role) const;
  std::map<SplitRole, std::size_t> counts() const;
};

// Reference set: ref_n images sampled uniformly (seeded) from those whose
// score in `dimension` lies in [ref_lo, ref_hi]; ref_train of them train, the
// rest test. Remaining images: input_train train, the rest test. The four
// sets partition the labels.
SplitManifest make_splits(const std::vector<LabeledImage>& labels, Dimension dimension,
                          double ref_lo, double ref_hi, std::size_t ref_n, std::size_t ref_train,
                          std::size_t input_train, std::uint64_t seed);

void save_split_manifest(const std::string& path, const SplitManifest& manifest);
SplitManifest load_split_manifest(const std::string& path);

// --- label and rating table persistence ---------------------------------------

void save_labels(const std::string& path, const std::vector<LabeledImage>& labels);
std::vector<LabeledImage> load_labels(const std::string& path);

void save_ratings(const std::string& path, const std::vector<RatingRecord>& records);
std::vector<RatingRecord> load_ratings(const std::string& path);

}  // namespace bhia

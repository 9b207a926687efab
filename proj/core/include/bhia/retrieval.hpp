#pragma once

#include <string>
#include <vector>

#include "bhia/features.hpp"
#include "bhia/tensor.hpp"
#include "bhia/types.hpp"

namespace bhia {

struct FeatureVector {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
};

enum class DistanceMetric { Euclidean, Cosine };

std::string to_string(DistanceMetric m);
DistanceMetric distance_metric_from_string(const std::string& s);

double vector_distance(const FeatureVector& a, const FeatureVector& b, DistanceMetric metric);

// Pooled backbone features of a geometry-normalized image.
FeatureVector extract_scene_features(const Tensor& rgb, const FeatureExtractor& backbone,
                                     const Preprocess& pp);

// Immutable nearest-neighbor structure over the reference set. Exact linear
// scan; ties broken toward the lexicographically smaller image id.
class ReferenceIndex {
 public:
  struct Entry {
    std::string id;
    double score = 0.0;  // ground truth in the active dimension
    FeatureVector features;
  };

  struct Hit {
    std::string id;
    double score = 0.0;
    double distance = 0.0;
  };

  static ReferenceIndex build(std::vector<Entry> entries, DistanceMetric metric,
                              Dimension dimension, std::string backbone_id);

  Hit query(const FeatureVector& probe) const;

  std::size_t size() const { return entries_.size(); }
  int dim() const { return dim_; }
  DistanceMetric metric() const { return metric_; }
  Dimension dimension() const { return dimension_; }
  const std::string& backbone_id() const { return backbone_id_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static ReferenceIndex load(const std::string& path);

 private:
  ReferenceIndex() = default;
  std::vector<Entry> entries_;  // sorted by id
  int dim_ = 0;
  DistanceMetric metric_ = DistanceMetric::Euclidean;
  Dimension dimension_ = Dimension::Beauty;
  std::string backbone_id_;
};

// Extracts features for each (image, score) pair and builds the index.
// Duplicate ids are a hard error.
ReferenceIndex build_index(const std::vector<std::pair<ImageRecord, double>>& refs,
                           const FeatureExtractor& backbone, const Preprocess& pp,
                           DistanceMetric metric, Dimension dimension);

// Nearest reference for a raw image. The backbone must match the index.
ReferenceIndex::Hit retrieve_reference(const Tensor& rgb, const ReferenceIndex& index,
                                       const FeatureExtractor& backbone, const Preprocess& pp);

}  // namespace bhia

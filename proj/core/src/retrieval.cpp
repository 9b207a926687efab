#include "bhia/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>

#include "bhia/image_io.hpp"

namespace bhia {

std::string to_string(DistanceMetric m) {
  return m == DistanceMetric::Euclidean ? "euclidean" : "cosine";
}

DistanceMetric distance_metric_from_string(const std::string& s) {
  if (s == "euclidean") return DistanceMetric::Euclidean;
  if (s == "cosine") return DistanceMetric::Cosine;
  throw std::invalid_argument("unknown distance metric '" + s + "' (expected euclidean|cosine)");
}

double vector_distance(const FeatureVector& a, const FeatureVector& b, DistanceMetric metric) {
  if (a.dim() != b.dim()) throw std::invalid_argument("vector_distance: dimension mismatch");
  if (metric == DistanceMetric::Euclidean) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double d = a.values[i] - b.values[i];
      s += d * d;
    }
    return std::sqrt(s);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 1.0;  // zero vector: treat similarity as 0
  double c = dot / std::sqrt(na * nb);
  c = std::min(1.0, std::max(-1.0, c));
  return 1.0 - c;
}

FeatureVector extract_scene_features(const Tensor& rgb, const FeatureExtractor& backbone,
                                     const Preprocess& pp) {
  FeatureVector fv;
  fv.values = backbone.pooled(preprocess_image(rgb, pp));
  for (double v : fv.values)
    if (!std::isfinite(v)) throw std::runtime_error("extract_scene_features: non-finite feature");
  return fv;
}

ReferenceIndex ReferenceIndex::build(std::vector<Entry> entries, DistanceMetric metric,
                                     Dimension dimension, std::string backbone_id) {
  if (entries.empty()) throw std::invalid_argument("ReferenceIndex: refs must be non-empty");
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < entries.size(); ++i)
    if (entries[i].id == entries[i - 1].id)
      throw std::runtime_error("ReferenceIndex: duplicate image id '" + entries[i].id + "'");
  const std::size_t dim = entries.front().features.dim();
  if (dim == 0) throw std::invalid_argument("ReferenceIndex: zero-dimensional features");
  for (const auto& e : entries)
    if (e.features.dim() != dim)
      throw std::runtime_error("ReferenceIndex: inconsistent feature dimension for '" + e.id + "'");

  ReferenceIndex idx;
  idx.entries_ = std::move(entries);
  idx.dim_ = static_cast<int>(dim);
  idx.metric_ = metric;
  idx.dimension_ = dimension;
  idx.backbone_id_ = std::move(backbone_id);
  return idx;
}

ReferenceIndex::Hit ReferenceIndex::query(const FeatureVector& probe) const {
  if (static_cast<int>(probe.dim()) != dim_)
    throw std::invalid_argument("ReferenceIndex::query: probe dimension mismatch");
  const Entry* best = nullptr;
  double best_d = 0.0;
  for (const auto& e : entries_) {
    const double d = vector_distance(probe, e.features, metric_);
    if (!best || d < best_d) {  // entries sorted by id, so ties keep the smaller id
      best = &e;
      best_d = d;
    }
  }
  return Hit{best->id, best->score, best_d};
}

namespace {

constexpr char kMagic[4] = {'B', 'H', 'I', 'X'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_u64(std::ostream& os, std::uint64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), 8); }
void write_str(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint32_t read_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
std::uint64_t read_u64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
double read_f64(std::istream& is) {
  double v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string read_str(std::istream& is) {
  const std::uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace

void ReferenceIndex::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write index: " + path);
  f.write(kMagic, 4);
  write_u32(f, kVersion);
  f.put(metric_ == DistanceMetric::Euclidean ? 0 : 1);
  write_str(f, bhia::to_string(dimension_));
  write_str(f, backbone_id_);
  write_u32(f, static_cast<std::uint32_t>(dim_));
  write_u64(f, entries_.size());
  for (const auto& e : entries_) {
    write_str(f, e.id);
    write_f64(f, e.score);
    for (double v : e.features.values) write_f64(f, v);
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

ReferenceIndex ReferenceIndex::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read index: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a reference index file: " + path);
  const auto version = read_u32(f);
  if (version != kVersion)
    throw std::runtime_error("unsupported index version " + std::to_string(version) + " in " + path);
  ReferenceIndex idx;
  idx.metric_ = f.get() == 0 ? DistanceMetric::Euclidean : DistanceMetric::Cosine;
  idx.dimension_ = dimension_from_string(read_str(f));
  idx.backbone_id_ = read_str(f);
  idx.dim_ = static_cast<int>(read_u32(f));
  const auto count = read_u64(f);
  idx.entries_.resize(count);
  for (auto& e : idx.entries_) {
    e.id = read_str(f);
    e.score = read_f64(f);
    e.features.values.resize(idx.dim_);
    for (auto& v : e.features.values) v = read_f64(f);
  }
  if (!f) throw std::runtime_error("truncated index file: " + path);
  return idx;
}

ReferenceIndex build_index(const std::vector<std::pair<ImageRecord, double>>& refs,
                           const FeatureExtractor& backbone, const Preprocess& pp,
                           DistanceMetric metric, Dimension dimension) {
  if (refs.empty()) throw std::invalid_argument("build_index: refs must be non-empty");
  std::vector<ReferenceIndex::Entry> entries;
  entries.reserve(refs.size());
  for (const auto& [rec, score] : refs) {
    ReferenceIndex::Entry e;
    e.id = rec.id;
    e.score = score;
    e.features = extract_scene_features(load_image_rgb(rec.path), backbone, pp);
    entries.push_back(std::move(e));
  }
  return ReferenceIndex::build(std::move(entries), metric, dimension, backbone.id());
}

ReferenceIndex::Hit retrieve_reference(const Tensor& rgb, const ReferenceIndex& index,
                                       const FeatureExtractor& backbone, const Preprocess& pp) {
  if (backbone.id() != index.backbone_id())
    throw std::runtime_error("retrieve_reference: backbone '" + backbone.id() +
                             "' does not match index backbone '" + index.backbone_id() + "'");
  return index.query(extract_scene_features(rgb, backbone, pp));
}

}  // namespace bhia

#include "bhia/curation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "bhia/image_io.hpp"

namespace fs = std::filesystem;

namespace bhia {

ColorHistogram compute_histogram(const Tensor& rgb, int bins_per_channel) {
  if (bins_per_channel < 2) throw std::invalid_argument("compute_histogram: bins_per_channel must be >= 2");
  if (rgb.channels != 3 || rgb.empty()) throw std::invalid_argument("compute_histogram: expected non-empty RGB tensor");

  const int b = bins_per_channel;
  ColorHistogram h;
  h.bins_per_channel = b;
  h.bins.assign(static_cast<std::size_t>(b) * b * b, 0.0);

  const auto bin_of = [b](double v) {
    int k = static_cast<int>(v * b);
    return std::min(std::max(k, 0), b - 1);
  };
  for (int y = 0; y < rgb.height; ++y) {
    for (int x = 0; x < rgb.width; ++x) {
      const int r = bin_of(rgb.at(0, y, x));
      const int g = bin_of(rgb.at(1, y, x));
      const int bl = bin_of(rgb.at(2, y, x));
      h.bins[(static_cast<std::size_t>(r) * b + g) * b + bl] += 1.0;
    }
  }
  const double total = static_cast<double>(rgb.height) * rgb.width;
  for (double& v : h.bins) v /= total;
  return h;
}

double histogram_distance(const ColorHistogram& a, const ColorHistogram& b) {
  if (a.bins.size() != b.bins.size())
    throw std::invalid_argument("histogram_distance: bin count mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < a.bins.size(); ++i) d += std::abs(a.bins[i] - b.bins[i]);
  return d;
}

std::vector<ImageRecord> filter_geometry(const std::vector<ImageRecord>& images, double ratio,
                                         double ratio_tol, int min_w, int min_h) {
  if (ratio <= 0.0) throw std::invalid_argument("filter_geometry: ratio must be > 0");
  if (ratio_tol < 0.0) throw std::invalid_argument("filter_geometry: ratio_tol must be >= 0");
  std::vector<ImageRecord> kept;
  kept.reserve(images.size());
  for (const auto& r : images) {
    if (std::abs(r.aspect_ratio - ratio) <= ratio_tol && r.width >= min_w && r.height >= min_h)
      kept.push_back(r);
  }
  return kept;
}

DedupResult dedup_by_histogram(const std::vector<ImageRecord>& images,
                               const std::vector<ColorHistogram>& histograms, double threshold,
                               Rng& rng) {
  if (images.size() != histograms.size())
    throw std::invalid_argument("dedup_by_histogram: images/histograms size mismatch");
  if (threshold < 0.0) throw std::invalid_argument("dedup_by_histogram: threshold must be >= 0");

  DedupResult res;
  std::vector<std::size_t> kept_idx;
  for (std::size_t i = 0; i < images.size(); ++i) {
    bool incoming_alive = true;
    for (std::size_t pos = 0; pos < kept_idx.size() && incoming_alive;) {
      const std::size_t j = kept_idx[pos];
      if (histogram_distance(histograms[i], histograms[j]) < threshold) {
        if (rng.below(2) == 0) {
          // incoming image is the victim
          res.dropped.emplace_back(images[j].id, images[i].id);
          incoming_alive = false;
        } else {
          res.dropped.emplace_back(images[i].id, images[j].id);
          kept_idx.erase(kept_idx.begin() + static_cast<std::ptrdiff_t>(pos));
        }
      } else {
        ++pos;
      }
    }
    if (incoming_alive) kept_idx.push_back(i);
  }
  res.kept.reserve(kept_idx.size());
  for (std::size_t j : kept_idx) res.kept.push_back(images[j]);
  return res;
}

int CurationParams::effective_min_width() const {
  return static_cast<int>(std::lround(min_width * (1.0 - size_slack)));
}
int CurationParams::effective_min_height() const {
  return static_cast<int>(std::lround(min_height * (1.0 - size_slack)));
}

std::vector<std::string> list_image_files(const std::string& dir) {
  static const std::set<std::string> kExts = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"};
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
  std::vector<std::string> rel;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (kExts.count(ext)) rel.push_back(fs::relative(e.path(), dir).generic_string());
  }
  std::sort(rel.begin(), rel.end());
  return rel;
}

CurationOutcome curate_directory(const std::string& dir, const CurationParams& params, Rng& rng) {
  const auto files = list_image_files(dir);

  CurationOutcome out;
  std::vector<ImageRecord> readable;
  for (const auto& rel : files) {
    const std::string path = (fs::path(dir) / rel).generic_string();
    const auto info = probe_image(path);
    CurationEntry e;
    if (!info) {
      e.record.id = rel;
      e.record.path = path;
      e.kept = false;
      e.reason = "unreadable:decode-failed";
      out.entries.push_back(std::move(e));
      continue;
    }
    e.record = ImageRecord::make(rel, path, info->width, info->height);
    out.entries.push_back(std::move(e));
    readable.push_back(out.entries.back().record);
  }

  const auto geo_kept = filter_geometry(readable, params.ratio, params.ratio_tol,
                                        params.effective_min_width(), params.effective_min_height());
  std::set<std::string> geo_ids;
  for (const auto& r : geo_kept) geo_ids.insert(r.id);

  // Histograms for the geometry survivors; files that fail to decode fully
  // at this stage are rejected rather than crashing the sweep.
  std::vector<ImageRecord> hist_ok;
  std::vector<ColorHistogram> hists;
  std::set<std::string> unreadable_ids;
  for (const auto& r : geo_kept) {
    const auto img = try_load_image_rgb(r.path);
    if (!img) {
      unreadable_ids.insert(r.id);
      continue;
    }
    hist_ok.push_back(r);
    hists.push_back(compute_histogram(*img, params.bins_per_channel));
  }

  const auto dedup = dedup_by_histogram(hist_ok, hists, params.dedup_threshold, rng);
  std::set<std::string> dedup_kept_ids;
  for (const auto& r : dedup.kept) dedup_kept_ids.insert(r.id);
  // victim -> survivor for manifest reasons
  std::vector<std::pair<std::string, std::string>> victim_to_survivor;
  for (const auto& [survivor, victim] : dedup.dropped) victim_to_survivor.emplace_back(victim, survivor);

  for (auto& e : out.entries) {
    if (!e.reason.empty()) continue;  // already marked unreadable at probe time
    if (unreadable_ids.count(e.record.id)) {
      e.kept = false;
      e.reason = "unreadable:decode-failed";
    } else if (!geo_ids.count(e.record.id)) {
      e.kept = false;
      e.reason = "geometry";
    } else if (dedup_kept_ids.count(e.record.id)) {
      e.kept = true;
      e.reason = "-";
      out.kept.push_back(e.record);
    } else {
      e.kept = false;
      std::string survivor = "?";
      for (const auto& [v, s] : victim_to_survivor)
        if (v == e.record.id) survivor = s;
      e.reason = "duplicate-of:" + survivor;
    }
  }
  return out;
}

void write_curation_manifest(const std::string& path, const CurationOutcome& outcome) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  f << "# bhia curation manifest v1\n";
  f << "id\tpath\twidth\theight\tstatus\treason\n";
  for (const auto& e : outcome.entries) {
    f << e.record.id << '\t' << e.record.path << '\t' << e.record.width << '\t' << e.record.height
      << '\t' << (e.kept ? "kept" : "dropped") << '\t' << e.reason << '\n';
  }
}

std::vector<ManifestEntry> read_curation_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read manifest: " + path);
  std::vector<ManifestEntry> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {  // column header
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string id, p, w, h, status, reason;
    if (!std::getline(ss, id, '\t') || !std::getline(ss, p, '\t') || !std::getline(ss, w, '\t') ||
        !std::getline(ss, h, '\t') || !std::getline(ss, status, '\t'))
      throw std::runtime_error("malformed manifest line: " + line);
    std::getline(ss, reason, '\t');
    ManifestEntry e;
    const int wi = std::stoi(w), hi = std::stoi(h);
    if (wi > 0 && hi > 0) {
      e.record = ImageRecord::make(id, p, wi, hi);
    } else {
      e.record.id = id;
      e.record.path = p;
    }
    e.kept = (status == "kept");
    e.reason = reason;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace bhia

#include "bhia/ratings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "bhia/rng.hpp"

namespace bhia {

namespace {

char sniff_delimiter(const std::string& header) {
  return header.find('\t') != std::string::npos ? '\t' : ',';
}

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, delim)) out.push_back(field);
  if (!line.empty() && line.back() == delim) out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Column lookup that hard-errors with the missing column's name.
std::size_t require_column(const std::vector<std::string>& header, const std::string& name,
                           const std::string& path) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::runtime_error("rating table " + path + ": missing required column '" + name + "'");
}

std::optional<long> parse_int(const std::string& s) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

std::optional<double> parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) return std::nullopt;
    return v;
  } catch (...) {
    return std::nullopt;
  }
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

IngestResult ingest_ratings(const std::string& path, double min_dwell_seconds) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open rating table: " + path);

  std::string header_line;
  if (!std::getline(f, header_line))
    throw std::runtime_error("rating table " + path + ": empty file (no header)");
  header_line = strip_cr(header_line);
  const char delim = sniff_delimiter(header_line);
  const auto header = split_fields(header_line, delim);

  const std::size_t c_image = require_column(header, "image_id", path);
  const std::size_t c_rater = require_column(header, "rater_id", path);
  const std::size_t c_beauty = require_column(header, "beauty", path);
  const std::size_t c_happy = require_column(header, "happy", path);
  const std::size_t c_dwell = require_column(header, "dwell_seconds", path);

  IngestResult res;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line, delim);
    if (fields.size() < header.size()) {
      res.rejects.push_back({line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                          std::to_string(fields.size())});
      continue;
    }
    const auto beauty = parse_int(fields[c_beauty]);
    const auto happy = parse_int(fields[c_happy]);
    const auto dwell = parse_double(fields[c_dwell]);
    if (!beauty || *beauty < 1 || *beauty > 7) {
      res.rejects.push_back({line_no, "beauty score '" + fields[c_beauty] + "' outside 1..7"});
      continue;
    }
    if (!happy || *happy < 1 || *happy > 7) {
      res.rejects.push_back({line_no, "happy score '" + fields[c_happy] + "' outside 1..7"});
      continue;
    }
    if (!dwell || *dwell < 0.0) {
      res.rejects.push_back({line_no, "dwell_seconds '" + fields[c_dwell] + "' not a non-negative number"});
      continue;
    }
    if (fields[c_image].empty() || fields[c_rater].empty()) {
      res.rejects.push_back({line_no, "empty image_id or rater_id"});
      continue;
    }
    RatingRecord r;
    r.image_id = fields[c_image];
    r.rater_id = fields[c_rater];
    r.beauty = static_cast<int>(*beauty);
    r.happy = static_cast<int>(*happy);
    r.dwell_seconds = *dwell;
    r.valid = (*dwell >= min_dwell_seconds);
    res.records.push_back(std::move(r));
  }
  return res;
}

std::vector<RaterProfile> ingest_profiles(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open profile table: " + path);
  std::string header_line;
  if (!std::getline(f, header_line))
    throw std::runtime_error("profile table " + path + ": empty file (no header)");
  header_line = strip_cr(header_line);
  const char delim = sniff_delimiter(header_line);
  const auto header = split_fields(header_line, delim);
  const std::size_t c_rater = require_column(header, "rater_id", path);

  std::vector<RaterProfile> out;
  std::string line;
  while (std::getline(f, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_fields(line, delim);
    if (fields.size() < header.size()) continue;
    RaterProfile p;
    p.rater_id = fields[c_rater];
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i == c_rater) continue;
      p.attributes.emplace_back(header[i], fields[i]);
    }
    out.push_back(std::move(p));
  }
  return out;
}

CleanResult clean_ratings(const std::vector<RatingRecord>& ratings, double sigma_k, int min_valid) {
  if (sigma_k <= 0.0) throw std::invalid_argument("clean_ratings: sigma_k must be > 0");
  if (min_valid < 1) throw std::invalid_argument("clean_ratings: min_valid must be >= 1");

  // Group valid records per image, preserving first-appearance order of votes.
  std::map<std::string, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < ratings.size(); ++i)
    if (ratings[i].valid) by_image[ratings[i].image_id].push_back(i);

  CleanResult res;
  res.images_in = by_image.size();

  // Single-pass sigma clipping around the per-image per-dimension mean.
  const auto survivors = [&](const std::vector<std::size_t>& idx, auto getter,
                             std::size_t& removed) {
    std::vector<double> vals;
    vals.reserve(idx.size());
    for (auto i : idx) vals.push_back(static_cast<double>(getter(ratings[i])));
    const double mu = mean_of(vals);
    double var = 0.0;
    for (double v : vals) var += (v - mu) * (v - mu);
    const double sigma = std::sqrt(var / static_cast<double>(vals.size()));
    std::vector<std::size_t> keep;
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (std::abs(vals[k] - mu) > sigma_k * sigma) {
        ++removed;
      } else {
        keep.push_back(idx[k]);
      }
    }
    return keep;
  };

  std::set<std::size_t> clean_record_idx;
  for (const auto& [image_id, idx] : by_image) {
    const auto keep_b = survivors(idx, [](const RatingRecord& r) { return r.beauty; },
                                  res.votes_removed_beauty);
    const auto keep_h = survivors(idx, [](const RatingRecord& r) { return r.happy; },
                                  res.votes_removed_happy);
    if (keep_b.size() < static_cast<std::size_t>(min_valid) ||
        keep_h.size() < static_cast<std::size_t>(min_valid))
      continue;

    LabeledImage label;
    label.image_id = image_id;
    double sb = 0.0, sh = 0.0;
    for (auto i : keep_b) sb += ratings[i].beauty;
    for (auto i : keep_h) sh += ratings[i].happy;
    label.n_beauty = static_cast<int>(keep_b.size());
    label.n_happy = static_cast<int>(keep_h.size());
    label.beauty_mean = sb / label.n_beauty;
    label.happy_mean = sh / label.n_happy;
    res.labels.push_back(std::move(label));

    std::set<std::size_t> sb_set(keep_b.begin(), keep_b.end());
    for (auto i : keep_h)
      if (sb_set.count(i)) clean_record_idx.insert(i);
  }
  res.images_kept = res.labels.size();
  for (auto i : clean_record_idx) res.clean.push_back(ratings[i]);
  // labels are already sorted by image_id via the ordered map
  return res;
}

StatsReport score_statistics(const std::vector<LabeledImage>& labels,
                             const std::vector<double>& gap_bounds, int hist_bins) {
  if (labels.empty()) throw std::invalid_argument("score_statistics: labels must be non-empty");
  StatsReport rep;
  rep.n = labels.size();
  rep.hist_bins = hist_bins;
  rep.beauty_hist.assign(hist_bins, 0);
  rep.happy_hist.assign(hist_bins, 0);

  const auto bin_of = [hist_bins](double score) {
    const int k = static_cast<int>((score - 1.0) / 6.0 * hist_bins);
    return std::min(std::max(k, 0), hist_bins - 1);
  };
  for (const auto& l : labels) {
    rep.beauty_hist[bin_of(l.beauty_mean)]++;
    rep.happy_hist[bin_of(l.happy_mean)]++;
  }

  if (labels.size() >= 2) {
    double ma = 0.0, me = 0.0;
    for (const auto& l : labels) {
      ma += l.beauty_mean;
      me += l.happy_mean;
    }
    ma /= rep.n;
    me /= rep.n;
    double saa = 0.0, see = 0.0, sae = 0.0;
    for (const auto& l : labels) {
      const double da = l.beauty_mean - ma;
      const double de = l.happy_mean - me;
      saa += da * da;
      see += de * de;
      sae += da * de;
    }
    if (saa > 0.0 && see > 0.0) rep.pearson = sae / std::sqrt(saa * see);
  }

  for (double bound : gap_bounds) {
    std::size_t cnt = 0;
    for (const auto& l : labels)
      if (std::abs(l.beauty_mean - l.happy_mean) < bound) ++cnt;
    rep.gap_fractions.emplace_back(bound, static_cast<double>(cnt) / static_cast<double>(rep.n));
  }
  return rep;
}

AttributeReport rater_attribute_breakdown(const std::vector<RatingRecord>& ratings,
                                          const std::vector<RaterProfile>& profiles) {
  // Attribute order: first appearance across profiles.
  std::vector<std::string> attr_order;
  std::map<std::string, std::map<std::string, std::string>> rater_attrs;  // rater -> attr -> level
  for (const auto& p : profiles) {
    for (const auto& [name, level] : p.attributes) {
      if (std::find(attr_order.begin(), attr_order.end(), name) == attr_order.end())
        attr_order.push_back(name);
      rater_attrs[p.rater_id][name] = level;
    }
  }

  AttributeReport rep;
  for (const auto& attr : attr_order) {
    // level -> (n, sum_beauty, sum_happy)
    std::map<std::string, std::tuple<std::size_t, double, double>> groups;
    for (const auto& r : ratings) {
      std::string level = "unknown";
      const auto it = rater_attrs.find(r.rater_id);
      if (it != rater_attrs.end()) {
        const auto jt = it->second.find(attr);
        if (jt != it->second.end() && !jt->second.empty()) level = jt->second;
      }
      auto& [n, sb, sh] = groups[level];
      ++n;
      sb += r.beauty;
      sh += r.happy;
    }
    std::vector<AttributeLevelStats> stats;
    for (const auto& [level, agg] : groups) {
      const auto& [n, sb, sh] = agg;
      stats.push_back({level, n, sb / static_cast<double>(n), sh / static_cast<double>(n)});
    }
    rep.attributes.emplace_back(attr, std::move(stats));
  }

  if (attr_order.empty() && !ratings.empty()) {
    // No profiles at all: everything under a single unknown group.
    std::size_t n = 0;
    double sb = 0.0, sh = 0.0;
    for (const auto& r : ratings) {
      ++n;
      sb += r.beauty;
      sh += r.happy;
    }
    rep.attributes.emplace_back(
        "all", std::vector<AttributeLevelStats>{{"unknown", n, sb / n, sh / n}});
  }
  return rep;
}

std::vector<std::string> SplitManifest::ids_with_role(SplitRole role) const {
  std::vector<std::string> out;
  for (const auto& [id, r] : entries)
    if (r == role) out.push_back(id);
  return out;
}

std::map<SplitRole, std::size_t> SplitManifest::counts() const {
  std::map<SplitRole, std::size_t> c;
  for (const auto& [id, r] : entries) c[r]++;
  return c;
}

SplitManifest make_splits(const std::vector<LabeledImage>& labels, Dimension dimension,
                          double ref_lo, double ref_hi, std::size_t ref_n, std::size_t ref_train,
                          std::size_t input_train, std::uint64_t seed) {
  if (ref_lo >= ref_hi) throw std::invalid_argument("make_splits: ref_lo must be < ref_hi");
  if (ref_train > ref_n) throw std::invalid_argument("make_splits: ref_train exceeds ref_n");

  // Stable base order regardless of caller ordering.
  std::vector<const LabeledImage*> sorted;
  sorted.reserve(labels.size());
  for (const auto& l : labels) sorted.push_back(&l);
  std::sort(sorted.begin(), sorted.end(),
            [](const LabeledImage* a, const LabeledImage* b) { return a->image_id < b->image_id; });

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double s = sorted[i]->score(dimension);
    if (s >= ref_lo && s <= ref_hi) eligible.push_back(i);
  }
  if (eligible.size() < ref_n)
    throw std::runtime_error("make_splits: need " + std::to_string(ref_n) +
                             " reference-eligible images in [" + std::to_string(ref_lo) + "," +
                             std::to_string(ref_hi) + "] but only " +
                             std::to_string(eligible.size()) + " of " +
                             std::to_string(labels.size()) + " qualify");

  Rng rng(seed);
  const auto ref_draw = rng.sample_without_replacement(eligible.size(), ref_n);

  std::vector<char> role_of(sorted.size(), 'n');  // n = not yet assigned
  for (std::size_t k = 0; k < ref_draw.size(); ++k)
    role_of[eligible[ref_draw[k]]] = (k < ref_train) ? 'R' : 'r';  // ref-train / ref-test

  std::vector<std::size_t> rest;
  for (std::size_t i = 0; i < sorted.size(); ++i)
    if (role_of[i] == 'n') rest.push_back(i);
  if (input_train > rest.size())
    throw std::runtime_error("make_splits: input_train=" + std::to_string(input_train) +
                             " exceeds remaining " + std::to_string(rest.size()) + " images");
  rng.shuffle(rest);
  for (std::size_t k = 0; k < rest.size(); ++k)
    role_of[rest[k]] = (k < input_train) ? 'I' : 'i';  // input-train / input-test

  SplitManifest m;
  m.dimension = dimension;
  m.entries.reserve(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    SplitRole role;
    switch (role_of[i]) {
      case 'R': role = SplitRole::RefTrain; break;
      case 'r': role = SplitRole::RefTest; break;
      case 'I': role = SplitRole::InputTrain; break;
      default: role = SplitRole::InputTest; break;
    }
    m.entries.emplace_back(sorted[i]->image_id, role);
  }
  return m;
}

void save_split_manifest(const std::string& path, const SplitManifest& manifest) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write split manifest: " + path);
  f << "# bhia split manifest v1\n";
  f << "# dimension=" << to_string(manifest.dimension) << "\n";
  f << "image_id\trole\n";
  for (const auto& [id, role] : manifest.entries) f << id << '\t' << to_string(role) << '\n';
}

SplitManifest load_split_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read split manifest: " + path);
  SplitManifest m;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    line = strip_cr(line);
    if (line.empty()) continue;
    if (line.rfind("# dimension=", 0) == 0) {
      m.dimension = dimension_from_string(line.substr(12));
      continue;
    }
    if (line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("malformed split line: " + line);
    m.entries.emplace_back(line.substr(0, tab), split_role_from_string(line.substr(tab + 1)));
  }
  return m;
}

void save_labels(const std::string& path, const std::vector<LabeledImage>& labels) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write labels: " + path);
  f << "# bhia labels v1\n";
  f << "image_id\tbeauty\thappy\tn_beauty\tn_happy\n";
  for (const auto& l : labels) {
    f << l.image_id << '\t' << fmt_double(l.beauty_mean) << '\t' << fmt_double(l.happy_mean) << '\t'
      << l.n_beauty << '\t' << l.n_happy << '\n';
  }
}

std::vector<LabeledImage> load_labels(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read labels: " + path);
  std::vector<LabeledImage> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line, '\t');
    if (fields.size() < 3) throw std::runtime_error("malformed label line: " + line);
    LabeledImage l;
    l.image_id = fields[0];
    l.beauty_mean = std::stod(fields[1]);
    l.happy_mean = std::stod(fields[2]);
    l.n_beauty = fields.size() > 3 ? std::stoi(fields[3]) : 0;
    l.n_happy = fields.size() > 4 ? std::stoi(fields[4]) : 0;
    out.push_back(std::move(l));
  }
  return out;
}

void save_ratings(const std::string& path, const std::vector<RatingRecord>& records) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write ratings: " + path);
  f << "image_id\trater_id\tbeauty\thappy\tdwell_seconds\tvalid\n";
  for (const auto& r : records) {
    f << r.image_id << '\t' << r.rater_id << '\t' << r.beauty << '\t' << r.happy << '\t'
      << fmt_double(r.dwell_seconds) << '\t' << (r.valid ? 1 : 0) << '\n';
  }
}

std::vector<RatingRecord> load_ratings(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read ratings: " + path);
  std::vector<RatingRecord> out;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    line = strip_cr(line);
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(line, '\t');
    if (fields.size() < 6) throw std::runtime_error("malformed ratings line: " + line);
    RatingRecord r;
    r.image_id = fields[0];
    r.rater_id = fields[1];
    r.beauty = std::stoi(fields[2]);
    r.happy = std::stoi(fields[3]);
    r.dwell_seconds = std::stod(fields[4]);
    r.valid = fields[5] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bhia

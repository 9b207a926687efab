#include "bhia/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace bhia {

namespace {

std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t n = a.size();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    saa += da * da;
    sbb += db * db;
    sab += da * db;
  }
  if (saa <= 0.0 || sbb <= 0.0) return std::nullopt;
  return sab / std::sqrt(saa * sbb);
}

std::string fmt_pct(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f%%", *v);
  return buf;
}

std::string fmt4(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

}  // namespace

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    // positions i..j (0-based) share the mean 1-based rank
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

MetricsReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                              double threshold) {
  if (pred.size() != truth.size())
    throw std::invalid_argument("compute_metrics: length mismatch");
  if (pred.size() < 2) throw std::invalid_argument("compute_metrics: need at least 2 samples");
  for (double v : pred)
    if (!std::isfinite(v)) throw std::invalid_argument("compute_metrics: non-finite prediction");
  for (double v : truth)
    if (!std::isfinite(v)) throw std::invalid_argument("compute_metrics: non-finite truth");

  MetricsReport rep;
  rep.n = pred.size();
  std::size_t agree = 0;
  double se = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if ((pred[i] >= threshold) == (truth[i] >= threshold)) ++agree;
    const double d = pred[i] - truth[i];
    se += d * d;
  }
  rep.acc = static_cast<double>(agree) / static_cast<double>(rep.n);
  rep.mse = se / static_cast<double>(rep.n);
  rep.lcc = pearson(pred, truth);
  rep.srcc = pearson(average_ranks(pred), average_ranks(truth));
  return rep;
}

ImprovementReport improvement_report(const MetricsReport& baseline, const MetricsReport& method) {
  ImprovementReport rep;
  const auto rel_up = [](double b, double m) -> std::optional<double> {
    if (b == 0.0) return std::nullopt;
    return (m - b) / b * 100.0;
  };
  rep.acc_pct = rel_up(baseline.acc, method.acc);
  if (baseline.mse != 0.0) rep.mse_pct = (baseline.mse - method.mse) / baseline.mse * 100.0;
  if (baseline.srcc && method.srcc) rep.srcc_pct = rel_up(*baseline.srcc, *method.srcc);
  if (baseline.lcc && method.lcc) rep.lcc_pct = rel_up(*baseline.lcc, *method.lcc);
  return rep;
}

namespace {

const AblationRow* find_row(const AblationTable& t, const std::string& key) {
  for (const auto& r : t.rows)
    if (r.key == key) return &r;
  return nullptr;
}

std::string row_label(const std::string& key, Dimension dim) {
  const std::string assist = dim == Dimension::Beauty ? "emotion" : "beauty";
  if (key == "baseline") return "Baseline";
  if (key == "wo_local") return "wo/ local";
  if (key == "w_local") return "w/ local";
  if (key == "wo_retrieval") return "wo/ retrieval";
  if (key == "w_assist_single") return "w/ " + assist + " (single)";
  if (key == "w_assist_full") return "w/ " + assist + " (Full)";
  return key;
}

}  // namespace

ImprovementReport ablation_improvement(const AblationTable& table) {
  const AblationRow* base = find_row(table, "baseline");
  const AblationRow* full = find_row(table, "w_assist_full");
  if (!base || !full)
    throw std::invalid_argument("ablation table needs 'baseline' and 'w_assist_full' rows");
  return improvement_report(base->metrics, full->metrics);
}

std::string render_ablation_text(const AblationTable& table) {
  if (table.rows.empty()) throw std::invalid_argument("ablation table has no rows");
  const std::string assistant =
      table.dimension == Dimension::Beauty ? "emotion assistance" : "beautifulness assistance";

  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-22s %9s %9s %9s %9s\n", "Metrics", "ACC", "MSE", "SRCC", "LCC");
  out += buf;
  const auto emit = [&](const AblationRow& r) {
    char acc[32];
    std::snprintf(acc, sizeof(acc), "%.2f%%", r.metrics.acc * 100.0);
    std::snprintf(buf, sizeof(buf), "%-22s %9s %9s %9s %9s\n",
                  row_label(r.key, table.dimension).c_str(), acc, fmt4(r.metrics.mse).c_str(),
                  fmt4(r.metrics.srcc).c_str(), fmt4(r.metrics.lcc).c_str());
    out += buf;
  };

  if (const auto* r = find_row(table, "baseline")) emit(*r);
  out += "-- Content reference without " + assistant + " --\n";
  for (const char* key : {"wo_local", "w_local", "wo_retrieval"})
    if (const auto* r = find_row(table, key)) emit(*r);
  out += "-- Content reference plus " + assistant + " --\n";
  for (const char* key : {"w_assist_single", "w_assist_full"})
    if (const auto* r = find_row(table, key)) emit(*r);

  if (find_row(table, "baseline") && find_row(table, "w_assist_full")) {
    const auto imp = ablation_improvement(table);
    std::snprintf(buf, sizeof(buf), "%-22s %9s %9s %9s %9s\n", "Improvement",
                  fmt_pct(imp.acc_pct).c_str(), fmt_pct(imp.mse_pct).c_str(),
                  fmt_pct(imp.srcc_pct).c_str(), fmt_pct(imp.lcc_pct).c_str());
    out += buf;
  }
  return out;
}

std::string ablation_to_json(const AblationTable& table) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["dimension"] = to_string(table.dimension);
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    row["key"] = r.key;
    row["acc"] = r.metrics.acc;
    row["mse"] = r.metrics.mse;
    if (r.metrics.srcc) row["srcc"] = *r.metrics.srcc;
    if (r.metrics.lcc) row["lcc"] = *r.metrics.lcc;
    row["n"] = r.metrics.n;
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  if (find_row(table, "baseline") && find_row(table, "w_assist_full")) {
    const auto imp = ablation_improvement(table);
    nlohmann::ordered_json ji;
    if (imp.acc_pct) ji["acc_pct"] = *imp.acc_pct;
    if (imp.mse_pct) ji["mse_pct"] = *imp.mse_pct;
    if (imp.srcc_pct) ji["srcc_pct"] = *imp.srcc_pct;
    if (imp.lcc_pct) ji["lcc_pct"] = *imp.lcc_pct;
    j["improvement"] = std::move(ji);
  }
  return j.dump(2) + "\n";
}

AblationTable ablation_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  AblationTable t;
  t.dimension = dimension_from_string(j.at("dimension").get<std::string>());
  for (const auto& row : j.at("rows")) {
    AblationRow r;
    r.key = row.at("key").get<std::string>();
    r.metrics.acc = row.at("acc").get<double>();
    r.metrics.mse = row.at("mse").get<double>();
    if (row.contains("srcc")) r.metrics.srcc = row.at("srcc").get<double>();
    if (row.contains("lcc")) r.metrics.lcc = row.at("lcc").get<double>();
    if (row.contains("n")) r.metrics.n = row.at("n").get<std::size_t>();
    t.rows.push_back(std::move(r));
  }
  return t;
}

void save_metrics(const std::string& path, const MetricsReport& report, Dimension dimension,
                  double threshold) {
  nlohmann::ordered_json j;
  j["format_version"] = 1;
  j["dimension"] = to_string(dimension);
  j["threshold"] = threshold;
  j["n"] = report.n;
  j["acc"] = report.acc;
  j["mse"] = report.mse;
  if (report.srcc)
    j["srcc"] = *report.srcc;
  else
    j["srcc"] = nullptr;
  if (report.lcc)
    j["lcc"] = *report.lcc;
  else
    j["lcc"] = nullptr;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write metrics: " + path);
  f << j.dump(2) << "\n";
}

}  // namespace bhia

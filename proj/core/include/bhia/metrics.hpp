#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bhia/types.hpp"

namespace bhia {

struct MetricsReport {
  double acc = 0.0;                // binary good/bad agreement, in [0,1]
  double mse = 0.0;
  std::optional<double> srcc;      // nullopt when rank variance is zero
  std::optional<double> lcc;       // nullopt when variance is zero
  std::size_t n = 0;
};

// Average ranks (1-based), ties get the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

// acc: fraction where (pred >= threshold) == (truth >= threshold).
// srcc: Pearson correlation of average ranks. lcc: Pearson correlation.
MetricsReport compute_metrics(const std::vector<double>& pred, const std::vector<double>& truth,
                              double threshold);

struct ImprovementReport {
  // Relative improvements in percent; nullopt where the baseline cell is zero
  // or undefined. MSE improvement is (baseline - method) / baseline.
  std::optional<double> acc_pct;
  std::optional<double> mse_pct;
  std::optional<double> srcc_pct;
  std::optional<double> lcc_pct;
};

ImprovementReport improvement_report(const MetricsReport& baseline, const MetricsReport& method);

// --- ablation table ---------------------------------------------------------

// Canonical row keys, in table order.
inline constexpr const char* kAblationRowKeys[6] = {
    "baseline", "wo_local", "w_local", "wo_retrieval", "w_assist_single", "w_assist_full",
};

struct AblationRow {
  std::string key;  // one of kAblationRowKeys
  MetricsReport metrics;
};

struct AblationTable {
  Dimension dimension = Dimension::Beauty;
  std::vector<AblationRow> rows;
};

// Improvement row computed from the baseline and full-assist rows.
ImprovementReport ablation_improvement(const AblationTable& table);

// Human-readable table in the canonical row layout, with the assistant
// dimension named in the group headers.
std::string render_ablation_text(const AblationTable& table);

// Machine-readable emission; parses back to identical numbers.
std::string ablation_to_json(const AblationTable& table);
AblationTable ablation_from_json(const std::string& text);

void save_metrics(const std::string& path, const MetricsReport& report, Dimension dimension,
                  double threshold);

}  // namespace bhia

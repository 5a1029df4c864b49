// Steering prediction metrics: RMSE, explained variance (EVA), and
// mean/std aggregation over repeated runs. Variances are population variances.
#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dvsdrive {

class MetricsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Paired predictions and ground truth in degrees. At least two finite pairs.
class PredictionSet {
 public:
  PredictionSet(std::vector<double> pred, std::vector<double> gt);

  std::span<const double> pred() const { return pred_; }
  std::span<const double> gt() const { return gt_; }
  std::size_t size() const { return pred_.size(); }

 private:
  std::vector<double> pred_;
  std::vector<double> gt_;
};

double mean(std::span<const double> v);
double population_variance(std::span<const double> v);

double rmse(const PredictionSet& p);
/// 1 - Var(pred - gt) / Var(gt). Throws MetricsError for constant ground truth.
double eva(const PredictionSet& p);

struct RunSummary {
  std::vector<double> values;
  double mean = 0.0;
  double std = 0.0;  // population
};

RunSummary summarize_runs(std::span<const double> values);

// ============================================================================
// Prediction CSV: header "ts_ms,deg", one row per window end.
// ============================================================================

struct TimedValue {
  std::uint64_t ts_ms = 0;
  double deg = 0.0;
};

std::vector<TimedValue> read_prediction_csv(std::istream& in, const std::string& name);
std::vector<TimedValue> read_prediction_csv(const std::string& path);
void write_prediction_csv(std::ostream& out, std::span<const TimedValue> rows);

/// Pairs rows by timestamp. Both files must cover the same timestamps; a
/// timestamp repeated k times pairs its occurrences in file order.
PredictionSet pair_by_timestamp(std::span<const TimedValue> pred, std::span<const TimedValue> gt);

// ============================================================================
// Result table
// ============================================================================

inline const std::vector<std::string> kInputModes = {"DVS+APS", "DVS", "APS"};

struct RunResult {
  std::string tag;   // dataset tag, e.g. "day"
  std::string mode;  // one of kInputModes
  double rmse = 0.0;
  double eva = 0.0;
};

/// Rows are dataset tags, columns the input modes; cells are mean ± std over runs.
std::string format_results(std::span<const RunResult> runs);

}  // namespace dvsdrive

#include "dvsdrive/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include "dvsdrive/keyvalue.hpp"

namespace dvsdrive {

PredictionSet::PredictionSet(std::vector<double> pred, std::vector<double> gt)
    : pred_(std::move(pred)), gt_(std::move(gt)) {
  if (pred_.size() != gt_.size()) {
    throw MetricsError("prediction and ground truth lengths differ (" + std::to_string(pred_.size()) +
                       " vs " + std::to_string(gt_.size()) + ")");
  }
  if (pred_.size() < 2) throw MetricsError("need at least two prediction pairs");
  for (std::size_t i = 0; i < pred_.size(); ++i) {
    if (!std::isfinite(pred_[i]) || !std::isfinite(gt_[i])) {
      throw MetricsError("non-finite value at row " + std::to_string(i));
    }
  }
}

double mean(std::span<const double> v) {
  if (v.empty()) throw MetricsError("mean of empty sequence");
  double sum = 0.0;
  for (const double x : v) sum += x;
  return sum / static_cast<double>(v.size());
}

double population_variance(std::span<const double> v) {
  const double m = mean(v);
  double ss = 0.0;
  for (const double x : v) ss += (x - m) * (x - m);
  return ss / static_cast<double>(v.size());
}

double rmse(const PredictionSet& p) {
  double ss = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = p.pred()[i] - p.gt()[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(p.size()));
}

double eva(const PredictionSet& p) {
  const double var_gt = population_variance(p.gt());
  if (!(var_gt > 0.0)) throw MetricsError("EVA undefined: ground truth is constant");
  std::vector<double> residual(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) residual[i] = p.pred()[i] - p.gt()[i];
  return 1.0 - population_variance(residual) / var_gt;
}

RunSummary summarize_runs(std::span<const double> values) {
  if (values.empty()) throw MetricsError("no runs to summarize");
  RunSummary s;
  s.values.assign(values.begin(), values.end());
  s.mean = mean(values);
  s.std = std::sqrt(population_variance(values));
  return s;
}

// ============================================================================
// CSV
// ============================================================================

std::vector<TimedValue> read_prediction_csv(std::istream& in, const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw MetricsError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "ts_ms,deg") throw MetricsError(name + ": expected header 'ts_ms,deg', got '" + line + "'");
  std::vector<TimedValue> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw MetricsError(name + ":" + std::to_string(lineno) + ": expected two columns");
    }
    try {
      TimedValue row;
      row.ts_ms = parse_u64(line.substr(0, comma), "ts_ms");
      row.deg = parse_double(line.substr(comma + 1), "deg");
      rows.push_back(row);
    } catch (const ConfigError& e) {
      throw MetricsError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

std::vector<TimedValue> read_prediction_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricsError("cannot open " + path);
  return read_prediction_csv(in, path);
}

void write_prediction_csv(std::ostream& out, std::span<const TimedValue> rows) {
  out << "ts_ms,deg\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.17g", r.deg);
    out << r.ts_ms << ',' << buf << '\n';
  }
}

PredictionSet pair_by_timestamp(std::span<const TimedValue> pred, std::span<const TimedValue> gt) {
  if (pred.size() != gt.size()) {
    throw MetricsError("prediction and ground truth row counts differ (" +
                       std::to_string(pred.size()) + " vs " + std::to_string(gt.size()) + ")");
  }
  // Repeated timestamps (several recordings in one file) pair in order of appearance.
  std::map<std::uint64_t, std::deque<double>> by_ts;
  for (const auto& r : pred) by_ts[r.ts_ms].push_back(r.deg);
  std::vector<double> p, g;
  p.reserve(gt.size());
  g.reserve(gt.size());
  for (const auto& r : gt) {
    const auto it = by_ts.find(r.ts_ms);
    if (it == by_ts.end() || it->second.empty()) {
      throw MetricsError("no prediction for timestamp " + std::to_string(r.ts_ms));
    }
    p.push_back(it->second.front());
    it->second.pop_front();
    g.push_back(r.deg);
  }
  return PredictionSet(std::move(p), std::move(g));
}

// ============================================================================
// Table
// ============================================================================

namespace {

std::string cell(std::span<const double> values) {
  if (values.empty()) return "-";
  const auto s = summarize_runs(values);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f ± %.3f", s.mean, s.std);
  return buf;
}

void pad(std::ostringstream& out, const std::string& text, std::size_t width) {
  // "±" is two bytes but one column.
  std::size_t cols = 0;
  for (const unsigned char c : text) cols += (c & 0xC0) != 0x80;
  out << text << std::string(width > cols ? width - cols : 0, ' ');
}

}  // namespace

std::string format_results(std::span<const RunResult> runs) {
  std::vector<std::string> tags;
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> cells;
  for (const auto& r : runs) {
    if (std::find(kInputModes.begin(), kInputModes.end(), r.mode) == kInputModes.end()) {
      throw MetricsError("unknown input mode '" + r.mode + "'");
    }
    if (std::find(tags.begin(), tags.end(), r.tag) == tags.end()) tags.push_back(r.tag);
    auto& c = cells[{r.tag, r.mode}];
    c.first.push_back(r.eva);
    c.second.push_back(r.rmse);
  }

  std::ostringstream out;
  std::size_t max_runs = 0;
  for (const auto& [key, c] : cells) max_runs = std::max(max_runs, c.first.size());
  constexpr std::size_t kTagWidth = 10;
  constexpr std::size_t kCellWidth = 18;
  for (const bool is_eva : {true, false}) {
    out << (is_eva ? "EVA" : "RMSE (deg)") << '\n';
    pad(out, "dataset", kTagWidth);
    for (const auto& m : kInputModes) pad(out, m, kCellWidth);
    out << '\n';
    for (const auto& tag : tags) {
      pad(out, tag, kTagWidth);
      for (const auto& m : kInputModes) {
        const auto it = cells.find({tag, m});
        std::span<const double> v;
        if (it != cells.end()) v = is_eva ? it->second.first : it->second.second;
        pad(out, cell(v), kCellWidth);
      }
      out << '\n';
    }
    out << '\n';
  }
  out << "cells: mean ± population std of per-run values (up to " << max_runs
      << " runs per cell); RMSE is averaged per run, not pooled over residuals\n";
  return out.str();
}

}  // namespace dvsdrive

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "siv/causal.hpp"

namespace siv {

struct ParamStats {
  double bias = 0.0, bias_se = 0.0;
  double mse = 0.0, mse_se = 0.0;
  double coverage = 0.0, coverage_se = 0.0;  // fractions in [0,1]
};

// Aggregates of one (cell, model) across replicates.
struct ReplicateSummary {
  int n_reps = 0;
  int n_failed = 0;
  ParamStats delta1;
  std::optional<ParamStats> delta2;
  double mean_iv_resid_cor = 0.0;
  double iv_resid_cor_se = 0.0;
};

// Bias, MSE, 95% coverage and instrument-residual correlation with Monte
// Carlo standard errors. Estimates are raw; any x10 presentation scaling
// happens at the output layer.
ReplicateSummary summarize(const std::vector<CausalEstimate>& estimates, double truth_delta1,
                           std::optional<double> truth_delta2 = std::nullopt, int n_failed = 0);

// One metrics CSV row: cell x model x parameter.
struct MetricsRow {
  std::string scenario;
  std::string model;
  std::string error_model;
  std::string param;  // delta1 | delta2
  double bias = 0.0, bias_se = 0.0;
  double mse = 0.0, mse_se = 0.0;
  double coverage = 0.0, coverage_se = 0.0;
  double cor_z_resid = 0.0, cor_z_resid_se = 0.0;
  int n_reps = 0;
  int n_failed = 0;
};

std::vector<MetricsRow> to_rows(const std::string& scenario, const std::string& model,
                                const std::string& error_model, const ReplicateSummary& summary);

// Long-format sweep records derived from per-cell summaries: log absolute
// bias, log bias relative to the matching no-IV model, and (95 - coverage%).
struct SweepCell {
  std::string scenario;
  double target_cor_za = 0.0;
  double target_cor_zu = 0.0;
  MetricsRow row;
};

struct SweepRecord {
  std::string scenario;
  std::string model;
  std::string error_model;
  std::string param;
  double target_cor_za = 0.0;
  double target_cor_zu = 0.0;
  double log_abs_bias = 0.0;
  double log_rel_bias = 0.0;
  double coverage_deficit = 0.0;  // 95 - coverage percent
};

// `baseline_model` names the no-IV rows used as the per-cell reference.
std::vector<SweepRecord> sweep_grid(const std::vector<SweepCell>& cells,
                                    const std::string& baseline_model = "no_iv");

// Serialization. Numbers carry 17 significant digits so that identical runs
// produce byte-identical files.
std::string format_double(double v);
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows);
void write_metrics_json(const std::string& path, const std::vector<MetricsRow>& rows);
void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records);

}  // namespace siv

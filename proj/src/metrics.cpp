#include "siv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"

namespace siv {

namespace {

ParamStats stats_for(const std::vector<double>& est, const std::vector<double>& lo,
                     const std::vector<double>& hi, double truth) {
  const int r = static_cast<int>(est.size());
  ParamStats s;
  double sum = 0, sumsq = 0, cover = 0, sqe_sum = 0, sqe_sumsq = 0;
  for (int i = 0; i < r; ++i) {
    sum += est[i];
    const double err = est[i] - truth;
    const double sq = err * err;
    sqe_sum += sq;
    sqe_sumsq += sq * sq;
    sumsq += est[i] * est[i];
    if (lo[i] <= truth && truth <= hi[i]) cover += 1.0;
  }
  const double mean_est = sum / r;
  s.bias = mean_est - truth;
  const double var_est = std::max(0.0, (sumsq - r * mean_est * mean_est) / (r - 1));
  s.bias_se = std::sqrt(var_est / r);
  s.mse = sqe_sum / r;
  const double var_sqe = std::max(0.0, (sqe_sumsq - r * s.mse * s.mse) / (r - 1));
  s.mse_se = std::sqrt(var_sqe / r);
  s.coverage = cover / r;
  s.coverage_se = std::sqrt(s.coverage * (1.0 - s.coverage) / r);
  return s;
}

}  // namespace

ReplicateSummary summarize(const std::vector<CausalEstimate>& estimates, double truth_delta1,
                           std::optional<double> truth_delta2, int n_failed) {
  const int r = static_cast<int>(estimates.size());
  if (r < 2) throw InsufficientDataError("summarize requires at least 2 replicates");

  ReplicateSummary out;
  out.n_reps = r;
  out.n_failed = n_failed;

  std::vector<double> e1, l1, h1, cors;
  e1.reserve(r);
  for (const auto& est : estimates) {
    e1.push_back(est.delta1.estimate);
    l1.push_back(est.delta1.ci_lo);
    h1.push_back(est.delta1.ci_hi);
    cors.push_back(est.iv_residual_cor);
  }
  out.delta1 = stats_for(e1, l1, h1, truth_delta1);

  double csum = 0;
  for (double c : cors) csum += c;
  out.mean_iv_resid_cor = csum / r;
  double cvar = 0;
  for (double c : cors) cvar += (c - out.mean_iv_resid_cor) * (c - out.mean_iv_resid_cor);
  out.iv_resid_cor_se = std::sqrt(cvar / (r - 1) / r);

  if (truth_delta2) {
    std::vector<double> e2, l2, h2;
    for (const auto& est : estimates) {
      if (!est.delta2)
        throw InsufficientDataError("summarize: delta2 truth given but estimate missing");
      e2.push_back(est.delta2->estimate);
      l2.push_back(est.delta2->ci_lo);
      h2.push_back(est.delta2->ci_hi);
    }
    out.delta2 = stats_for(e2, l2, h2, *truth_delta2);
  }
  return out;
}

std::vector<MetricsRow> to_rows(const std::string& scenario, const std::string& model,
                                const std::string& error_model,
                                const ReplicateSummary& summary) {
  std::vector<MetricsRow> rows;
  auto make = [&](const std::string& param, const ParamStats& s) {
    MetricsRow r;
    r.scenario = scenario;
    r.model = model;
    r.error_model = error_model;
    r.param = param;
    r.bias = s.bias;
    r.bias_se = s.bias_se;
    r.mse = s.mse;
    r.mse_se = s.mse_se;
    r.coverage = s.coverage;
    r.coverage_se = s.coverage_se;
    r.cor_z_resid = summary.mean_iv_resid_cor;
    r.cor_z_resid_se = summary.iv_resid_cor_se;
    r.n_reps = summary.n_reps;
    r.n_failed = summary.n_failed;
    return r;
  };
  rows.push_back(make("delta1", summary.delta1));
  if (summary.delta2) rows.push_back(make("delta2", *summary.delta2));
  return rows;
}

std::vector<SweepRecord> sweep_grid(const std::vector<SweepCell>& cells,
                                    const std::string& baseline_model) {
  std::vector<SweepRecord> out;
  for (const auto& c : cells) {
    if (c.row.model == baseline_model) continue;
    const auto base = std::find_if(cells.begin(), cells.end(), [&](const SweepCell& b) {
      return b.scenario == c.scenario && b.row.model == baseline_model &&
             b.row.error_model == c.row.error_model && b.row.param == c.row.param;
    });
    if (base == cells.end())
      throw IncompleteGridError("sweep cell '" + c.scenario + "' (" + c.row.error_model +
                                ", " + c.row.param + ") has no '" + baseline_model +
                                "' baseline");
    SweepRecord r;
    r.scenario = c.scenario;
    r.model = c.row.model;
    r.error_model = c.row.error_model;
    r.param = c.row.param;
    r.target_cor_za = c.target_cor_za;
    r.target_cor_zu = c.target_cor_zu;
    r.log_abs_bias = std::log(std::abs(c.row.bias));
    r.log_rel_bias = std::log(std::abs(c.row.bias) / std::abs(base->row.bias));
    r.coverage_deficit = 95.0 - 100.0 * c.row.coverage;
    out.push_back(r);
  }
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {
constexpr const char* kMetricsHeader =
    "scenario,model,error_model,param,bias,bias_se,mse,mse_se,coverage,coverage_se,"
    "cor_z_resid,cor_z_resid_se,n_reps,n_failed";

void append_row(std::string& s, const MetricsRow& r) {
  s += r.scenario + ',' + r.model + ',' + r.error_model + ',' + r.param + ',';
  s += format_double(r.bias) + ',' + format_double(r.bias_se) + ',';
  s += format_double(r.mse) + ',' + format_double(r.mse_se) + ',';
  s += format_double(r.coverage) + ',' + format_double(r.coverage_se) + ',';
  s += format_double(r.cor_z_resid) + ',' + format_double(r.cor_z_resid_se) + ',';
  s += std::to_string(r.n_reps) + ',' + std::to_string(r.n_failed) + '\n';
}
}  // namespace

void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& rows) {
  std::string s(kMetricsHeader);
  s += '\n';
  for (const auto& r : rows) append_row(s, r);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << s;
}

void write_metrics_json(const std::string& path, const std::vector<MetricsRow>& rows) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    arr.push_back({{"scenario", r.scenario},
                   {"model", r.model},
                   {"error_model", r.error_model},
                   {"param", r.param},
                   {"bias", r.bias},
                   {"bias_se", r.bias_se},
                   {"mse", r.mse},
                   {"mse_se", r.mse_se},
                   {"coverage", r.coverage},
                   {"coverage_se", r.coverage_se},
                   {"cor_z_resid", r.cor_z_resid},
                   {"cor_z_resid_se", r.cor_z_resid_se},
                   {"n_reps", r.n_reps},
                   {"n_failed", r.n_failed}});
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << arr.dump(2) << '\n';
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRecord>& records) {
  std::string s =
      "scenario,model,error_model,param,target_cor_za,target_cor_zu,log_abs_bias,"
      "log_rel_bias,coverage_deficit\n";
  for (const auto& r : records) {
    s += r.scenario + ',' + r.model + ',' + r.error_model + ',' + r.param + ',';
    s += format_double(r.target_cor_za) + ',' + format_double(r.target_cor_zu) + ',';
    s += format_double(r.log_abs_bias) + ',' + format_double(r.log_rel_bias) + ',';
    s += format_double(r.coverage_deficit) + '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << s;
}

}  // namespace siv

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "siv/metrics.hpp"
#include "siv/scenario.hpp"

namespace siv {

struct ModelSpec {
  std::string name;        // presentation name, e.g. "local_iv"
  std::string estimator;   // no_iv | iv | no_instrument | type0 | type1 | type2
  ErrorModel em1 = ErrorModel::Iid;
  ErrorModel em2 = ErrorModel::Iid;
  std::string instrument;  // field name; defaults per generator
};

struct CellSpec {
  std::string name;
  ScenarioConfig scenario;
  double target_cor_za = 0.0;  // bookkeeping for sweep outputs
  double target_cor_zu = 0.0;
};

struct RunConfig {
  std::string name;
  std::uint64_t base_seed = 1;
  int replicates = 0;
  int workers = 0;  // 0 -> hardware concurrency
  std::string format = "csv";
  std::vector<ModelSpec> models;
  std::vector<CellSpec> cells;
  bool is_sweep = false;
  std::vector<double> sweep_cor_za, sweep_cor_zu;

  std::uint64_t content_hash = 0;  // FNV-1a of the config file bytes
};

RunConfig load_run_config(const std::string& path);
RunConfig parse_run_config(const std::string& json_text, const std::string& origin = "<config>");

struct CellReport {
  std::string name;
  int replicates = 0;
  int rejection_failures = 0;
  std::vector<std::pair<std::string, int>> fit_failures;  // model label -> count
  double wall_ms = 0.0;
};

struct RunResult {
  std::vector<MetricsRow> metrics;
  std::vector<SweepRecord> sweep;
  std::vector<CellReport> cells;
  std::vector<std::string> outputs;
  bool any_cell_failed = false;
};

// Runs every (cell x model) combination with per-replicate derived seeds and
// writes metrics plus a manifest under out_dir. Outputs are deterministic in
// (config, seed, version) and independent of the worker count.
RunResult run_simulate(const RunConfig& config, const std::string& out_dir);

// Simulate over a target grid, then emit the long-format sweep tables.
RunResult run_sweep(const RunConfig& config, const std::string& out_dir);

}  // namespace siv

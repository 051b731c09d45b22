// Command-line front end: scenario simulation, sensitivity sweeps, single
// fits on slope datasets, and panel ingestion.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "siv/metrics.hpp"
#include "siv/panel.hpp"
#include "siv/runner.hpp"

extern "C" void openblas_set_num_threads(int);

namespace {

struct FitArgs {
  std::string data_path;
  std::string panel_path;
  int anchor_year = 1990;
  std::string log_vars;
  std::string estimator = "iv";  // no_iv | iv
  std::string error_model = "iid";
  std::string error_model_s1, error_model_s2;
  int spillover = -1;  // -1 none, else 0|1|2
  double kernel_truncation = 0.0;
  std::string z_var, a_var, y_var;
  std::vector<std::string> covariates;
  bool no_intercept_covariates = false;
  std::string out_path;
};

std::set<std::string> parse_log_vars(const std::string& s) {
  std::set<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.insert(item);
  }
  return out;
}

nlohmann::ordered_json effect_json(const siv::EffectEstimate& e) {
  return {{"estimate", e.estimate}, {"ci", {e.ci_lo, e.ci_hi}}};
}

int cmd_fit(const FitArgs& args) {
  siv::SlopeDataset slopes;
  if (!args.panel_path.empty()) {
    const siv::PanelData panel = siv::read_panel_csv(args.panel_path);
    slopes = siv::decadal_slopes(panel, args.anchor_year, parse_log_vars(args.log_vars));
  } else {
    slopes = siv::read_slopes_csv(args.data_path);
  }

  std::vector<siv::CovariateRequest> extra;
  for (const auto& c : args.covariates) {
    siv::CovariateRequest req;
    const auto colon = c.find(':');
    req.variable = c.substr(0, colon);
    if (colon != std::string::npos) {
      const std::string stage = c.substr(colon + 1);
      req.stage1 = stage == "s1" || stage == "both";
      req.stage2 = stage == "s2" || stage == "both";
      if (!req.stage1 && !req.stage2)
        throw siv::InvalidConfigError("covariate stage must be s1, s2 or both: " + c);
    }
    extra.push_back(req);
  }

  const siv::CausalDataset data = siv::slope_causal_dataset(
      slopes, args.z_var, args.a_var, args.y_var, extra, !args.no_intercept_covariates);

  siv::ErrorModel em1 = siv::parse_error_model(args.error_model);
  siv::ErrorModel em2 = em1;
  if (!args.error_model_s1.empty()) em1 = siv::parse_error_model(args.error_model_s1);
  if (!args.error_model_s2.empty()) em2 = siv::parse_error_model(args.error_model_s2);

  siv::CausalEstimate est;
  std::string model_label = args.estimator;
  if (args.spillover >= 0) {
    if (!(args.kernel_truncation > 0.0))
      throw siv::InvalidConfigError("--kernel-truncation is required with --spillover");
    const siv::KernelSpec kernel{args.kernel_truncation};
    switch (args.spillover) {
      case 0: est = siv::spillover_type0(data, kernel, em1, em2); break;
      case 1: est = siv::spillover_type1(data, kernel, em1, em2); break;
      case 2: est = siv::spillover_type2(data, kernel, em1, em2); break;
      default: throw siv::InvalidConfigError("--spillover must be 0, 1 or 2");
    }
    model_label = "spillover_type" + std::to_string(args.spillover);
  } else if (args.estimator == "no_iv") {
    est = siv::no_iv(data, em2);
  } else if (args.estimator == "iv") {
    est = siv::two_stage_iv(data, em1, em2);
  } else {
    throw siv::InvalidConfigError("--estimator must be no_iv or iv");
  }

  nlohmann::ordered_json report;
  report["model"] = model_label;
  report["error_model_s1"] = est.stage1 ? nlohmann::ordered_json(siv::to_string(em1))
                                        : nlohmann::ordered_json(nullptr);
  report["error_model_s2"] = siv::to_string(em2);
  report["delta1"] = effect_json(est.delta1);
  if (est.delta2) report["delta2"] = effect_json(*est.delta2);
  report["cor_z_resid_s2"] = est.iv_residual_cor;
  report["aic_s1"] = est.stage1 ? nlohmann::ordered_json(est.stage1->aic)
                                : nlohmann::ordered_json(nullptr);
  report["aic_s2"] = est.stage2.aic;
  report["n_locations"] = static_cast<int>(slopes.locations.size());

  if (args.out_path.empty()) {
    std::cout << report.dump(2) << '\n';
  } else {
    std::ofstream f(args.out_path, std::ios::binary);
    if (!f) throw siv::ParseError("cannot open for writing: " + args.out_path);
    f << report.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  openblas_set_num_threads(1);
  CLI::App app{"spatial instrumental-variables simulation and estimation toolkit"};
  app.require_subcommand(1);

  // simulate / sweep
  std::string config_path, out_dir = ".", format;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> workers_override;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed_override, "override the config base seed");
    cmd->add_option("--workers", workers_override, "replicate worker count");
    cmd->add_option("--format", format, "metrics format: csv or json");
  };

  CLI::App* simulate = app.add_subcommand("simulate", "run scenario replications");
  add_run_options(simulate);
  CLI::App* sweep = app.add_subcommand("sweep", "run a target-grid sensitivity sweep");
  add_run_options(sweep);

  // fit
  FitArgs fit;
  CLI::App* fitc = app.add_subcommand("fit", "fit one model to a slope dataset");
  fitc->add_option("--data", fit.data_path, "slope dataset CSV");
  fitc->add_option("--panel", fit.panel_path, "raw panel CSV (ingested before fitting)");
  fitc->add_option("--anchor-year", fit.anchor_year, "anchor year for decadal trends");
  fitc->add_option("--log-transform", fit.log_vars, "comma-separated variables to log");
  fitc->add_option("--estimator", fit.estimator, "no_iv or iv");
  fitc->add_option("--error-model", fit.error_model, "iid or spatial (both stages)");
  fitc->add_option("--error-model-s1", fit.error_model_s1, "stage-1 error model");
  fitc->add_option("--error-model-s2", fit.error_model_s2, "stage-2 error model");
  fitc->add_option("--spillover", fit.spillover, "spillover estimator type: 0, 1 or 2");
  fitc->add_option("--kernel-truncation", fit.kernel_truncation, "kernel truncation distance");
  fitc->add_option("--z", fit.z_var, "instrument variable")->required();
  fitc->add_option("--a", fit.a_var, "treatment variable")->required();
  fitc->add_option("--y", fit.y_var, "response variable")->required();
  fitc->add_option("--covariates", fit.covariates,
                   "extra covariate slopes, `name[:s1|s2|both]`");
  fitc->add_flag("--no-intercept-covariates", fit.no_intercept_covariates,
                 "omit the treatment/response intercept covariates");
  fitc->add_option("--out", fit.out_path, "report path (JSON); stdout when omitted");

  // ingest
  std::string panel_path, slopes_out, drop_log;
  int anchor_year = 1990;
  std::string ingest_log_vars;
  CLI::App* ingest = app.add_subcommand("ingest", "extract per-location decadal slopes");
  ingest->add_option("--panel", panel_path, "panel CSV")->required();
  ingest->add_option("--anchor-year", anchor_year, "anchor year");
  ingest->add_option("--log-transform", ingest_log_vars, "comma-separated variables to log");
  ingest->add_option("--out", slopes_out, "slope dataset CSV")->required();
  ingest->add_option("--drop-log", drop_log, "dropped-location log CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed() || sweep->parsed()) {
      siv::RunConfig config = siv::load_run_config(config_path);
      if (seed_override) config.base_seed = *seed_override;
      if (workers_override) config.workers = *workers_override;
      if (!format.empty()) config.format = format;
      const siv::RunResult result = simulate->parsed() ? siv::run_simulate(config, out_dir)
                                                       : siv::run_sweep(config, out_dir);
      for (const auto& c : result.cells)
        std::fprintf(stderr, "cell %-28s reps=%d rejection_failures=%d wall=%.1fs\n",
                     c.name.c_str(), c.replicates, c.rejection_failures, c.wall_ms / 1000.0);
      for (const auto& o : result.outputs) std::cout << o << '\n';
      return result.any_cell_failed ? 1 : 0;
    }
    if (fitc->parsed()) {
      if (fit.data_path.empty() == fit.panel_path.empty())
        throw siv::InvalidConfigError("fit requires exactly one of --data or --panel");
      return cmd_fit(fit);
    }
    if (ingest->parsed()) {
      const siv::PanelData panel = siv::read_panel_csv(panel_path);
      const siv::SlopeDataset ds =
          siv::decadal_slopes(panel, anchor_year, parse_log_vars(ingest_log_vars));
      siv::write_slopes_csv(ds, slopes_out);
      if (!drop_log.empty()) siv::write_drop_log(ds, drop_log);
      std::fprintf(stderr, "ingested %zu locations (%zu dropped)\n", ds.locations.size(),
                   ds.dropped.size());
      return 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}

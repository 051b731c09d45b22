#include "siv/runner.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

extern "C" void openblas_set_num_threads(int);

namespace siv {

namespace {

using nlohmann::json;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ScenarioConfig parse_scenario(const json& s, const std::string& origin) {
  if (!s.contains("generator"))
    throw ParseError(origin + ": scenario is missing 'generator'");
  ScenarioConfig cfg = ScenarioConfig::defaults_for(parse_generator(s.at("generator")));
  if (s.contains("grid")) {
    const auto& g = s.at("grid");
    if (g.contains("side")) cfg.grid_side = g.at("side").get<int>();
    if (g.contains("extent")) cfg.extent = g.at("extent").get<double>();
  }
  if (s.contains("coefficients"))
    for (const auto& [k, v] : s.at("coefficients").items()) cfg.coef[k] = v.get<double>();
  if (s.contains("gp_ranges"))
    for (const auto& [k, v] : s.at("gp_ranges").items()) cfg.gp_range[k] = v.get<double>();
  if (s.contains("targets")) {
    const auto& t = s.at("targets");
    if (t.contains("cor_za"))
      cfg.targets.cor_za = t.at("cor_za").is_null()
                               ? std::optional<double>{}
                               : std::optional<double>{t.at("cor_za").get<double>()};
    if (t.contains("cor_zu"))
      cfg.targets.cor_zu = t.at("cor_zu").is_null()
                               ? std::optional<double>{}
                               : std::optional<double>{t.at("cor_zu").get<double>()};
    if (t.contains("tolerance")) cfg.targets.tolerance = t.at("tolerance").get<double>();
  }
  if (s.contains("max_attempts")) cfg.max_attempts = s.at("max_attempts").get<int>();
  if (s.contains("tune")) cfg.tune = s.at("tune").get<bool>();
  if (s.contains("kernel_truncation_factor"))
    cfg.kernel_truncation_factor = s.at("kernel_truncation_factor").get<double>();
  return cfg;
}

void apply_overrides(ScenarioConfig& cfg, const json& o, const std::string& origin) {
  if (o.contains("coefficients"))
    for (const auto& [k, v] : o.at("coefficients").items()) cfg.coef[k] = v.get<double>();
  if (o.contains("gp_ranges"))
    for (const auto& [k, v] : o.at("gp_ranges").items()) cfg.gp_range[k] = v.get<double>();
  if (o.contains("targets")) {
    const auto& t = o.at("targets");
    if (t.contains("cor_za"))
      cfg.targets.cor_za = t.at("cor_za").is_null()
                               ? std::optional<double>{}
                               : std::optional<double>{t.at("cor_za").get<double>()};
    if (t.contains("cor_zu"))
      cfg.targets.cor_zu = t.at("cor_zu").is_null()
                               ? std::optional<double>{}
                               : std::optional<double>{t.at("cor_zu").get<double>()};
    if (t.contains("tolerance")) cfg.targets.tolerance = t.at("tolerance").get<double>();
  }
  if (o.contains("grid")) {
    const auto& g = o.at("grid");
    if (g.contains("side")) cfg.grid_side = g.at("side").get<int>();
    if (g.contains("extent")) cfg.extent = g.at("extent").get<double>();
  }
  if (o.contains("max_attempts")) cfg.max_attempts = o.at("max_attempts").get<int>();
  if (o.contains("tune")) cfg.tune = o.at("tune").get<bool>();
  (void)origin;
}

ModelSpec parse_model(const json& m, GeneratorKind kind, const std::string& origin) {
  ModelSpec spec;
  if (!m.contains("estimator")) throw ParseError(origin + ": model is missing 'estimator'");
  spec.estimator = m.at("estimator").get<std::string>();
  if (spec.estimator == "two_stage_iv") spec.estimator = "iv";
  static const std::vector<std::string> known = {"no_iv",  "iv",    "no_instrument",
                                                 "type0",  "type1", "type2"};
  if (std::find(known.begin(), known.end(), spec.estimator) == known.end())
    throw ParseError(origin + ": unknown estimator '" + spec.estimator + "'");

  if (m.contains("error_model")) {
    spec.em1 = spec.em2 = parse_error_model(m.at("error_model").get<std::string>());
  }
  if (m.contains("error_model_s1"))
    spec.em1 = parse_error_model(m.at("error_model_s1").get<std::string>());
  if (m.contains("error_model_s2"))
    spec.em2 = parse_error_model(m.at("error_model_s2").get<std::string>());

  const bool two_z = kind == GeneratorKind::ValidIv || kind == GeneratorKind::InvalidIv;
  spec.instrument = two_z ? "z_local" : "z";
  if (m.contains("instrument")) {
    const std::string inst = m.at("instrument").get<std::string>();
    if (inst == "local")
      spec.instrument = "z_local";
    else if (inst == "spatial")
      spec.instrument = "z_spatial";
    else
      spec.instrument = inst;
  }
  spec.name = m.contains("name") ? m.at("name").get<std::string>() : spec.estimator;
  return spec;
}

std::string format_target(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::pair<double, std::optional<double>> true_effects(const ScenarioConfig& cfg) {
  switch (cfg.kind) {
    case GeneratorKind::ValidIv:
    case GeneratorKind::InvalidIv: return {cfg.require_coef("delta1"), std::nullopt};
    case GeneratorKind::RealInspired: return {std::sqrt(cfg.require_coef("f")), std::nullopt};
    case GeneratorKind::Interference:
      return {cfg.require_coef("delta1"), cfg.require_coef("delta2")};
  }
  return {1.0, std::nullopt};
}

bool reports_delta2(const std::string& estimator) {
  return estimator == "no_instrument" || estimator == "type0" || estimator == "type1" ||
         estimator == "type2";
}

bool needs_stage1(const std::string& estimator) {
  return estimator != "no_iv" && estimator != "no_instrument";
}

struct Outcome {
  bool ok = false;
  CausalEstimate est;
  std::string error;
};

CausalEstimate run_model(const ModelSpec& m, const GeneratedReplicate& rep,
                         const ScenarioEngine& engine, const EstimatorOptions& opts) {
  CausalDataset data = make_dataset(rep, m.instrument);
  if (m.estimator == "no_iv") return no_iv(data, m.em2, std::nullopt, opts);
  if (m.estimator == "iv") return two_stage_iv(data, m.em1, m.em2, opts);

  const KernelSpec kernel = engine.kernel_spec();
  if (m.estimator == "no_instrument") return no_iv(data, m.em2, kernel, opts);
  if (m.estimator == "type0") return spillover_type0(data, kernel, m.em1, m.em2, opts);
  if (m.estimator == "type1") return spillover_type1(data, kernel, m.em1, m.em2, opts);
  if (m.estimator == "type2") return spillover_type2(data, kernel, m.em1, m.em2, opts);
  throw InvalidConfigError("unknown estimator '" + m.estimator + "'");
}

// When the cell runs the four interference models on identical stages, the
// shared treatment-on-instrument fit is computed once per replicate.
bool suite_applicable(const std::vector<ModelSpec>& models, GeneratorKind kind) {
  if (kind != GeneratorKind::Interference || models.empty()) return false;
  for (const auto& m : models) {
    if (!reports_delta2(m.estimator)) return false;
    if (m.instrument != models.front().instrument || m.em1 != models.front().em1 ||
        m.em2 != models.front().em2)
      return false;
  }
  return true;
}

// Widened range bracket around pilot estimates for one fit role.
struct PhiBracket {
  double lo = 0.0, hi = 0.0;
  bool valid() const { return lo > 0.0 && hi > lo; }
  void absorb(const FitResult& fit) {
    if (!fit.spatial || fit.diag.range_at_lower || fit.diag.range_at_upper) return;
    const double phi = fit.cov.range;
    lo = lo > 0.0 ? std::min(lo, phi) : phi;
    hi = std::max(hi, phi);
  }
  GpFitOptions options() const {
    GpFitOptions o;
    if (valid()) {
      o.phi_lo = lo / 8.0;
      o.phi_hi = hi * 8.0;
      o.n_seeds = 3;
      // replicate fits tolerate a looser range optimum; statistical noise
      // dominates well before 1e-5 on log(phi)
      o.outer_xtol = 1e-5;
    }
    return o;
  }
};

struct CellPlan {
  EstimatorOptions options;  // shared brackets; kernel pointer set per cell
  PhiBracket s1, s1_spill, s2;

  void finalize(const ScenarioEngine& engine) {
    options.stage1 = s1.options();
    options.stage1_spill = s1_spill.options();
    options.stage2 = s2.options();
    options.kernel_w = engine.kernel();
  }
};

CellPlan make_cell_plan(const ScenarioEngine& engine, const std::vector<ModelSpec>& models,
                        std::uint64_t base_seed, std::uint64_t cell_index) {
  CellPlan plan;
  bool any_spatial = false;
  for (const auto& m : models)
    any_spatial = any_spatial || m.em1 == ErrorModel::Spatial || m.em2 == ErrorModel::Spatial;
  if (!any_spatial) {
    plan.finalize(engine);
    return plan;
  }

  Rng rng = Rng::for_replicate(base_seed, cell_index, Rng::kPilotTag);
  try {
    const GeneratedReplicate pilot = engine.generate(rng);
    for (const auto& m : models) {
      if (m.em1 != ErrorModel::Spatial && m.em2 != ErrorModel::Spatial) continue;
      try {
        const CausalEstimate est = run_model(m, pilot, engine, EstimatorOptions{});
        if (m.em2 == ErrorModel::Spatial) plan.s2.absorb(est.stage2);
        if (m.em1 == ErrorModel::Spatial && est.stage1) plan.s1.absorb(*est.stage1);
        if (m.em1 == ErrorModel::Spatial && est.stage1_spill)
          plan.s1_spill.absorb(*est.stage1_spill);
      } catch (const Error&) {
        // pilot failures fall back to the full search box
      }
    }
  } catch (const Error&) {
  }
  plan.finalize(engine);
  return plan;
}

struct CellRun {
  CellReport report;
  std::vector<MetricsRow> rows;
  bool hard_failed = false;
};

CellRun run_cell(const RunConfig& config, const CellSpec& cell, std::uint64_t cell_index) {
  const auto t0 = std::chrono::steady_clock::now();
  ScenarioEngine engine(cell.scenario, config.base_seed, cell_index);
  const CellPlan plan = make_cell_plan(engine, config.models, config.base_seed, cell_index);

  const int R = config.replicates;
  const int M = static_cast<int>(config.models.size());
  std::vector<std::vector<Outcome>> outcomes(M);
  for (auto& v : outcomes) v.resize(R);
  std::vector<std::string> generation_errors(R);

  const bool use_suite = suite_applicable(config.models, cell.scenario.kind);

  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= R) break;
      Rng rng = Rng::for_replicate(config.base_seed, cell_index, static_cast<std::uint64_t>(r));
      GeneratedReplicate rep;
      try {
        rep = engine.generate(rng);
      } catch (const std::exception& e) {
        generation_errors[r] = e.what();
        continue;
      }

      bool done = false;
      if (use_suite) {
        try {
          const ModelSpec& front = config.models.front();
          const InterferenceSuite suite = interference_suite(
              make_dataset(rep, front.instrument), engine.kernel_spec(), front.em1, front.em2,
              plan.options);
          for (int m = 0; m < M; ++m) {
            const std::string& est = config.models[m].estimator;
            Outcome& o = outcomes[m][r];
            o.ok = true;
            if (est == "no_instrument")
              o.est = suite.no_instrument;
            else if (est == "type0")
              o.est = suite.type0;
            else if (est == "type1")
              o.est = suite.type1;
            else
              o.est = suite.type2;
          }
          done = true;
        } catch (const std::exception&) {
          done = false;  // isolate the failure per model below
        }
      }
      if (!done) {
        for (int m = 0; m < M; ++m) {
          Outcome& o = outcomes[m][r];
          try {
            o.est = run_model(config.models[m], rep, engine, plan.options);
            o.ok = true;
          } catch (const std::exception& e) {
            o.error = e.what();
          }
        }
      }
    }
  };

  int workers = config.workers > 0 ? config.workers
                                   : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, R));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  CellRun run;
  run.report.name = cell.name;
  run.report.replicates = R;
  for (int r = 0; r < R; ++r)
    if (!generation_errors[r].empty()) ++run.report.rejection_failures;
  run.hard_failed = run.report.rejection_failures > 0;

  const auto [truth_d1, truth_d2] = true_effects(engine.config());
  for (int m = 0; m < M; ++m) {
    const ModelSpec& spec = config.models[m];
    std::vector<CausalEstimate> ok;
    int failed = 0;
    for (int r = 0; r < R; ++r) {
      if (outcomes[m][r].ok)
        ok.push_back(outcomes[m][r].est);
      else
        ++failed;
    }
    const std::string em_label = (spec.estimator == "no_iv" || spec.em1 == spec.em2)
                                     ? to_string(spec.em2)
                                     : to_string(spec.em1) + "_" + to_string(spec.em2);
    run.report.fit_failures.emplace_back(spec.name + "/" + em_label,
                                         failed - run.report.rejection_failures);
    if (static_cast<int>(ok.size()) >= 2) {
      const auto d2 = reports_delta2(spec.estimator) ? truth_d2 : std::nullopt;
      const ReplicateSummary summary =
          summarize(ok, truth_d1, d2, failed - run.report.rejection_failures);
      for (auto& row : to_rows(cell.name, spec.name, em_label, summary))
        run.rows.push_back(std::move(row));
    }
  }

  run.report.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
  return run;
}

void sort_rows(std::vector<MetricsRow>& rows) {
  std::sort(rows.begin(), rows.end(), [](const MetricsRow& a, const MetricsRow& b) {
    return std::tie(a.scenario, a.model, a.error_model, a.param) <
           std::tie(b.scenario, b.model, b.error_model, b.param);
  });
}

void write_manifest(const RunConfig& config, const RunResult& result, const std::string& path) {
  nlohmann::ordered_json m;
  m["name"] = config.name;
  m["config_hash"] = hash_hex(config.content_hash);
  m["base_seed"] = config.base_seed;
  m["version"] = kVersion;
  m["replicates"] = config.replicates;
  m["workers"] = config.workers;
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : result.cells) {
    nlohmann::ordered_json fails;
    for (const auto& [label, count] : c.fit_failures) fails[label] = count;
    cells.push_back({{"name", c.name},
                     {"replicates", c.replicates},
                     {"rejection_failures", c.rejection_failures},
                     {"fit_failures", fails},
                     {"wall_ms", c.wall_ms}});
  }
  m["cells"] = cells;
  m["outputs"] = result.outputs;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << m.dump(2) << '\n';
}

RunResult run_cells(const RunConfig& config, const std::string& out_dir, bool sweep_mode) {
  openblas_set_num_threads(1);
  if (config.replicates < 1)
    throw InvalidConfigError("replicates must be >= 1");
  if (config.models.empty()) throw InvalidConfigError("config lists no models");
  if (config.cells.empty()) throw InvalidConfigError("config has no cells");

  std::filesystem::create_directories(out_dir);
  RunResult result;
  for (std::size_t c = 0; c < config.cells.size(); ++c) {
    CellRun run = run_cell(config, config.cells[c], static_cast<std::uint64_t>(c));
    result.cells.push_back(run.report);
    result.any_cell_failed = result.any_cell_failed || run.hard_failed;
    for (auto& row : run.rows) result.metrics.push_back(std::move(row));
  }
  sort_rows(result.metrics);

  const std::string stem = out_dir + "/" + config.name;
  if (config.format == "json") {
    write_metrics_json(stem + "_metrics.json", result.metrics);
    result.outputs.push_back(stem + "_metrics.json");
  } else {
    write_metrics_csv(stem + "_metrics.csv", result.metrics);
    result.outputs.push_back(stem + "_metrics.csv");
  }

  if (sweep_mode) {
    std::vector<SweepCell> cells;
    for (const auto& row : result.metrics) {
      const auto spec = std::find_if(
          config.cells.begin(), config.cells.end(),
          [&](const CellSpec& s) { return s.name == row.scenario; });
      SweepCell sc;
      sc.scenario = row.scenario;
      sc.target_cor_za = spec->target_cor_za;
      sc.target_cor_zu = spec->target_cor_zu;
      sc.row = row;
      cells.push_back(std::move(sc));
    }
    result.sweep = sweep_grid(cells);
    write_sweep_csv(stem + "_sweep.csv", result.sweep);
    result.outputs.push_back(stem + "_sweep.csv");
  }

  write_manifest(config, result, stem + "_manifest.json");
  result.outputs.push_back(stem + "_manifest.json");
  return result;
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
  try {
    RunConfig cfg;
    cfg.name = j.at("name").get<std::string>();
    cfg.base_seed = j.at("base_seed").get<std::uint64_t>();
    cfg.replicates = j.at("replicates").get<int>();
    if (cfg.replicates < 1) throw ParseError(origin + ": replicates must be >= 1");
    if (j.contains("workers")) cfg.workers = j.at("workers").get<int>();
    if (j.contains("format")) cfg.format = j.at("format").get<std::string>();
    if (cfg.format != "csv" && cfg.format != "json")
      throw ParseError(origin + ": format must be csv or json");

    const ScenarioConfig base = parse_scenario(j.at("scenario"), origin);
    for (const auto& m : j.at("models"))
      cfg.models.push_back(parse_model(m, base.kind, origin));
    if (cfg.models.empty()) throw ParseError(origin + ": 'models' is empty");

    if (j.contains("sweep")) {
      cfg.is_sweep = true;
      for (const auto& v : j.at("sweep").at("cor_za")) cfg.sweep_cor_za.push_back(v.get<double>());
      for (const auto& v : j.at("sweep").at("cor_zu")) cfg.sweep_cor_zu.push_back(v.get<double>());
      if (cfg.sweep_cor_za.empty() || cfg.sweep_cor_zu.empty())
        throw ParseError(origin + ": sweep target grids must be nonempty");
      for (double za : cfg.sweep_cor_za) {
        for (double zu : cfg.sweep_cor_zu) {
          CellSpec cell;
          cell.scenario = base;
          cell.scenario.targets.cor_za = za;
          cell.scenario.targets.cor_zu = zu;
          cell.scenario.tune = true;
          cell.target_cor_za = za;
          cell.target_cor_zu = zu;
          cell.name = "za" + format_target(za) + "_zu" + format_target(zu);
          cfg.cells.push_back(std::move(cell));
        }
      }
    } else if (j.contains("cells")) {
      for (const auto& c : j.at("cells")) {
        CellSpec cell;
        cell.name = c.at("name").get<std::string>();
        cell.scenario = base;
        if (c.contains("overrides")) apply_overrides(cell.scenario, c.at("overrides"), origin);
        cell.target_cor_za = cell.scenario.targets.cor_za.value_or(0.0);
        cell.target_cor_zu = cell.scenario.targets.cor_zu.value_or(0.0);
        cfg.cells.push_back(std::move(cell));
      }
      if (cfg.cells.empty()) throw ParseError(origin + ": 'cells' is empty");
    } else {
      CellSpec cell;
      cell.name = cfg.name;
      cell.scenario = base;
      cell.target_cor_za = base.targets.cor_za.value_or(0.0);
      cell.target_cor_zu = base.targets.cor_zu.value_or(0.0);
      cfg.cells.push_back(std::move(cell));
    }

    cfg.content_hash = fnv1a(json_text);
    return cfg;
  } catch (const json::exception& e) {
    throw ParseError(origin + ": " + e.what());
  }
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str(), path);
}

RunResult run_simulate(const RunConfig& config, const std::string& out_dir) {
  return run_cells(config, out_dir, /*sweep_mode=*/false);
}

RunResult run_sweep(const RunConfig& config, const std::string& out_dir) {
  if (!config.is_sweep) throw InvalidConfigError("config has no 'sweep' target grids");
  return run_cells(config, out_dir, /*sweep_mode=*/true);
}

}  // namespace siv

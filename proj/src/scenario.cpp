#include "siv/scenario.hpp"

#include <cmath>
#include <sstream>
#include <vector>

namespace siv {

namespace {

Eigen::VectorXd iid_normal(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

bool within(double value, double target, double tol) { return std::abs(value - target) <= tol; }

}  // namespace

GeneratorKind parse_generator(const std::string& s) {
  if (s == "valid_iv") return GeneratorKind::ValidIv;
  if (s == "invalid_iv") return GeneratorKind::InvalidIv;
  if (s == "real_inspired") return GeneratorKind::RealInspired;
  if (s == "interference") return GeneratorKind::Interference;
  throw InvalidConfigError("unknown generator '" + s + "'");
}

std::string to_string(GeneratorKind k) {
  switch (k) {
    case GeneratorKind::ValidIv: return "valid_iv";
    case GeneratorKind::InvalidIv: return "invalid_iv";
    case GeneratorKind::RealInspired: return "real_inspired";
    case GeneratorKind::Interference: return "interference";
  }
  return "?";
}

double ScenarioConfig::coef_or(const std::string& name, double fallback) const {
  const auto it = coef.find(name);
  return it == coef.end() ? fallback : it->second;
}

double ScenarioConfig::require_coef(const std::string& name) const {
  const auto it = coef.find(name);
  if (it == coef.end())
    throw InvalidConfigError("scenario coefficient '" + name + "' is required for " +
                             to_string(kind));
  return it->second;
}

double ScenarioConfig::range_or(const std::string& name, double fallback) const {
  const auto it = gp_range.find(name);
  return it == gp_range.end() ? fallback : it->second;
}

ScenarioConfig ScenarioConfig::defaults_for(GeneratorKind kind) {
  ScenarioConfig c;
  c.kind = kind;
  switch (kind) {
    case GeneratorKind::ValidIv:
      c.grid_side = 30;
      c.coef = {{"beta1", 1.0},  {"beta2", 1.1},  {"beta3", 0.5},
                {"delta1", 1.0}, {"delta2", 1.0}, {"delta3", 1.0},
                {"treat_noise_sd", 0.0}};
      c.gp_range = {{"z_spatial", 0.2}, {"u", 0.2}, {"v", 0.2}};
      c.targets = {0.7, 0.0, 0.02};
      break;
    case GeneratorKind::InvalidIv:
      c.grid_side = 30;
      c.coef = {{"beta1", 1.0},  {"beta2", 1.0},  {"beta3", 0.5},
                {"delta1", 1.0}, {"delta2", 1.0}, {"delta3", 1.0},
                {"gamma1", 0.1}, {"gamma2", 0.1}, {"treat_noise_sd", 0.0}};
      c.gp_range = {{"z_spatial", 0.2}, {"w", 0.2}, {"v", 0.2}};
      c.targets = {0.7, 0.1, 0.02};
      break;
    case GeneratorKind::RealInspired:
      c.grid_side = 20;
      c.coef = {{"a", 0.27},  {"b", 0.25},  {"c", 0.48},
                {"f", 0.063}, {"g", 0.023}, {"j", 0.914}};
      c.gp_range = {{"z", 0.0436}, {"u", 0.15}, {"w", 1.8}};
      c.targets = {};  // design-level targets; no per-draw rejection
      break;
    case GeneratorKind::Interference:
      c.grid_side = 32;
      c.coef = {{"beta0", 0.0},  {"gamma0", 0.0}, {"delta1", 1.0}, {"delta2", 1.0},
                {"beta1", 2.0},  {"beta2", 1.0},  {"gamma1", 2.3}, {"gamma2", 2.0}};
      c.gp_range = {{"z", 0.2}, {"u", 0.2}, {"v", 0.1}};
      c.targets = {0.75, std::nullopt, 0.02};
      break;
  }
  return c;
}

void ScenarioConfig::validate() const {
  if (grid_side < 2) throw InvalidConfigError("scenario grid side must be >= 2");
  if (!(extent > 0.0)) throw InvalidConfigError("scenario extent must be > 0");
  if (max_attempts < 1) throw InvalidConfigError("max_attempts must be >= 1");
  if (!(targets.tolerance > 0.0)) throw InvalidConfigError("target tolerance must be > 0");
  for (const auto& [name, phi] : gp_range)
    if (!(phi > 0.0)) throw InvalidConfigError("gp range for '" + name + "' must be > 0");
}

ScenarioEngine::ScenarioEngine(const ScenarioConfig& config, std::uint64_t base_seed,
                               std::uint64_t cell_index)
    : cfg_(config) {
  cfg_.validate();
  sites_ = std::make_shared<const SiteSet>(SiteSet::regular_grid(cfg_.grid_side, cfg_.extent));

  auto add_sampler = [&](const std::string& name, double phi) {
    samplers_.emplace(name, GpSampler(*sites_, CovarianceSpec{1.0, phi, 0.0}));
  };
  switch (cfg_.kind) {
    case GeneratorKind::ValidIv:
      add_sampler("z_spatial", cfg_.range_or("z_spatial", 0.2));
      add_sampler("u", cfg_.range_or("u", 0.2));
      add_sampler("v", cfg_.range_or("v", 0.2));
      break;
    case GeneratorKind::InvalidIv:
      add_sampler("z_spatial", cfg_.range_or("z_spatial", 0.2));
      add_sampler("w", cfg_.range_or("w", 0.2));
      add_sampler("v", cfg_.range_or("v", 0.2));
      break;
    case GeneratorKind::RealInspired:
      add_sampler("z", cfg_.range_or("z", 0.0436));
      add_sampler("u", cfg_.range_or("u", 0.15));
      add_sampler("w", cfg_.range_or("w", 1.8));
      validate_real_inspired_design();
      break;
    case GeneratorKind::Interference:
      add_sampler("z", cfg_.range_or("z", 0.2));
      add_sampler("u", cfg_.range_or("u", 0.2));
      add_sampler("v", cfg_.range_or("v", 0.1));
      kernel_w_ = kernel_matrix(*sites_, kernel_spec());
      break;
  }

  if (cfg_.tune) tune_coefficients(base_seed, cell_index);
}

KernelSpec ScenarioEngine::kernel_spec() const {
  return KernelSpec{cfg_.kernel_truncation_factor * sites_->grid_spacing()};
}

GeneratedReplicate ScenarioEngine::generate(Rng& rng) const {
  switch (cfg_.kind) {
    case GeneratorKind::ValidIv:
    case GeneratorKind::InvalidIv: return gen_valid_invalid(rng);
    case GeneratorKind::RealInspired: return gen_real_inspired(rng);
    case GeneratorKind::Interference: return gen_interference(rng);
  }
  throw InvalidConfigError("unreachable generator kind");
}

GeneratedReplicate ScenarioEngine::gen_valid_invalid(Rng& rng) const {
  const int n = sites_->size();
  const bool invalid = cfg_.kind == GeneratorKind::InvalidIv;
  const double b1 = cfg_.require_coef("beta1"), b2 = cfg_.require_coef("beta2");
  const double b3 = cfg_.require_coef("beta3");
  const double d1 = cfg_.require_coef("delta1"), d2 = cfg_.require_coef("delta2");
  const double d3 = cfg_.require_coef("delta3");
  const double g1 = invalid ? cfg_.require_coef("gamma1") : 0.0;
  const double g2 = invalid ? cfg_.require_coef("gamma2") : 0.0;
  const double noise_sd = cfg_.coef_or("treat_noise_sd", 0.0);
  const auto& tz = cfg_.targets;

  GeneratedReplicate rep;
  rep.sites = sites_;
  rep.true_delta1 = d1;

  Eigen::VectorXd zl, zs, u, a;
  double c_zla = 0, c_zsa = 0, c_zlu = 0, c_zsu = 0;
  bool accepted = false;
  int attempt = 0;
  for (; attempt < cfg_.max_attempts; ++attempt) {
    zl = iid_normal(n, rng);
    zs = samplers_.at("z_spatial").draw(rng);
    if (invalid) {
      const Eigen::VectorXd w = samplers_.at("w").draw(rng);
      u = g1 * zs + g2 * zl + w;
    } else {
      u = samplers_.at("u").draw(rng);
    }
    a = b1 * zl + b2 * zs + b3 * u;
    if (noise_sd > 0.0) a += noise_sd * iid_normal(n, rng);

    c_zla = correlation(zl, a);
    c_zsa = correlation(zs, a);
    c_zlu = correlation(zl, u);
    c_zsu = correlation(zs, u);
    bool ok = true;
    if (tz.cor_za)
      ok = within(c_zla, *tz.cor_za, tz.tolerance) && within(c_zsa, *tz.cor_za, tz.tolerance);
    if (ok && tz.cor_zu)
      ok = within(c_zlu, *tz.cor_zu, tz.tolerance) && within(c_zsu, *tz.cor_zu, tz.tolerance);
    if (ok) {
      accepted = true;
      break;
    }
  }
  if (!accepted) {
    std::ostringstream msg;
    msg << "rejection targets unattainable after " << cfg_.max_attempts
        << " attempts; last cor(Z_local,A)=" << c_zla << " cor(Z_spatial,A)=" << c_zsa
        << " cor(Z_local,U)=" << c_zlu << " cor(Z_spatial,U)=" << c_zsu;
    throw UnattainableTargetError(msg.str());
  }

  const Eigen::VectorXd v = samplers_.at("v").draw(rng);
  const Eigen::VectorXd e2 = iid_normal(n, rng);
  const Eigen::VectorXd y = d1 * a + d2 * u + d3 * v + e2;

  rep.attempts_used = attempt + 1;
  rep.fields = {{"z_local", zl}, {"z_spatial", zs}, {"u", u}, {"v", v}, {"a", a}, {"y", y}};
  rep.achieved_cors = {{"cor_zl_a", c_zla}, {"cor_zs_a", c_zsa},
                       {"cor_zl_u", c_zlu}, {"cor_zs_u", c_zsu}};
  return rep;
}

GeneratedReplicate ScenarioEngine::gen_real_inspired(Rng& rng) const {
  const int n = sites_->size();
  const double a = cfg_.require_coef("a"), b = cfg_.require_coef("b"), c = cfg_.require_coef("c");
  const double f = cfg_.require_coef("f"), g = cfg_.require_coef("g"), j = cfg_.require_coef("j");

  const Eigen::VectorXd z = samplers_.at("z").draw(rng);
  const Eigen::VectorXd u = samplers_.at("u").draw(rng);
  const Eigen::VectorXd w = samplers_.at("w").draw(rng);
  const Eigen::VectorXd eps = iid_normal(n, rng);

  const Eigen::VectorXd treat = std::sqrt(a) * z + std::sqrt(b) * u + std::sqrt(c) * w;
  const Eigen::VectorXd resp = std::sqrt(f) * treat + std::sqrt(g) * u + std::sqrt(j) * eps;

  GeneratedReplicate rep;
  rep.sites = sites_;
  rep.true_delta1 = std::sqrt(f);
  rep.attempts_used = 1;
  rep.fields = {{"z", z}, {"u", u}, {"w", w}, {"a", treat}, {"y", resp}};
  rep.achieved_cors = {{"cor_z_a", correlation(z, treat)}, {"cor_a_y", correlation(treat, resp)}};
  return rep;
}

GeneratedReplicate ScenarioEngine::gen_interference(Rng& rng) const {
  const int n = sites_->size();
  const double b0 = cfg_.coef_or("beta0", 0.0), g0 = cfg_.coef_or("gamma0", 0.0);
  const double d1 = cfg_.require_coef("delta1"), d2 = cfg_.require_coef("delta2");
  const double b1 = cfg_.require_coef("beta1"), b2 = cfg_.require_coef("beta2");
  const double g1 = cfg_.require_coef("gamma1"), g2 = cfg_.require_coef("gamma2");
  const auto& tz = cfg_.targets;

  Eigen::VectorXd z, u, a;
  double c_za = 0;
  bool accepted = false;
  int attempt = 0;
  for (; attempt < cfg_.max_attempts; ++attempt) {
    z = samplers_.at("z").draw(rng);
    u = samplers_.at("u").draw(rng);
    const Eigen::VectorXd e2 = iid_normal(n, rng);
    a = Eigen::VectorXd::Constant(n, g0) + g1 * z + g2 * u + e2;
    c_za = correlation(z, a);
    if (!tz.cor_za || within(c_za, *tz.cor_za, tz.tolerance)) {
      accepted = true;
      break;
    }
  }
  if (!accepted) {
    std::ostringstream msg;
    msg << "rejection target cor(Z,A) unattainable after " << cfg_.max_attempts
        << " attempts; last value " << c_za;
    throw UnattainableTargetError(msg.str());
  }

  const Eigen::VectorXd v = samplers_.at("v").draw(rng);
  const Eigen::VectorXd e1 = iid_normal(n, rng);
  const Eigen::VectorXd atilde = *kernel_w_ * a;
  const Eigen::VectorXd y =
      Eigen::VectorXd::Constant(n, b0) + d1 * a + d2 * atilde + b1 * u + b2 * v + e1;

  GeneratedReplicate rep;
  rep.sites = sites_;
  rep.true_delta1 = d1;
  rep.true_delta2 = d2;
  rep.attempts_used = attempt + 1;
  rep.fields = {{"z", z}, {"u", u}, {"v", v}, {"a", a}, {"a_tilde", atilde}, {"y", y}};
  rep.achieved_cors = {{"cor_z_a", c_za}};
  return rep;
}

namespace {

// Root of h(s) = mean_cor(s) - target on [-64, 64] by bisection on the sign
// change; mean_cor approaches +/-1 at the interval ends, so a bracket always
// exists for targets inside (-1, 1).
template <class F>
double solve_scale(F&& mean_cor, double target) {
  double lo = -64.0, hi = 64.0;
  if (!(mean_cor(lo) - target < 0.0) || !(mean_cor(hi) - target > 0.0))
    throw UnattainableTargetError("tuner cannot bracket the correlation target " +
                                  std::to_string(target));
  for (int it = 0; it < 200 && hi - lo > 1e-9; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_cor(mid) - target < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

// Centering by bisection over a signed scale applied to the instrument-path
// coefficients; the pilot fields are drawn once and reused so the objective
// is a smooth deterministic function of the scale.
void ScenarioEngine::tune_coefficients(std::uint64_t base_seed, std::uint64_t cell_index) {
  if (cfg_.kind == GeneratorKind::RealInspired) return;
  constexpr int kPilot = 64;
  const int n = sites_->size();
  Rng rng = Rng::for_replicate(base_seed, cell_index, Rng::kTunerTag);

  struct PilotDraw {
    Eigen::VectorXd zl, zs, w_or_u;
  };
  std::vector<PilotDraw> pilots;
  pilots.reserve(kPilot);
  if (cfg_.kind == GeneratorKind::Interference) {
    for (int k = 0; k < kPilot; ++k) {
      PilotDraw p;
      p.zs = samplers_.at("z").draw(rng);
      p.w_or_u = samplers_.at("u").draw(rng);
      p.zl = iid_normal(n, rng);  // plays the role of the iid error in A
      pilots.push_back(std::move(p));
    }
    if (!cfg_.targets.cor_za) return;
    const double g2 = cfg_.require_coef("gamma2");
    auto mean_cor = [&](double g1) {
      double s = 0;
      for (const auto& p : pilots) {
        const Eigen::VectorXd a = g1 * p.zs + g2 * p.w_or_u + p.zl;
        s += correlation(p.zs, a);
      }
      return s / kPilot;
    };
    cfg_.coef["gamma1"] = solve_scale(mean_cor, *cfg_.targets.cor_za);
    return;
  }

  const bool invalid = cfg_.kind == GeneratorKind::InvalidIv;
  for (int k = 0; k < kPilot; ++k) {
    PilotDraw p;
    p.zl = iid_normal(n, rng);
    p.zs = samplers_.at("z_spatial").draw(rng);
    p.w_or_u = samplers_.at(invalid ? "w" : "u").draw(rng);
    pilots.push_back(std::move(p));
  }

  double g1 = invalid ? cfg_.require_coef("gamma1") : 0.0;
  double g2 = invalid ? cfg_.require_coef("gamma2") : 0.0;

  // Stage 1 (invalid only): scale (gamma1, gamma2) for the cor(Z,U) target.
  if (invalid && cfg_.targets.cor_zu) {
    const double r1 = g1 != 0.0 ? g1 : 1.0, r2 = g2 != 0.0 ? g2 : 1.0;
    auto mean_cor = [&](double s) {
      double acc = 0;
      for (const auto& p : pilots) {
        const Eigen::VectorXd u = s * r1 * p.zs + s * r2 * p.zl + p.w_or_u;
        acc += 0.5 * (correlation(p.zl, u) + correlation(p.zs, u));
      }
      return acc / kPilot;
    };
    const double s = solve_scale(mean_cor, *cfg_.targets.cor_zu);
    g1 = s * r1;
    g2 = s * r2;
    cfg_.coef["gamma1"] = g1;
    cfg_.coef["gamma2"] = g2;
  }

  // Stage 2: scale (beta1, beta2) for the cor(Z,A) target.
  if (cfg_.targets.cor_za) {
    const double b3 = cfg_.require_coef("beta3");
    const double r1 = cfg_.require_coef("beta1"), r2 = cfg_.require_coef("beta2");
    auto mean_cor = [&](double s) {
      double acc = 0;
      for (const auto& p : pilots) {
        const Eigen::VectorXd u =
            invalid ? Eigen::VectorXd(g1 * p.zs + g2 * p.zl + p.w_or_u) : p.w_or_u;
        const Eigen::VectorXd a = s * r1 * p.zl + s * r2 * p.zs + b3 * u;
        acc += 0.5 * (correlation(p.zl, a) + correlation(p.zs, a));
      }
      return acc / kPilot;
    };
    const double s = solve_scale(mean_cor, *cfg_.targets.cor_za);
    cfg_.coef["beta1"] = s * r1;
    cfg_.coef["beta2"] = s * r2;
  }
}

void ScenarioEngine::validate_real_inspired_design() const {
  // The observed-data statistics are carried as configuration constants so
  // the generator runs without the restricted dataset: practical-range to
  // max-distance ratios per latent field (window 0.02) and the implied
  // cor(Z,A) (window 0.035).
  const double dmax = sites_->max_distance();
  const auto check_ratio = [&](const std::string& name, const char* key) {
    const auto it = cfg_.coef.find(key);
    if (it == cfg_.coef.end()) return;
    const double ratio = practical_range(cfg_.gp_range.at(name)) / dmax;
    if (std::abs(ratio - it->second) > 0.02)
      throw UnattainableTargetError("real_inspired: practical-range ratio for '" + name +
                                    "' is " + std::to_string(ratio) + ", target " +
                                    std::to_string(it->second));
  };
  check_ratio("z", "target_pr_ratio_z");
  check_ratio("u", "target_pr_ratio_u");
  check_ratio("w", "target_pr_ratio_w");

  const auto it = cfg_.coef.find("target_cor_za");
  if (it != cfg_.coef.end()) {
    const double a = cfg_.require_coef("a"), b = cfg_.require_coef("b"),
                 c = cfg_.require_coef("c");
    const double implied = std::sqrt(a) / std::sqrt(a + b + c);
    if (std::abs(implied - it->second) > 0.035)
      throw UnattainableTargetError("real_inspired: implied cor(Z,A) " + std::to_string(implied) +
                                    " misses target " + std::to_string(it->second));
  }
}

namespace {
GeneratedReplicate run_once(GeneratorKind kind, const ScenarioConfig& config,
                            std::uint64_t seed) {
  if (config.kind != kind)
    throw InvalidConfigError("scenario config generator mismatch: expected " + to_string(kind));
  ScenarioEngine engine(config, seed, 0);
  Rng rng = Rng::for_replicate(seed, 0, 1);
  return engine.generate(rng);
}
}  // namespace

GeneratedReplicate gen_valid_iv(const ScenarioConfig& config, std::uint64_t seed) {
  return run_once(GeneratorKind::ValidIv, config, seed);
}
GeneratedReplicate gen_invalid_iv(const ScenarioConfig& config, std::uint64_t seed) {
  return run_once(GeneratorKind::InvalidIv, config, seed);
}
GeneratedReplicate gen_real_inspired(const ScenarioConfig& config, std::uint64_t seed) {
  return run_once(GeneratorKind::RealInspired, config, seed);
}
GeneratedReplicate gen_interference(const ScenarioConfig& config, std::uint64_t seed) {
  return run_once(GeneratorKind::Interference, config, seed);
}

CausalDataset make_dataset(const GeneratedReplicate& rep, const std::string& instrument_field) {
  const auto it = rep.fields.find(instrument_field);
  if (it == rep.fields.end())
    throw InvalidConfigError("replicate has no instrument field '" + instrument_field + "'");
  CausalDataset d;
  d.sites = rep.sites;
  d.z = it->second;
  d.a = rep.fields.at("a");
  d.y = rep.fields.at("y");
  return d;
}

}  // namespace siv

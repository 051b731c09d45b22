#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "siv/causal.hpp"
#include "siv/gp.hpp"

namespace siv {

enum class GeneratorKind { ValidIv, InvalidIv, RealInspired, Interference };

GeneratorKind parse_generator(const std::string& s);
std::string to_string(GeneratorKind k);

struct RejectionTargets {
  std::optional<double> cor_za;  // applies to every instrument field
  std::optional<double> cor_zu;
  double tolerance = 0.02;
};

struct ScenarioConfig {
  GeneratorKind kind = GeneratorKind::ValidIv;
  int grid_side = 30;
  double extent = 1.0;
  std::map<std::string, double> coef;
  std::map<std::string, double> gp_range;
  RejectionTargets targets;
  int max_attempts = 10000;
  double kernel_truncation_factor = 1.5;  // interference: T = factor * grid spacing
  // Re-center the instrument-strength (and, for invalid_iv, instrument-
  // validity) coefficients on the targets before replication.
  bool tune = false;

  double coef_or(const std::string& name, double fallback) const;
  double require_coef(const std::string& name) const;
  double range_or(const std::string& name, double fallback) const;

  static ScenarioConfig defaults_for(GeneratorKind kind);
  void validate() const;
};

struct GeneratedReplicate {
  std::shared_ptr<const SiteSet> sites;
  std::map<std::string, Eigen::VectorXd> fields;
  double true_delta1 = 1.0;
  double true_delta2 = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, double> achieved_cors;
  int attempts_used = 0;
};

// Per-cell generator: sites, covariance factorizations and the kernel matrix
// are built once and shared, immutable, across replicate workers. Tuning (if
// enabled) runs at construction on a dedicated deterministic stream.
class ScenarioEngine {
 public:
  ScenarioEngine(const ScenarioConfig& config, std::uint64_t base_seed, std::uint64_t cell_index);

  GeneratedReplicate generate(Rng& rng) const;

  const ScenarioConfig& config() const { return cfg_; }  // tuned coefficients resolved
  std::shared_ptr<const SiteSet> sites() const { return sites_; }
  const Eigen::SparseMatrix<double>* kernel() const {
    return kernel_w_ ? &*kernel_w_ : nullptr;
  }
  KernelSpec kernel_spec() const;

 private:
  GeneratedReplicate gen_valid_invalid(Rng& rng) const;
  GeneratedReplicate gen_real_inspired(Rng& rng) const;
  GeneratedReplicate gen_interference(Rng& rng) const;
  void tune_coefficients(std::uint64_t base_seed, std::uint64_t cell_index);
  void validate_real_inspired_design() const;

  ScenarioConfig cfg_;
  std::shared_ptr<const SiteSet> sites_;
  std::map<std::string, GpSampler> samplers_;
  std::optional<Eigen::SparseMatrix<double>> kernel_w_;
};

// One-engine conveniences matching the four generators.
GeneratedReplicate gen_valid_iv(const ScenarioConfig& config, std::uint64_t seed);
GeneratedReplicate gen_invalid_iv(const ScenarioConfig& config, std::uint64_t seed);
GeneratedReplicate gen_real_inspired(const ScenarioConfig& config, std::uint64_t seed);
GeneratedReplicate gen_interference(const ScenarioConfig& config, std::uint64_t seed);

// View a generated replicate as a causal dataset using the named instrument
// field ("z_local", "z_spatial" or "z").
CausalDataset make_dataset(const GeneratedReplicate& rep, const std::string& instrument_field);

}  // namespace siv

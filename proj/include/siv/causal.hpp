#pragma once

#include <Eigen/Sparse>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "siv/geo.hpp"
#include "siv/regress.hpp"

namespace siv {

enum class ErrorModel { Iid, Spatial };

ErrorModel parse_error_model(const std::string& s);
std::string to_string(ErrorModel em);

struct Covariate {
  std::string name;
  Eigen::VectorXd values;
  bool stage1 = true;
  bool stage2 = true;
};

struct CausalDataset {
  std::shared_ptr<const SiteSet> sites;
  Eigen::VectorXd z;  // instrument
  Eigen::VectorXd a;  // treatment
  Eigen::VectorXd y;  // response
  std::vector<Covariate> covariates;

  void validate() const;
};

struct EffectEstimate {
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

struct CausalEstimate {
  EffectEstimate delta1;                  // direct effect
  std::optional<EffectEstimate> delta2;   // indirect effect (interference runs)
  std::optional<FitResult> stage1;        // treatment-on-instrument fit
  std::optional<FitResult> stage1_spill;  // type-2 spillover first stage
  FitResult stage2;
  double iv_residual_cor = 0.0;  // cor(Z, stage-2 residuals)
};

// Per-stage search options, filled in by the harness from per-cell pilots.
struct EstimatorOptions {
  GpFitOptions stage1;
  GpFitOptions stage1_spill;
  GpFitOptions stage2;
  // Precomputed kernel weight matrix; spillover estimators build one from
  // the KernelSpec when absent.
  const Eigen::SparseMatrix<double>* kernel_w = nullptr;
};

// Response regression of Y onto A (+ stage-2 covariates); no first stage.
// When `kernel` is given, the kernel average of observed A enters as a second
// regressor and delta2 is reported (the no-instrument interference model).
CausalEstimate no_iv(const CausalDataset& data, ErrorModel error_model,
                     const std::optional<KernelSpec>& kernel = std::nullopt,
                     const EstimatorOptions& options = {});

// Two-stage estimation: A on Z, then Y on the stage-1 fitted values.
CausalEstimate two_stage_iv(const CausalDataset& data, ErrorModel error_model_s1,
                            ErrorModel error_model_s2, const EstimatorOptions& options = {});

// Stage 2 regresses Y on fitted A and the kernel average of observed A.
CausalEstimate spillover_type0(const CausalDataset& data, const KernelSpec& kernel,
                               ErrorModel error_model_s1, ErrorModel error_model_s2,
                               const EstimatorOptions& options = {});

// Kernel average over stage-1 fitted treatments.
CausalEstimate spillover_type1(const CausalDataset& data, const KernelSpec& kernel,
                               ErrorModel error_model_s1, ErrorModel error_model_s2,
                               const EstimatorOptions& options = {});

// Separate first-stage regression of the kernel-averaged treatment on the
// kernel-averaged instrument.
CausalEstimate spillover_type2(const CausalDataset& data, const KernelSpec& kernel,
                               ErrorModel error_model_s1, ErrorModel error_model_s2,
                               const EstimatorOptions& options = {});

// All four interference models on one dataset, sharing the common
// treatment-on-instrument fit. Estimates are identical to calling the
// individual functions.
struct InterferenceSuite {
  CausalEstimate no_instrument;
  CausalEstimate type0;
  CausalEstimate type1;
  CausalEstimate type2;
};
InterferenceSuite interference_suite(const CausalDataset& data, const KernelSpec& kernel,
                                     ErrorModel error_model_s1, ErrorModel error_model_s2,
                                     const EstimatorOptions& options = {});

}  // namespace siv

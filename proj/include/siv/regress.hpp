#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "siv/geo.hpp"

namespace siv {

// Regression design with an explicit intercept column.
struct DesignMatrix {
  Eigen::MatrixXd X;
  std::vector<std::string> names;
  Eigen::VectorXd y;

  static DesignMatrix build(const Eigen::VectorXd& response,
                            const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns,
                            bool intercept = true);

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }
};

struct FitDiagnostics {
  bool converged = true;
  int n_profile_evals = 0;
  bool range_at_lower = false;
  bool range_at_upper = false;
  bool nugget_at_lower = false;
  bool nugget_at_upper = false;
  bool at_boundary() const {
    return range_at_lower || range_at_upper || nugget_at_lower || nugget_at_upper;
  }
};

struct FitResult {
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::VectorXd se;
  Eigen::VectorXd ci_lo;  // coef - 1.96 se
  Eigen::VectorXd ci_hi;  // coef + 1.96 se
  Eigen::MatrixXd coef_cov;

  bool spatial = false;
  CovarianceSpec cov;        // spatial fits
  double sigma2_iid = 0.0;   // i.i.d. fits

  double loglik = 0.0;
  double aic = 0.0;
  Eigen::VectorXd fitted;     // X beta-hat
  Eigen::VectorXd residuals;  // y - fitted
  FitDiagnostics diag;

  int index_of(const std::string& name) const;
  double coef_of(const std::string& name) const { return coef(index_of(name)); }
};

// Refresh se/ci from coef_cov (after a coefficient reparameterization).
void refresh_wald(FitResult& fit);

// Search controls for gp_mle_fit. Defaults reproduce the full multi-start
// search; the harness narrows the range bracket from a per-cell pilot fit.
struct GpFitOptions {
  double phi_lo = 0.0;  // 0 -> 1e-3 * max distance
  double phi_hi = 0.0;  // 0 -> 10 * max distance
  double outer_xtol = 1e-8;
  double inner_xtol = 1e-9;
  int max_fun = 400;
  int n_seeds = 5;
  // When the optimum pins to a narrowed phi_lo/phi_hi edge that is not the
  // default box edge, rerun once over the full box.
  bool fallback_full_box = true;
};

// Ordinary least squares with classical standard errors; log-likelihood and
// AIC under the i.i.d. Gaussian model (variance counted as one parameter).
FitResult ols_fit(const DesignMatrix& design);

// Gaussian maximum likelihood with exponential-covariance errors. The mean
// coefficients and total variance are profiled out; the numeric search runs
// over (log phi, logit nugget-fraction). Coefficient covariance conditions on
// the estimated covariance parameters.
FitResult gp_mle_fit(const DesignMatrix& design, const SiteSet& sites,
                     const GpFitOptions& options = {});

// Profile log-likelihood at fixed (phi, nugget fraction); beta and total
// variance profiled out. Used by the gradient diagnostics and tests.
double gp_profile_loglik(const DesignMatrix& design, const SiteSet& sites, double phi,
                         double nugget_frac);

// sigma^2 / (sigma^2 + tau^2).
double spatial_fraction(const CovarianceSpec& spec);

}  // namespace siv

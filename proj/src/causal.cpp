#include "siv/causal.hpp"

#include <cmath>

namespace siv {

namespace {

using Cols = std::vector<std::pair<std::string, Eigen::VectorXd>>;

FitResult fit_stage(const Eigen::VectorXd& y, const Cols& cols, ErrorModel em,
                    const SiteSet& sites, const GpFitOptions& opts) {
  const DesignMatrix design = DesignMatrix::build(y, cols);
  return em == ErrorModel::Iid ? ols_fit(design) : gp_mle_fit(design, sites, opts);
}

EffectEstimate effect_of(const FitResult& fit, const std::string& name) {
  const int i = fit.index_of(name);
  return EffectEstimate{fit.coef(i), fit.se(i), fit.ci_lo(i), fit.ci_hi(i)};
}

Cols stage_covariates(const CausalDataset& data, int stage) {
  Cols cols;
  for (const auto& c : data.covariates)
    if ((stage == 1 && c.stage1) || (stage == 2 && c.stage2)) cols.emplace_back(c.name, c.values);
  return cols;
}

void require_varying(const Eigen::VectorXd& v, const char* what) {
  if (sample_var(v) <= 0.0)
    throw WeakInstrumentError(std::string(what) + " has zero sample variance");
}

FitResult fit_treatment_stage(const CausalDataset& data, ErrorModel em,
                              const GpFitOptions& opts) {
  require_varying(data.z, "instrument");
  Cols cols{{"Z", data.z}};
  for (auto& c : stage_covariates(data, 1)) cols.push_back(std::move(c));
  return fit_stage(data.a, cols, em, *data.sites, opts);
}

CausalEstimate stage2_direct_only(const CausalDataset& data, const Eigen::VectorXd& ahat,
                                  ErrorModel em2, const GpFitOptions& opts) {
  Cols cols{{"A_hat", ahat}};
  for (auto& c : stage_covariates(data, 2)) cols.push_back(std::move(c));
  CausalEstimate est;
  est.stage2 = fit_stage(data.y, cols, em2, *data.sites, opts);
  est.delta1 = effect_of(est.stage2, "A_hat");
  est.iv_residual_cor = correlation(data.z, est.stage2.residuals);
  return est;
}

CausalEstimate stage2_with_spill(const CausalDataset& data, const Eigen::VectorXd& ahat,
                                 const std::string& spill_name, const Eigen::VectorXd& spill,
                                 ErrorModel em2, const GpFitOptions& opts) {
  Cols cols{{"A_hat", ahat}, {spill_name, spill}};
  for (auto& c : stage_covariates(data, 2)) cols.push_back(std::move(c));
  CausalEstimate est;
  est.stage2 = fit_stage(data.y, cols, em2, *data.sites, opts);
  est.delta1 = effect_of(est.stage2, "A_hat");
  est.delta2 = effect_of(est.stage2, spill_name);
  est.iv_residual_cor = correlation(data.z, est.stage2.residuals);
  return est;
}

bool has_stage1_covariates(const CausalDataset& data) {
  for (const auto& c : data.covariates)
    if (c.stage1) return true;
  return false;
}

// Without stage-1 covariates, both spillover regressors are exact affine
// functions of the kernel-averaged instrument: W A_hat = g0 + d3 (W Z)
// because the kernel rows sum to one, and the type-2 first stage fits
// g1 + d4 (W Z). Stage 2 can then run on the canonical design
// [1, A_hat, W Z, X2] shared by both types, which makes their direct-effect
// estimates identical by construction; the reported coefficients are mapped
// back to the requested spill parameterization spill = s0 + s1 (W Z).
FitResult fit_spill_canonical(const CausalDataset& data, const Eigen::VectorXd& ahat,
                              const Eigen::VectorXd& ztilde, ErrorModel em2,
                              const GpFitOptions& opts) {
  Cols cols{{"A_hat", ahat}, {"Z_tilde", ztilde}};
  for (auto& c : stage_covariates(data, 2)) cols.push_back(std::move(c));
  return fit_stage(data.y, cols, em2, *data.sites, opts);
}

FitResult reparam_spill(FitResult fit, const std::string& spill_name, double s0, double s1) {
  const int iz = fit.index_of("Z_tilde");
  const int i0 = fit.index_of("(Intercept)");
  const int p = static_cast<int>(fit.coef.size());
  Eigen::MatrixXd T = Eigen::MatrixXd::Identity(p, p);
  T(iz, iz) = 1.0 / s1;
  T(i0, iz) = -s0 / s1;
  fit.coef = T * fit.coef;
  fit.coef_cov = Eigen::MatrixXd(T * fit.coef_cov * T.transpose());
  refresh_wald(fit);
  fit.names[iz] = spill_name;
  return fit;
}

CausalEstimate from_spill_stage2(const CausalDataset& data, FitResult stage2,
                                 const std::string& spill_name) {
  CausalEstimate est;
  est.stage2 = std::move(stage2);
  est.delta1 = effect_of(est.stage2, "A_hat");
  est.delta2 = effect_of(est.stage2, spill_name);
  est.iv_residual_cor = correlation(data.z, est.stage2.residuals);
  return est;
}

Eigen::SparseMatrix<double> resolve_kernel(const CausalDataset& data, const KernelSpec& kernel,
                                           const EstimatorOptions& options) {
  if (options.kernel_w) return *options.kernel_w;
  return kernel_matrix(*data.sites, kernel);
}

CausalEstimate type0_core(const CausalDataset& data, const Eigen::SparseMatrix<double>& w,
                          const FitResult& stage1, ErrorModel em2,
                          const EstimatorOptions& options) {
  const Eigen::VectorXd atilde = w * data.a;
  CausalEstimate est =
      stage2_with_spill(data, stage1.fitted, "A_tilde", atilde, em2, options.stage2);
  est.stage1 = stage1;
  return est;
}

CausalEstimate type1_core(const CausalDataset& data, const Eigen::SparseMatrix<double>& w,
                          const FitResult& stage1, ErrorModel em2,
                          const EstimatorOptions& options) {
  CausalEstimate est;
  const double d3 = stage1.coef_of("Z");
  if (!has_stage1_covariates(data) && d3 != 0.0) {
    const Eigen::VectorXd ztilde = w * data.z;
    const FitResult canon = fit_spill_canonical(data, stage1.fitted, ztilde, em2, options.stage2);
    est = from_spill_stage2(
        data, reparam_spill(canon, "A_tilde_hat", stage1.coef_of("(Intercept)"), d3),
        "A_tilde_hat");
  } else {
    const Eigen::VectorXd athat = w * stage1.fitted;
    est = stage2_with_spill(data, stage1.fitted, "A_tilde_hat", athat, em2, options.stage2);
  }
  est.stage1 = stage1;
  return est;
}

CausalEstimate type2_core(const CausalDataset& data, const Eigen::SparseMatrix<double>& w,
                          const FitResult& stage1, ErrorModel em1, ErrorModel em2,
                          const EstimatorOptions& options) {
  const Eigen::VectorXd ztilde = w * data.z;
  require_varying(ztilde, "kernel-averaged instrument");
  const Eigen::VectorXd atilde = w * data.a;
  Cols cols{{"Z_tilde", ztilde}};
  for (auto& c : stage_covariates(data, 1)) cols.push_back(std::move(c));
  const FitResult spill_fit =
      fit_stage(atilde, cols, em1, *data.sites, options.stage1_spill);

  CausalEstimate est;
  const double d4 = spill_fit.coef_of("Z_tilde");
  if (!has_stage1_covariates(data) && d4 != 0.0) {
    const FitResult canon = fit_spill_canonical(data, stage1.fitted, ztilde, em2, options.stage2);
    est = from_spill_stage2(
        data, reparam_spill(canon, "A_tilde_hat", spill_fit.coef_of("(Intercept)"), d4),
        "A_tilde_hat");
  } else {
    est = stage2_with_spill(data, stage1.fitted, "A_tilde_hat", spill_fit.fitted, em2,
                            options.stage2);
  }
  est.stage1 = stage1;
  est.stage1_spill = spill_fit;
  return est;
}

}  // namespace

ErrorModel parse_error_model(const std::string& s) {
  if (s == "iid") return ErrorModel::Iid;
  if (s == "spatial") return ErrorModel::Spatial;
  throw InvalidConfigError("unknown error model '" + s + "' (expected iid|spatial)");
}

std::string to_string(ErrorModel em) { return em == ErrorModel::Iid ? "iid" : "spatial"; }

void CausalDataset::validate() const {
  if (!sites) throw InvalidConfigError("CausalDataset: missing sites");
  const int n = sites->size();
  if (z.size() != n || a.size() != n || y.size() != n)
    throw InvalidConfigError("CausalDataset: field lengths do not match site count");
  for (const auto& c : covariates)
    if (c.values.size() != n)
      throw InvalidConfigError("CausalDataset: covariate '" + c.name + "' length mismatch");
}

CausalEstimate no_iv(const CausalDataset& data, ErrorModel error_model,
                     const std::optional<KernelSpec>& kernel, const EstimatorOptions& options) {
  data.validate();
  Cols cols{{"A", data.a}};
  std::optional<Eigen::VectorXd> atilde;
  if (kernel) {
    atilde = Eigen::VectorXd(resolve_kernel(data, *kernel, options) * data.a);
    cols.emplace_back("A_tilde", *atilde);
  }
  for (auto& c : stage_covariates(data, 2)) cols.push_back(std::move(c));

  CausalEstimate est;
  est.stage2 = fit_stage(data.y, cols, error_model, *data.sites, options.stage2);
  est.delta1 = effect_of(est.stage2, "A");
  if (kernel) est.delta2 = effect_of(est.stage2, "A_tilde");
  est.iv_residual_cor = correlation(data.z, est.stage2.residuals);
  return est;
}

CausalEstimate two_stage_iv(const CausalDataset& data, ErrorModel error_model_s1,
                            ErrorModel error_model_s2, const EstimatorOptions& options) {
  data.validate();
  const FitResult stage1 = fit_treatment_stage(data, error_model_s1, options.stage1);
  CausalEstimate est = stage2_direct_only(data, stage1.fitted, error_model_s2, options.stage2);
  est.stage1 = stage1;
  return est;
}

CausalEstimate spillover_type0(const CausalDataset& data, const KernelSpec& kernel,
                               ErrorModel error_model_s1, ErrorModel error_model_s2,
                               const EstimatorOptions& options) {
  data.validate();
  const auto w = resolve_kernel(data, kernel, options);
  const FitResult stage1 = fit_treatment_stage(data, error_model_s1, options.stage1);
  return type0_core(data, w, stage1, error_model_s2, options);
}

CausalEstimate spillover_type1(const CausalDataset& data, const KernelSpec& kernel,
                               ErrorModel error_model_s1, ErrorModel error_model_s2,
                               const EstimatorOptions& options) {
  data.validate();
  const auto w = resolve_kernel(data, kernel, options);
  const FitResult stage1 = fit_treatment_stage(data, error_model_s1, options.stage1);
  return type1_core(data, w, stage1, error_model_s2, options);
}

CausalEstimate spillover_type2(const CausalDataset& data, const KernelSpec& kernel,
                               ErrorModel error_model_s1, ErrorModel error_model_s2,
                               const EstimatorOptions& options) {
  data.validate();
  const auto w = resolve_kernel(data, kernel, options);
  const FitResult stage1 = fit_treatment_stage(data, error_model_s1, options.stage1);
  return type2_core(data, w, stage1, error_model_s1, error_model_s2, options);
}

InterferenceSuite interference_suite(const CausalDataset& data, const KernelSpec& kernel,
                                     ErrorModel error_model_s1, ErrorModel error_model_s2,
                                     const EstimatorOptions& options) {
  data.validate();
  const auto w = resolve_kernel(data, kernel, options);
  EstimatorOptions opts = options;
  opts.kernel_w = &w;

  InterferenceSuite suite;
  suite.no_instrument = no_iv(data, error_model_s2, kernel, opts);
  const FitResult stage1 = fit_treatment_stage(data, error_model_s1, options.stage1);
  suite.type0 = type0_core(data, w, stage1, error_model_s2, opts);

  const double d3 = stage1.coef_of("Z");
  if (!has_stage1_covariates(data) && d3 != 0.0) {
    // the canonical stage-2 fit is shared by the two spillover types
    const Eigen::VectorXd ztilde = w * data.z;
    require_varying(ztilde, "kernel-averaged instrument");
    const Eigen::VectorXd atilde = w * data.a;
    Cols cols{{"Z_tilde", ztilde}};
    const FitResult spill_fit = fit_stage(atilde, cols, error_model_s1, *data.sites,
                                          options.stage1_spill);
    const FitResult canon =
        fit_spill_canonical(data, stage1.fitted, ztilde, error_model_s2, options.stage2);

    suite.type1 = from_spill_stage2(
        data, reparam_spill(canon, "A_tilde_hat", stage1.coef_of("(Intercept)"), d3),
        "A_tilde_hat");
    suite.type1.stage1 = stage1;

    const double d4 = spill_fit.coef_of("Z_tilde");
    if (d4 != 0.0) {
      suite.type2 = from_spill_stage2(
          data, reparam_spill(canon, "A_tilde_hat", spill_fit.coef_of("(Intercept)"), d4),
          "A_tilde_hat");
      suite.type2.stage1 = stage1;
      suite.type2.stage1_spill = spill_fit;
    } else {
      suite.type2 = type2_core(data, w, stage1, error_model_s1, error_model_s2, opts);
    }
  } else {
    suite.type1 = type1_core(data, w, stage1, error_model_s2, opts);
    suite.type2 = type2_core(data, w, stage1, error_model_s1, error_model_s2, opts);
  }
  return suite;
}

}  // namespace siv

#include "siv/regress.hpp"

#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "siv/brent.hpp"

namespace siv {

namespace {

constexpr double kZ95 = 1.96;
constexpr double kRankTol = 1e-10;
constexpr double kRhoEps = 1e-6;                 // nugget-fraction bounds [eps, 1-eps]
const double kLogitBound = std::log((1.0 - kRhoEps) / kRhoEps);

double logit(double p) { return std::log(p / (1.0 - p)); }
double expit(double u) { return 1.0 / (1.0 + std::exp(-u)); }

void check_rank(const Eigen::MatrixXd& X) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(sv.size() - 1) < kRankTol * sv(0))
    throw SingularDesignError("design matrix is rank deficient");
}

void finish_wald(FitResult& fit) {
  fit.ci_lo = fit.coef - kZ95 * fit.se;
  fit.ci_hi = fit.coef + kZ95 * fit.se;
}

// Gaussian log-likelihood pieces evaluated in the tridiagonal basis of the
// correlation matrix: for fixed phi, E = Q T Q' and M(rho) = (1-rho)E + rho I
// shares Q for every rho, so the nugget profile costs O(n) per evaluation.
class ProfileEngine {
 public:
  ProfileEngine(const DesignMatrix& design, const SiteSet& sites)
      : dist_(sites.distances()), n_(design.n()), p_(design.p()) {
    scale_ = sample_sd(design.y);
    if (!(scale_ > 0.0) || !std::isfinite(scale_))
      throw FitFailureError("gp_mle_fit: response has zero variance");
    Xy_.resize(n_, p_ + 1);
    Xy_.leftCols(p_) = design.X;
    Xy_.col(p_) = design.y / scale_;
    E_.resize(n_, n_);
    Bt_.resize(n_, p_ + 1);
    d_.resize(n_);
    e_.resize(n_ - 1);
    tau_.resize(n_ - 1);
    piv_.resize(n_);
    sub_.resize(n_ - 1);
    W_.resize(n_, p_ + 1);
  }

  double scale() const { return scale_; }
  int n() const { return n_; }
  int p() const { return p_; }

  // Tridiagonalize E(phi) and rotate [X|y] into its basis.
  void set_phi(double phi) {
    for (int j = 0; j < n_; ++j) {
      E_.col(j) = (-dist_.col(j) / phi).array().exp();
      E_(j, j) = 1.0;
    }
    lapack_int info = LAPACKE_dsytrd(LAPACK_COL_MAJOR, 'L', n_, E_.data(), n_, d_.data(),
                                     e_.data(), tau_.data());
    if (info != 0) throw NumericalDegeneracyError("dsytrd failed");
    Bt_ = Xy_;
    info = LAPACKE_dormtr(LAPACK_COL_MAJOR, 'L', 'L', 'T', n_, p_ + 1, E_.data(), n_,
                          tau_.data(), Bt_.data(), n_);
    if (info != 0) throw NumericalDegeneracyError("dormtr failed");
  }

  struct RhoEval {
    bool ok = false;
    double loglik = -std::numeric_limits<double>::infinity();
    double vhat = 0.0;
    Eigen::VectorXd beta;       // standardized scale
    Eigen::MatrixXd beta_prec;  // X' M^-1 X
  };

  // Profile log-likelihood at the current phi and given nugget fraction,
  // maximized analytically over beta and total variance.
  RhoEval eval_rho(double rho, bool want_beta = false) const {
    RhoEval out;
    const double w = 1.0 - rho;

    // LDL' of the SPD tridiagonal (1-rho) T + rho I.
    piv_[0] = w * d_[0] + rho;
    if (!(piv_[0] > 0.0)) return out;
    double logdet = std::log(piv_[0]);
    for (int i = 0; i + 1 < n_; ++i) {
      sub_[i] = w * e_[i] / piv_[i];
      piv_[i + 1] = w * d_[i + 1] + rho - sub_[i] * sub_[i] * piv_[i];
      if (!(piv_[i + 1] > 0.0)) return out;
      logdet += std::log(piv_[i + 1]);
    }

    // Solve for all columns of [X~ | y~].
    W_ = Bt_;
    for (int c = 0; c <= p_; ++c) {
      double* wc = W_.col(c).data();
      for (int i = 0; i + 1 < n_; ++i) wc[i + 1] -= sub_[i] * wc[i];
      for (int i = 0; i < n_; ++i) wc[i] /= piv_[i];
      for (int i = n_ - 2; i >= 0; --i) wc[i] -= sub_[i] * wc[i + 1];
    }

    const Eigen::MatrixXd G = Bt_.transpose() * W_;
    const Eigen::MatrixXd B = G.topLeftCorner(p_, p_);
    const Eigen::VectorXd bvec = G.topRightCorner(p_, 1);
    const double q = G(p_, p_);

    Eigen::LDLT<Eigen::MatrixXd> ldlt(B);
    if (ldlt.info() != Eigen::Success) return out;
    const Eigen::VectorXd beta = ldlt.solve(bvec);
    const double rss = q - bvec.dot(beta);
    if (!(rss > 0.0) || !std::isfinite(rss)) return out;

    const double vhat = rss / n_;
    out.ok = true;
    out.vhat = vhat;
    out.loglik = -0.5 * n_ * (std::log(2.0 * std::numbers::pi * vhat) + 1.0) - 0.5 * logdet;
    if (want_beta) {
      out.beta = beta;
      out.beta_prec = B;
    }
    return out;
  }

  // Maximize over the nugget fraction at the current phi.
  struct PhiEval {
    double loglik = -std::numeric_limits<double>::infinity();
    double rho = 0.5;
    bool converged = false;
    int n_evals = 0;
  };

  PhiEval profile_rho(double inner_xtol, int max_fun) const {
    auto objective = [this](double u) {
      const RhoEval ev = eval_rho(expit(u));
      return ev.ok ? -ev.loglik : std::numeric_limits<double>::infinity();
    };
    const BrentResult r = brent_min(objective, -kLogitBound, kLogitBound, inner_xtol, max_fun);
    PhiEval out;
    out.loglik = -r.fx;
    out.rho = expit(r.x);
    out.converged = r.converged;
    out.n_evals = r.n_evals;
    return out;
  }

 private:
  const Eigen::MatrixXd& dist_;
  int n_ = 0, p_ = 0;
  double scale_ = 1.0;
  Eigen::MatrixXd Xy_;           // [X | y/scale]
  mutable Eigen::MatrixXd E_;    // overwritten by dsytrd
  Eigen::MatrixXd Bt_;           // Q' [X | y/scale]
  Eigen::VectorXd d_, e_, tau_;
  mutable Eigen::VectorXd piv_, sub_;
  mutable Eigen::MatrixXd W_;
};

}  // namespace

DesignMatrix DesignMatrix::build(
    const Eigen::VectorXd& response,
    const std::vector<std::pair<std::string, Eigen::VectorXd>>& columns, bool intercept) {
  DesignMatrix d;
  const int n = static_cast<int>(response.size());
  const int p = static_cast<int>(columns.size()) + (intercept ? 1 : 0);
  d.X.resize(n, p);
  int c = 0;
  if (intercept) {
    d.X.col(c).setOnes();
    d.names.emplace_back("(Intercept)");
    ++c;
  }
  for (const auto& [name, col] : columns) {
    if (col.size() != n) throw InvalidConfigError("design column '" + name + "' length mismatch");
    d.X.col(c++) = col;
    d.names.push_back(name);
  }
  d.y = response;
  return d;
}

int FitResult::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<int>(i);
  throw InvalidConfigError("no coefficient named '" + name + "'");
}

void refresh_wald(FitResult& fit) {
  fit.se = fit.coef_cov.diagonal().array().max(0.0).sqrt();
  finish_wald(fit);
}

FitResult ols_fit(const DesignMatrix& design) {
  const int n = design.n(), p = design.p();
  if (n <= p) throw SingularDesignError("ols_fit requires n > number of columns");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(design.X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  if (sv(p - 1) < kRankTol * sv(0))
    throw SingularDesignError("design matrix is rank deficient");

  FitResult fit;
  fit.names = design.names;
  fit.coef = svd.solve(design.y);
  fit.fitted = design.X * fit.coef;
  fit.residuals = design.y - fit.fitted;

  const double rss = fit.residuals.squaredNorm();
  const double s2 = rss / (n - p);
  const Eigen::MatrixXd xtx_inv =
      svd.matrixV() * sv.array().square().inverse().matrix().asDiagonal() *
      svd.matrixV().transpose();
  fit.coef_cov = s2 * xtx_inv;
  fit.se = fit.coef_cov.diagonal().array().sqrt();
  finish_wald(fit);

  fit.sigma2_iid = s2;
  const double v_mle = std::max(rss / n, 1e-300);
  fit.loglik = -0.5 * n * (std::log(2.0 * std::numbers::pi * v_mle) + 1.0);
  fit.aic = -2.0 * fit.loglik + 2.0 * (p + 1);
  return fit;
}

FitResult gp_mle_fit(const DesignMatrix& design, const SiteSet& sites,
                     const GpFitOptions& options) {
  const int n = design.n(), p = design.p();
  if (n != sites.size()) throw InvalidConfigError("gp_mle_fit: design rows != site count");
  if (n <= p) throw SingularDesignError("gp_mle_fit requires n > number of columns");
  check_rank(design.X);

  const double dmax = sites.max_distance();
  const double full_lo = 1e-3 * dmax, full_hi = 10.0 * dmax;
  double lo = options.phi_lo > 0.0 ? options.phi_lo : full_lo;
  double hi = options.phi_hi > 0.0 ? options.phi_hi : full_hi;
  lo = std::max(lo, full_lo);
  hi = std::min(hi, full_hi);
  if (!(lo < hi)) throw InvalidConfigError("gp_mle_fit: empty range bracket");

  ProfileEngine engine(design, sites);

  int outer_evals = 0;
  bool inner_ok = true;
  auto g = [&](double t) {
    engine.set_phi(std::exp(t));
    ++outer_evals;
    const auto ev = engine.profile_rho(options.inner_xtol, options.max_fun);
    if (!ev.converged) inner_ok = false;
    return -ev.loglik;
  };

  const double tl = std::log(lo), th = std::log(hi);
  const int ns = std::max(options.n_seeds, 2);
  std::vector<double> ts(ns), fs(ns);
  for (int k = 0; k < ns; ++k) {
    ts[k] = tl + (th - tl) * k / (ns - 1);
    fs[k] = g(ts[k]);
  }
  int best = 0;
  for (int k = 1; k < ns; ++k)
    if (fs[k] < fs[best]) best = k;

  const double bl = ts[std::max(0, best - 1)];
  const double bh = ts[std::min(ns - 1, best + 1)];
  const BrentResult outer = brent_min(g, bl, bh, options.outer_xtol, options.max_fun);

  double t_opt = outer.x;
  double f_opt = outer.fx;
  if (fs[best] < f_opt) {  // keep the seed if refinement did not improve it
    t_opt = ts[best];
    f_opt = fs[best];
  }

  // A narrowed bracket that pins the optimum at its own edge is unreliable;
  // redo over the full box.
  const bool narrowed = (lo > full_lo * (1 + 1e-12)) || (hi < full_hi * (1 - 1e-12));
  if (narrowed && options.fallback_full_box) {
    const bool at_narrow_edge =
        (std::abs(t_opt - tl) < 1e-4 && lo > full_lo * (1 + 1e-12)) ||
        (std::abs(t_opt - th) < 1e-4 && hi < full_hi * (1 - 1e-12));
    if (at_narrow_edge) {
      GpFitOptions full = options;
      full.phi_lo = 0.0;
      full.phi_hi = 0.0;
      return gp_mle_fit(design, sites, full);
    }
  }

  if (!outer.converged || !inner_ok) {
    std::ostringstream msg;
    msg << "gp_mle_fit did not converge; best iterate phi=" << std::exp(t_opt)
        << " loglik=" << (-f_opt - n * std::log(engine.scale()));
    throw FitFailureError(msg.str());
  }

  // Final quantities at the optimum.
  const double phi_hat = std::exp(t_opt);
  engine.set_phi(phi_hat);
  const auto prof = engine.profile_rho(options.inner_xtol, options.max_fun);
  double rho_hat = prof.rho;
  auto fin = engine.eval_rho(rho_hat, /*want_beta=*/true);
  if (!fin.ok) throw FitFailureError("gp_mle_fit: degenerate solution at optimum");

  // When the range drops below the smallest site distance the likelihood is
  // flat in the nugget fraction; break the tie toward the nugget-only model
  // whenever the spatial component offers no real improvement over it.
  const auto nug = engine.eval_rho(1.0 - kRhoEps, /*want_beta=*/true);
  if (nug.ok && fin.loglik - nug.loglik <= 1e-6) {
    rho_hat = 1.0 - kRhoEps;
    fin = nug;
  }

  const double s = engine.scale();
  FitResult fit;
  fit.names = design.names;
  fit.spatial = true;
  fit.coef = s * fin.beta;
  fit.coef_cov = (s * s * fin.vhat) *
                 Eigen::MatrixXd(fin.beta_prec.ldlt().solve(Eigen::MatrixXd::Identity(p, p)));
  fit.se = fit.coef_cov.diagonal().array().sqrt();
  finish_wald(fit);

  fit.cov.partial_sill = (1.0 - rho_hat) * fin.vhat * s * s;
  fit.cov.range = phi_hat;
  fit.cov.nugget = rho_hat * fin.vhat * s * s;
  fit.loglik = fin.loglik - n * std::log(s);
  fit.aic = -2.0 * fit.loglik + 2.0 * (p + 3);
  fit.fitted = design.X * fit.coef;
  fit.residuals = design.y - fit.fitted;

  fit.diag.converged = true;
  fit.diag.n_profile_evals = outer_evals;
  fit.diag.range_at_lower = std::abs(t_opt - std::log(full_lo)) < 1e-5;
  fit.diag.range_at_upper = std::abs(t_opt - std::log(full_hi)) < 1e-5;
  fit.diag.nugget_at_lower = rho_hat <= kRhoEps * (1.0 + 1e-3);
  fit.diag.nugget_at_upper = rho_hat >= 1.0 - kRhoEps * (1.0 + 1e-3);
  return fit;
}

double gp_profile_loglik(const DesignMatrix& design, const SiteSet& sites, double phi,
                         double nugget_frac) {
  ProfileEngine engine(design, sites);
  engine.set_phi(phi);
  const auto ev = engine.eval_rho(nugget_frac);
  if (!ev.ok) return -std::numeric_limits<double>::infinity();
  return ev.loglik - design.n() * std::log(engine.scale());
}

double spatial_fraction(const CovarianceSpec& spec) {
  const double total = spec.partial_sill + spec.nugget;
  if (!(total > 0.0)) throw DegenerateVarianceError("spatial_fraction: zero total variance");
  return spec.partial_sill / total;
}

}  // namespace siv

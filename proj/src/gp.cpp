#include "siv/gp.hpp"

#include <Eigen/Cholesky>

namespace siv {

GpSampler::GpSampler(const SiteSet& sites, const CovarianceSpec& spec) {
  spec.validate();
  const int n = sites.size();
  Eigen::MatrixXd cov(n, n);
  const auto& d = sites.distances();
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) cov(i, j) = exp_cov(d(i, j), spec);
  }

  // Jitter ladder: 1e-10 escalating by decades to 1e-6, then give up.
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() == Eigen::Success) {
    chol_ = llt.matrixL();
    return;
  }
  for (double j = 1e-10; j <= 1e-6; j *= 10.0) {
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += j;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) {
      chol_ = llt.matrixL();
      jitter_ = j;
      return;
    }
  }
  throw NumericalDegeneracyError("covariance factorization failed after max jitter 1e-6");
}

Eigen::VectorXd GpSampler::draw(Rng& rng) const {
  const int n = static_cast<int>(chol_.rows());
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  return chol_ * z;
}

Eigen::MatrixXd GpSampler::draw_block(Rng& rng, int k) const {
  const int n = static_cast<int>(chol_.rows());
  Eigen::MatrixXd z(n, k);
  for (int c = 0; c < k; ++c)
    for (int i = 0; i < n; ++i) z(i, c) = rng.normal();
  return chol_ * z;
}

Field sample_gp(const SiteSet& sites, const CovarianceSpec& spec, Rng& rng,
                const std::string& label) {
  GpSampler sampler(sites, spec);
  return Field{sampler.draw(rng), label};
}

Field sample_iid(const SiteSet& sites, double sd, Rng& rng, const std::string& label) {
  if (!(sd > 0.0)) throw InvalidConfigError("sample_iid requires sd > 0");
  Eigen::VectorXd v(sites.size());
  for (int i = 0; i < sites.size(); ++i) v(i) = sd * rng.normal();
  return Field{v, label};
}

}  // namespace siv

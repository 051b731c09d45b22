#pragma once

#include <Eigen/Dense>
#include <string>

#include "siv/geo.hpp"
#include "siv/rng.hpp"

namespace siv {

// One real value per site, aligned with SiteSet ordering.
struct Field {
  Eigen::VectorXd values;
  std::string label;
};

// Exact sampler for a mean-zero Gaussian field with exponential covariance.
// The covariance factorization is computed once and shared across draws, so
// rejection loops and replicate workers pay only a matrix-vector product.
class GpSampler {
 public:
  GpSampler(const SiteSet& sites, const CovarianceSpec& spec);

  Eigen::VectorXd draw(Rng& rng) const;
  // Draw k independent fields as columns in one matrix product.
  Eigen::MatrixXd draw_block(Rng& rng, int k) const;

  double jitter_used() const { return jitter_; }

 private:
  Eigen::MatrixXd chol_;  // lower factor
  double jitter_ = 0.0;
};

// One-off draw from the exponential-covariance field; deterministic in rng.
Field sample_gp(const SiteSet& sites, const CovarianceSpec& spec, Rng& rng,
                const std::string& label = "");

// Independent Normal(0, sd^2) per site.
Field sample_iid(const SiteSet& sites, double sd, Rng& rng, const std::string& label = "");

}  // namespace siv

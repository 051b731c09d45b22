#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <memory>
#include <utility>
#include <vector>

#include "siv/common.hpp"

namespace siv {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

// Ordered spatial locations with cached pairwise Euclidean distances.
// Immutable after construction; shared freely across replicate workers.
class SiteSet {
 public:
  // n_per_side x n_per_side sites evenly spaced over [0, extent]^2.
  static SiteSet regular_grid(int n_per_side, double extent);
  static SiteSet from_points(std::vector<Point> pts);

  int size() const { return static_cast<int>(coords_.size()); }
  const std::vector<Point>& coords() const { return coords_; }
  const Eigen::MatrixXd& distances() const { return dist_; }
  double max_distance() const { return max_dist_; }
  // Grid spacing for grids built by regular_grid; 0 otherwise.
  double grid_spacing() const { return spacing_; }

 private:
  SiteSet() = default;
  std::vector<Point> coords_;
  Eigen::MatrixXd dist_;
  double max_dist_ = 0.0;
  double spacing_ = 0.0;
};

// Isotropic exponential covariance parameters.
struct CovarianceSpec {
  double partial_sill = 1.0;  // sigma^2 > 0
  double range = 1.0;         // phi > 0, same units as distances
  double nugget = 0.0;        // tau^2 >= 0

  void validate() const {
    if (!(partial_sill > 0.0) || !(range > 0.0) || nugget < 0.0)
      throw InvalidConfigError("CovarianceSpec requires sigma2 > 0, phi > 0, tau2 >= 0");
  }
};

// C(d) = sigma^2 exp(-d/phi) for d > 0; sigma^2 + tau^2 at d = 0.
inline double exp_cov(double distance, const CovarianceSpec& spec) {
  if (distance == 0.0) return spec.partial_sill + spec.nugget;
  return spec.partial_sill * std::exp(-distance / spec.range);
}

// Distance at which correlation has decayed to 0.05: phi * ln 20.
inline double practical_range(double phi) {
  if (!(phi > 0.0)) throw InvalidConfigError("practical_range requires phi > 0");
  return phi * std::log(20.0);
}

// Inverse-distance kernel truncated at distance T, standardized per site.
struct KernelSpec {
  double truncation = 0.0;  // T > 0

  void validate() const {
    if (!(truncation > 0.0)) throw InvalidConfigError("KernelSpec requires truncation > 0");
  }
  // Queen neighborhood on a grid with spacing h: T just above h*sqrt(2).
  static KernelSpec queen(double spacing) { return KernelSpec{1.5 * spacing}; }
};

// Weights proportional to 1/d for 0 < d < T, normalized to sum to one.
// Throws IsolatedSiteError when no other site lies within T.
std::vector<std::pair<int, double>> kernel_weights(const SiteSet& sites, int target_index,
                                                   const KernelSpec& kernel);

// Row-standardized weight matrix over all sites (zero diagonal).
Eigen::SparseMatrix<double> kernel_matrix(const SiteSet& sites, const KernelSpec& kernel);

}  // namespace siv

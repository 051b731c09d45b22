#include "siv/geo.hpp"

#include <string>

namespace siv {

namespace {

Eigen::MatrixXd pairwise_distances(const std::vector<Point>& pts) {
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd d(n, n);
  for (int j = 0; j < n; ++j) {
    d(j, j) = 0.0;
    for (int i = j + 1; i < n; ++i) {
      const double dx = pts[i].x - pts[j].x;
      const double dy = pts[i].y - pts[j].y;
      const double v = std::sqrt(dx * dx + dy * dy);
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

}  // namespace

SiteSet SiteSet::regular_grid(int n_per_side, double extent) {
  if (n_per_side < 2)
    throw InvalidConfigError("regular_grid requires n_per_side >= 2, got " +
                             std::to_string(n_per_side));
  if (!(extent > 0.0)) throw InvalidConfigError("regular_grid requires extent > 0");

  SiteSet s;
  s.spacing_ = extent / (n_per_side - 1);
  s.coords_.reserve(static_cast<std::size_t>(n_per_side) * n_per_side);
  for (int iy = 0; iy < n_per_side; ++iy)
    for (int ix = 0; ix < n_per_side; ++ix)
      s.coords_.push_back({ix * s.spacing_, iy * s.spacing_});
  s.dist_ = pairwise_distances(s.coords_);
  s.max_dist_ = s.dist_.maxCoeff();
  return s;
}

SiteSet SiteSet::from_points(std::vector<Point> pts) {
  if (pts.size() < 2) throw InvalidConfigError("SiteSet requires at least 2 sites");
  SiteSet s;
  s.coords_ = std::move(pts);
  s.dist_ = pairwise_distances(s.coords_);
  s.max_dist_ = s.dist_.maxCoeff();
  return s;
}

std::vector<std::pair<int, double>> kernel_weights(const SiteSet& sites, int target_index,
                                                   const KernelSpec& kernel) {
  kernel.validate();
  const int n = sites.size();
  if (target_index < 0 || target_index >= n)
    throw InvalidConfigError("kernel_weights: site index out of range");

  std::vector<std::pair<int, double>> w;
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    if (j == target_index) continue;
    const double d = sites.distances()(target_index, j);
    if (d > 0.0 && d < kernel.truncation) {
      w.emplace_back(j, 1.0 / d);
      total += 1.0 / d;
    }
  }
  if (w.empty())
    throw IsolatedSiteError("no neighbor within truncation " + std::to_string(kernel.truncation) +
                            " of site " + std::to_string(target_index));
  for (auto& [j, v] : w) v /= total;
  return w;
}

Eigen::SparseMatrix<double> kernel_matrix(const SiteSet& sites, const KernelSpec& kernel) {
  const int n = sites.size();
  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < n; ++i)
    for (const auto& [j, v] : kernel_weights(sites, i, kernel)) trips.emplace_back(i, j, v);
  Eigen::SparseMatrix<double> w(n, n);
  w.setFromTriplets(trips.begin(), trips.end());
  return w;
}

}  // namespace siv

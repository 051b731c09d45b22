#include <cmath>

#include "doctest.h"
#include "siv/geo.hpp"

using namespace siv;

TEST_CASE("regular grid geometry") {
  const SiteSet corners = SiteSet::regular_grid(2, 1.0);
  CHECK(corners.size() == 4);
  CHECK(corners.max_distance() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));

  const SiteSet g30 = SiteSet::regular_grid(30, 1.0);
  CHECK(g30.size() == 900);

  const SiteSet g32 = SiteSet::regular_grid(32, 1.0);
  CHECK(g32.grid_spacing() == doctest::Approx(1.0 / 31.0).epsilon(1e-14));

  CHECK_THROWS_AS(SiteSet::regular_grid(1, 1.0), InvalidConfigError);
  CHECK_THROWS_AS(SiteSet::regular_grid(5, 0.0), InvalidConfigError);
}

TEST_CASE("distance matrix properties") {
  const SiteSet g = SiteSet::regular_grid(7, 2.0);
  const auto& d = g.distances();
  const int n = g.size();
  const double h = g.grid_spacing();

  for (int i = 0; i < n; ++i) CHECK(d(i, i) == 0.0);

  // analytic grid distances
  for (int i = 0; i < n; i += 5) {
    for (int j = 0; j < n; j += 7) {
      const int dx = (i % 7) - (j % 7), dy = (i / 7) - (j / 7);
      const double expect = h * std::sqrt(double(dx * dx + dy * dy));
      CHECK(std::abs(d(i, j) - expect) <= 1e-12);
      CHECK(d(i, j) == d(j, i));
    }
  }

  // triangle inequality on sampled triples
  for (int i = 0; i < n; i += 3)
    for (int j = 1; j < n; j += 11)
      for (int k = 2; k < n; k += 17) CHECK(d(i, k) <= d(i, j) + d(j, k) + 1e-12);
}

TEST_CASE("exponential covariance") {
  const CovarianceSpec unit{1.0, 0.2, 0.0};
  CHECK(exp_cov(0.0, unit) == 1.0);
  CHECK(exp_cov(0.2, unit) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));

  const CovarianceSpec s{2.5, 0.7, 0.0};
  CHECK(exp_cov(0.7 * std::log(20.0), s) == doctest::Approx(0.05 * 2.5).epsilon(1e-12));

  // monotone nonincreasing away from zero, nugget jump at zero
  const CovarianceSpec with_nugget{1.0, 0.5, 0.3};
  CHECK(exp_cov(0.0, with_nugget) == doctest::Approx(1.3));
  CHECK(exp_cov(1e-12, with_nugget) == doctest::Approx(1.0).epsilon(1e-9));
  double prev = exp_cov(1e-9, with_nugget);
  for (double d = 0.01; d < 3.0; d += 0.01) {
    const double c = exp_cov(d, with_nugget);
    CHECK(c <= prev + 1e-15);
    prev = c;
  }

  CHECK_THROWS_AS(CovarianceSpec({-1.0, 0.2, 0.0}).validate(), InvalidConfigError);
  CHECK_THROWS_AS(CovarianceSpec({1.0, 0.0, 0.0}).validate(), InvalidConfigError);
  CHECK_THROWS_AS(CovarianceSpec({1.0, 0.2, -0.1}).validate(), InvalidConfigError);
}

TEST_CASE("practical range identity and reported values") {
  for (double phi : {0.01, 0.2, 1.747, 2.113, 54.70, 1000.0})
    CHECK(std::abs(practical_range(phi) / phi - std::log(20.0)) <= 1e-12);

  CHECK(practical_range(1.747) == doctest::Approx(5.234).epsilon(5e-4));
  CHECK(practical_range(54.70) == doctest::Approx(163.9).epsilon(5e-4));
  CHECK(practical_range(2.113) == doctest::Approx(6.330).epsilon(5e-4));
  CHECK_THROWS_AS(practical_range(0.0), InvalidConfigError);
}

TEST_CASE("kernel weights") {
  // single neighbor within T
  const SiteSet line = SiteSet::from_points({{0, 0}, {1, 0}, {5, 0}});
  const auto w1 = kernel_weights(line, 0, KernelSpec{2.0});
  REQUIRE(w1.size() == 1);
  CHECK(w1[0].first == 1);
  CHECK(w1[0].second == doctest::Approx(1.0).epsilon(1e-14));

  // two equidistant neighbors
  const SiteSet tri = SiteSet::from_points({{0, 0}, {1, 0}, {-1, 0}});
  const auto w2 = kernel_weights(tri, 0, KernelSpec{1.5});
  REQUIRE(w2.size() == 2);
  CHECK(w2[0].second == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(w2[1].second == doctest::Approx(0.5).epsilon(1e-14));

  // queen neighborhood of an interior grid site
  const SiteSet g = SiteSet::regular_grid(5, 4.0);
  const double h = g.grid_spacing();
  const auto w3 = kernel_weights(g, 12, KernelSpec::queen(h));  // center of the 5x5
  REQUIRE(w3.size() == 8);
  const double axial = 1.0 / (4.0 + 2.0 * std::sqrt(2.0));
  const double diag = (1.0 / std::sqrt(2.0)) / (4.0 + 2.0 * std::sqrt(2.0));
  int n_axial = 0, n_diag = 0;
  for (const auto& [j, w] : w3) {
    if (std::abs(w - axial) < 1e-12)
      ++n_axial;
    else if (std::abs(w - diag) < 1e-12)
      ++n_diag;
  }
  CHECK(n_axial == 4);
  CHECK(n_diag == 4);
  CHECK(axial == doctest::Approx(0.14645).epsilon(1e-4));
  CHECK(diag == doctest::Approx(0.10355).epsilon(1e-4));

  CHECK_THROWS_AS(kernel_weights(line, 2, KernelSpec{1.0}), IsolatedSiteError);
  CHECK_THROWS_AS(kernel_weights(line, 0, KernelSpec{0.0}), InvalidConfigError);
}

TEST_CASE("kernel weight normalization across a full grid") {
  const SiteSet g = SiteSet::regular_grid(12, 1.0);
  const auto w = kernel_matrix(g, KernelSpec::queen(g.grid_spacing()));
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(g.size());
  const Eigen::VectorXd rowsum = w * ones;
  for (int i = 0; i < g.size(); ++i) CHECK(std::abs(rowsum(i) - 1.0) <= 1e-12);
  for (int i = 0; i < g.size(); ++i) CHECK(w.coeff(i, i) == 0.0);
}

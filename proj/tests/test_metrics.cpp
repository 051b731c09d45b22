#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "siv/metrics.hpp"

using namespace siv;

namespace {

CausalEstimate make_est(double d1, double halfwidth, double cor = 0.0) {
  CausalEstimate e;
  e.delta1 = {d1, halfwidth / 1.96, d1 - halfwidth, d1 + halfwidth};
  e.iv_residual_cor = cor;
  return e;
}

}  // namespace

TEST_CASE("summarize on exact estimates") {
  std::vector<CausalEstimate> ests;
  for (int i = 0; i < 10; ++i) ests.push_back(make_est(1.0, 0.5));
  const ReplicateSummary s = summarize(ests, 1.0);
  CHECK(s.delta1.bias == doctest::Approx(0.0));
  CHECK(s.delta1.mse == doctest::Approx(0.0));
  CHECK(s.delta1.coverage == doctest::Approx(1.0));
  CHECK(s.n_reps == 10);
}

TEST_CASE("summarize on alternating errors") {
  // estimates = truth +/- 1 alternating, CI half-width 0.5
  std::vector<CausalEstimate> ests;
  for (int i = 0; i < 20; ++i) ests.push_back(make_est(1.0 + (i % 2 ? 1.0 : -1.0), 0.5));
  const ReplicateSummary s = summarize(ests, 1.0);
  CHECK(s.delta1.bias == doctest::Approx(0.0));
  CHECK(s.delta1.mse == doctest::Approx(1.0));
  CHECK(s.delta1.coverage == doctest::Approx(0.0));
  CHECK(s.delta1.coverage_se == doctest::Approx(0.0));
  // coverage MC standard error formula
  std::vector<CausalEstimate> half;
  for (int i = 0; i < 20; ++i) half.push_back(make_est(1.0, i % 2 ? 0.5 : -0.1));
  const ReplicateSummary hs = summarize(half, 1.0);
  CHECK(hs.delta1.coverage == doctest::Approx(0.5));
  CHECK(hs.delta1.coverage_se == doctest::Approx(std::sqrt(0.25 / 20)));
}

TEST_CASE("summarize is permutation invariant and splits consistently") {
  std::vector<CausalEstimate> ests;
  for (int i = 0; i < 40; ++i) ests.push_back(make_est(1.0 + 0.01 * i, 0.3, 0.001 * i));
  auto shuffled = ests;
  std::swap(shuffled[0], shuffled[31]);
  std::swap(shuffled[5], shuffled[17]);
  const ReplicateSummary a = summarize(ests, 1.0);
  const ReplicateSummary b = summarize(shuffled, 1.0);
  CHECK(a.delta1.bias == doctest::Approx(b.delta1.bias).epsilon(1e-14));
  CHECK(a.delta1.mse == doctest::Approx(b.delta1.mse).epsilon(1e-14));
  CHECK(a.mean_iv_resid_cor == doctest::Approx(b.mean_iv_resid_cor).epsilon(1e-14));

  // concatenation of two half-runs equals the full run
  const std::vector<CausalEstimate> first(ests.begin(), ests.begin() + 20);
  const std::vector<CausalEstimate> second(ests.begin() + 20, ests.end());
  std::vector<CausalEstimate> joined = first;
  joined.insert(joined.end(), second.begin(), second.end());
  const ReplicateSummary full = summarize(joined, 1.0);
  CHECK(std::abs(full.delta1.bias - a.delta1.bias) <= 1e-12);
  CHECK(std::abs(full.delta1.mse - a.delta1.mse) <= 1e-12);

  // variance decomposition
  CHECK(a.delta1.mse >= a.delta1.bias * a.delta1.bias - 1e-12);
}

TEST_CASE("summarize input validation") {
  std::vector<CausalEstimate> empty;
  CHECK_THROWS_AS(summarize(empty, 1.0), InsufficientDataError);
  std::vector<CausalEstimate> one{make_est(1.0, 0.1)};
  CHECK_THROWS_AS(summarize(one, 1.0), InsufficientDataError);
}

TEST_CASE("sweep grid records") {
  auto row = [](const std::string& scen, const std::string& model, const std::string& em,
                double bias, double coverage) {
    MetricsRow r;
    r.scenario = scen;
    r.model = model;
    r.error_model = em;
    r.param = "delta1";
    r.bias = bias;
    r.coverage = coverage;
    return r;
  };
  std::vector<SweepCell> cells;
  cells.push_back({"cell1", 0.3, 0.0, row("cell1", "no_iv", "iid", 0.2, 0.10)});
  cells.push_back({"cell1", 0.3, 0.0, row("cell1", "local_iv", "iid", 0.2, 0.95)});
  cells.push_back({"cell1", 0.3, 0.0, row("cell1", "spatial_iv", "iid", 0.02, 0.571)});

  const auto recs = sweep_grid(cells);
  REQUIRE(recs.size() == 2);
  // equal bias to the baseline -> log relative bias 0
  CHECK(recs[0].model == "local_iv");
  CHECK(recs[0].log_rel_bias == doctest::Approx(0.0));
  CHECK(recs[0].coverage_deficit == doctest::Approx(0.0));
  // coverage 57.1% -> deficit 37.9
  CHECK(recs[1].coverage_deficit == doctest::Approx(37.9).epsilon(1e-9));
  CHECK(recs[1].log_rel_bias == doctest::Approx(std::log(0.1)).epsilon(1e-12));

  // missing baseline
  std::vector<SweepCell> broken = {cells[1]};
  CHECK_THROWS_AS(sweep_grid(broken), IncompleteGridError);
}

TEST_CASE("metrics csv round trip of the fixed columns") {
  MetricsRow r;
  r.scenario = "t";
  r.model = "m";
  r.error_model = "iid";
  r.param = "delta1";
  r.bias = 0.123456789012345678;
  r.coverage = 0.998;
  r.n_reps = 500;
  const std::string path = "/tmp/siv_test_metrics.csv";
  write_metrics_csv(path, {r});
  std::ifstream f(path);
  std::string header, line;
  std::getline(f, header);
  CHECK(header ==
        "scenario,model,error_model,param,bias,bias_se,mse,mse_se,coverage,coverage_se,"
        "cor_z_resid,cor_z_resid_se,n_reps,n_failed");
  std::getline(f, line);
  CHECK(line.find("t,m,iid,delta1,") == 0);
  CHECK(line.find(format_double(r.bias)) != std::string::npos);
  std::remove(path.c_str());
}

#include <cmath>
#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "siv/gp.hpp"
#include "siv/metrics.hpp"
#include "siv/panel.hpp"

using namespace siv;

namespace {

const char* kToyPanel =
    "location_id,lon,lat,year,pm,cmr\n"
    "a,0.0,0.0,1990,10,5\n"
    "a,0.0,0.0,2000,20,6\n"
    "a,0.0,0.0,2010,30,7\n"
    "b,1.0,0.0,1990,4,2\n"
    "b,1.0,0.0,2000,4,2\n"
    "b,1.0,0.0,2010,4,2\n"
    "c,2.0,0.0,1990,1,1\n";

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/" + name;
  std::ofstream f(path, std::ios::binary);
  f << content;
  return path;
}

}  // namespace

TEST_CASE("decadal slopes on a toy panel") {
  const PanelData panel = read_panel_csv(write_temp("siv_toy_panel.csv", kToyPanel));
  CHECK(panel.variables == std::vector<std::string>{"pm", "cmr"});

  const SlopeDataset ds = decadal_slopes(panel, 1990);
  REQUIRE(ds.locations.size() == 2);
  // values 10, 20, 30 at 1990, 2000, 2010 with anchor 1990
  CHECK(ds.locations[0].slope.at("pm") == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(ds.locations[0].intercept.at("pm") == doctest::Approx(10.0).epsilon(1e-12));
  // constant series
  CHECK(ds.locations[1].slope.at("pm") == doctest::Approx(0.0));
  // single-year location dropped with a reason
  REQUIRE(ds.dropped.size() == 1);
  CHECK(ds.dropped[0].first == "c");
  CHECK(ds.dropped[0].second.find("fewer than 2") != std::string::npos);
}

TEST_CASE("record order does not change slopes") {
  const PanelData panel = read_panel_csv(write_temp("siv_toy_panel.csv", kToyPanel));
  PanelData reversed = panel;
  std::reverse(reversed.records.begin(), reversed.records.end());
  const SlopeDataset a = decadal_slopes(panel, 1990);
  const SlopeDataset b = decadal_slopes(reversed, 1990);
  for (const auto& loc : a.locations) {
    const auto match = std::find_if(b.locations.begin(), b.locations.end(),
                                    [&](const LocationSlopes& l) { return l.id == loc.id; });
    REQUIRE(match != b.locations.end());
    CHECK(match->slope.at("pm") == loc.slope.at("pm"));
    CHECK(match->slope.at("cmr") == loc.slope.at("cmr"));
  }
}

TEST_CASE("panel parse errors carry the offending line") {
  const std::string dup =
      "location_id,lon,lat,year,pm\n"
      "a,0,0,1990,1\n"
      "a,0,0,1990,2\n";
  try {
    read_panel_csv(write_temp("siv_dup_panel.csv", dup));
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }

  const std::string bad =
      "location_id,lon,lat,year,pm\n"
      "a,0,0,1990,xyz\n";
  CHECK_THROWS_AS(read_panel_csv(write_temp("siv_bad_panel.csv", bad)), ParseError);

  const std::string badhdr = "id,lon,lat,year,pm\na,0,0,1990,1\n";
  CHECK_THROWS_AS(read_panel_csv(write_temp("siv_badhdr_panel.csv", badhdr)), ParseError);
}

TEST_CASE("log transform validation") {
  const PanelData panel = read_panel_csv(write_temp("siv_toy_panel.csv", kToyPanel));
  CHECK_THROWS_AS(decadal_slopes(panel, 1990, {"nope"}), InvalidConfigError);

  const std::string nonpos =
      "location_id,lon,lat,year,pm\n"
      "a,0,0,1990,1\n"
      "a,0,0,2000,-2\n";
  const PanelData p2 = read_panel_csv(write_temp("siv_nonpos_panel.csv", nonpos));
  CHECK_THROWS_AS(decadal_slopes(p2, 1990, {"pm"}), TransformError);

  // log of an exact exponential trend gives an exact slope
  const std::string expo =
      "location_id,lon,lat,year,pm\n"
      "a,0,0,1990,1\n"
      "a,0,0,2000,2.718281828459045\n"
      "a,0,0,2010,7.38905609893065\n";
  const PanelData p3 = read_panel_csv(write_temp("siv_expo_panel.csv", expo));
  const SlopeDataset ds = decadal_slopes(p3, 1990, {"pm"});
  CHECK(ds.locations[0].slope.at("pm") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("missing years drop the location only when under two remain") {
  const std::string missing =
      "location_id,lon,lat,year,pm,cmr\n"
      "a,0,0,1990,1,\n"
      "a,0,0,2000,2,3\n"
      "a,0,0,2010,3,4\n"
      "b,1,0,1990,1,2\n"
      "b,1,0,2000,,\n"
      "b,1,0,2010,3,\n";
  const PanelData panel = read_panel_csv(write_temp("siv_missing_panel.csv", missing));
  const SlopeDataset ds = decadal_slopes(panel, 1990);
  // a keeps both variables (cmr has two years); b loses cmr entirely
  REQUIRE(ds.locations.size() == 1);
  CHECK(ds.locations[0].id == "a");
  REQUIRE(ds.dropped.size() == 1);
  CHECK(ds.dropped[0].first == "b");
  CHECK(ds.dropped[0].second.find("cmr") != std::string::npos);
}

TEST_CASE("simulate-then-recover slopes from a noisy synthetic panel") {
  Rng rng(314159);
  const int L = 60;
  std::string csv = "location_id,lon,lat,year,v\n";
  std::vector<double> truth(L);
  for (int l = 0; l < L; ++l) {
    truth[l] = rng.normal();
    const double intercept = 2.0 * rng.normal();
    for (int year : {1990, 2000, 2010}) {
      const double t = (year - 1990) / 10.0;
      const double value = intercept + truth[l] * t + 0.05 * rng.normal();
      csv += "loc" + std::to_string(l) + "," + std::to_string(l % 10) + "," +
             std::to_string(l / 10) + "," + std::to_string(year) + "," +
             format_double(value) + "\n";
    }
  }
  const PanelData panel = read_panel_csv(write_temp("siv_synth_panel.csv", csv));
  const SlopeDataset ds = decadal_slopes(panel, 1990);
  REQUIRE(ds.locations.size() == L);
  // per-location slope SE with 3 obs and noise sd 0.05: sd/sqrt(sum (t-tbar)^2)
  const double se = 0.05 / std::sqrt(0.5);
  int bad = 0;
  for (int l = 0; l < L; ++l)
    if (std::abs(ds.locations[l].slope.at("v") - truth[l]) > 3.0 * se) ++bad;
  CHECK(bad <= 2);
}

TEST_CASE("slopes csv round trip is exact") {
  const PanelData panel = read_panel_csv(write_temp("siv_toy_panel.csv", kToyPanel));
  SlopeDataset ds = decadal_slopes(panel, 1990);
  ds.locations[0].slope["pm"] = 0.1234567890123456789;  // full-precision payload
  const std::string path = "/tmp/siv_slopes_rt.csv";
  write_slopes_csv(ds, path);
  const SlopeDataset back = read_slopes_csv(path);
  REQUIRE(back.locations.size() == ds.locations.size());
  for (std::size_t i = 0; i < ds.locations.size(); ++i) {
    for (const auto& v : ds.variables) {
      CHECK(back.locations[i].slope.at(v) == ds.locations[i].slope.at(v));
      CHECK(back.locations[i].intercept.at(v) == ds.locations[i].intercept.at(v));
    }
  }
  std::remove(path.c_str());
}

TEST_CASE("spatial diagnostics on a synthetic field") {
  // scattered sites over a 20x20-degree window; field range phi = 2
  Rng rng(777);
  const int side = 15;
  std::vector<Point> pts;
  for (int iy = 0; iy < side; ++iy)
    for (int ix = 0; ix < side; ++ix)
      pts.push_back({ix * 20.0 / (side - 1) + 0.3 * rng.normal(),
                     iy * 20.0 / (side - 1) + 0.3 * rng.normal()});
  const auto sites = std::make_shared<const SiteSet>(SiteSet::from_points(pts));
  const GpSampler gs(*sites, CovarianceSpec{1.0, 2.0, 0.0});
  const Eigen::VectorXd field = gs.draw(rng);

  SlopeDataset ds;
  ds.variables = {"v"};
  for (int i = 0; i < sites->size(); ++i) {
    LocationSlopes loc;
    loc.id = "s" + std::to_string(i);
    loc.lon = sites->coords()[i].x;
    loc.lat = sites->coords()[i].y;
    loc.slope["v"] = field(i);
    loc.intercept["v"] = 0.0;
    ds.locations.push_back(loc);
  }
  const DiagnosticsResult diag = spatial_diagnostics(ds, "v");
  // truth: practical range 2 ln 20 = 5.99, all variance spatial
  CHECK(diag.practical_range >= 2.5);
  CHECK(diag.practical_range <= 14.0);
  CHECK(diag.fraction_spatial >= 0.7);

  // A pure-noise field attributes nothing to spatial structure at observable
  // scales: either the fraction is near zero or the fitted range sits below
  // the smallest inter-site distance, where sill and nugget are equivalent.
  double dmin = 1e300;
  const auto& dm = sites->distances();
  for (int i = 0; i < sites->size(); ++i)
    for (int j = i + 1; j < sites->size(); ++j) dmin = std::min(dmin, dm(i, j));
  for (int draw = 0; draw < 3; ++draw) {
    for (auto& loc : ds.locations) loc.slope["v"] = rng.normal();
    const DiagnosticsResult noise = spatial_diagnostics(ds, "v");
    CHECK((noise.fraction_spatial <= 0.3 || noise.cov.range < dmin));
  }

  SlopeDataset tiny = ds;
  tiny.locations.resize(10);
  CHECK_THROWS_AS(spatial_diagnostics(tiny, "v"), InsufficientDataError);
}

TEST_CASE("slope dataset to causal dataset wiring") {
  const PanelData panel = read_panel_csv(write_temp("siv_toy_panel.csv", kToyPanel));
  const SlopeDataset ds = decadal_slopes(panel, 1990);
  const CausalDataset d = slope_causal_dataset(ds, "pm", "pm", "cmr");
  REQUIRE(d.covariates.size() == 2);
  CHECK(d.covariates[0].name == "pm_intercept");
  CHECK(d.covariates[0].stage1);
  CHECK_FALSE(d.covariates[0].stage2);
  CHECK(d.covariates[1].name == "cmr_intercept");
  CHECK_FALSE(d.covariates[1].stage1);
  CHECK(d.covariates[1].stage2);
}

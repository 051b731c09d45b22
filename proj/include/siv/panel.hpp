#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "siv/causal.hpp"
#include "siv/regress.hpp"

namespace siv {

// One (location, year) observation; missing values are NaN.
struct PanelRecord {
  std::string location_id;
  double lon = 0.0;
  double lat = 0.0;
  int year = 0;
  std::map<std::string, double> values;
};

struct PanelData {
  std::vector<std::string> variables;
  std::vector<PanelRecord> records;
};

// CSV with header: location_id, lon, lat, year, then variable columns.
// Comma delimiter, empty cell = missing.
PanelData read_panel_csv(const std::string& path);

struct LocationSlopes {
  std::string id;
  double lon = 0.0;
  double lat = 0.0;
  std::map<std::string, double> slope;      // per decade
  std::map<std::string, double> intercept;  // value at the anchor year
};

struct SlopeDataset {
  std::vector<std::string> variables;
  std::vector<LocationSlopes> locations;
  std::vector<std::pair<std::string, std::string>> dropped;  // (location_id, reason)
  int anchor_year = 0;

  std::shared_ptr<const SiteSet> sites() const;  // from (lon, lat), planar degrees
  Eigen::VectorXd slopes_of(const std::string& variable) const;
  Eigen::VectorXd intercepts_of(const std::string& variable) const;
};

// Per location and variable, least squares of the (optionally logged) value
// on t = (year - anchor_year)/10. Locations lacking two usable years for any
// variable are dropped with a logged reason.
SlopeDataset decadal_slopes(const PanelData& panel, int anchor_year,
                            const std::set<std::string>& log_vars = {});

void write_slopes_csv(const SlopeDataset& ds, const std::string& path);
SlopeDataset read_slopes_csv(const std::string& path);
void write_drop_log(const SlopeDataset& ds, const std::string& path);

struct DiagnosticsResult {
  CovarianceSpec cov;
  double practical_range = 0.0;
  double fraction_spatial = 0.0;  // sigma^2 / (sigma^2 + tau^2)
};

// Intercept-only exponential-covariance fit of one variable's slopes.
DiagnosticsResult spatial_diagnostics(const SlopeDataset& ds, const std::string& variable);

// Causal view: slopes as Z, A, Y; the A-intercept enters stage 1 and the
// Y-intercept stage 2; extra covariate slopes go to both stages by default.
struct CovariateRequest {
  std::string variable;
  bool stage1 = true;
  bool stage2 = true;
};
CausalDataset slope_causal_dataset(const SlopeDataset& ds, const std::string& z_var,
                                   const std::string& a_var, const std::string& y_var,
                                   const std::vector<CovariateRequest>& extra = {},
                                   bool include_intercept_covariates = true);

}  // namespace siv

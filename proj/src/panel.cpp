#include "siv/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "siv/metrics.hpp"

namespace siv {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_cell(const std::string& s, const std::string& path, int lineno) {
  if (s.empty()) return kNaN;
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError(path + ":" + std::to_string(lineno) + ": bad numeric value '" + s + "'");
  }
}

}  // namespace

PanelData read_panel_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open panel file: " + path);

  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "location_id" || header[1] != "lon" ||
      header[2] != "lat" || header[3] != "year")
    throw ParseError(path + ":1: header must start with location_id,lon,lat,year");

  PanelData panel;
  panel.variables.assign(header.begin() + 4, header.end());

  std::set<std::pair<std::string, int>> seen;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(cells.size()));
    PanelRecord rec;
    rec.location_id = cells[0];
    rec.lon = parse_cell(cells[1], path, lineno);
    rec.lat = parse_cell(cells[2], path, lineno);
    const double yr = parse_cell(cells[3], path, lineno);
    rec.year = static_cast<int>(yr);
    if (rec.year != yr)
      throw ParseError(path + ":" + std::to_string(lineno) + ": year must be an integer");
    if (!seen.insert({rec.location_id, rec.year}).second)
      throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate (location_id, year) " +
                       rec.location_id + "/" + std::to_string(rec.year));
    for (std::size_t i = 0; i < panel.variables.size(); ++i)
      rec.values[panel.variables[i]] = parse_cell(cells[4 + i], path, lineno);
    panel.records.push_back(std::move(rec));
  }
  return panel;
}

SlopeDataset decadal_slopes(const PanelData& panel, int anchor_year,
                            const std::set<std::string>& log_vars) {
  for (const auto& v : log_vars)
    if (std::find(panel.variables.begin(), panel.variables.end(), v) == panel.variables.end())
      throw InvalidConfigError("log transform requested for unknown variable '" + v + "'");

  // Group record indices per location, preserving first-seen order.
  std::vector<std::string> order;
  std::map<std::string, std::vector<const PanelRecord*>> groups;
  for (const auto& rec : panel.records) {
    auto& g = groups[rec.location_id];
    if (g.empty()) order.push_back(rec.location_id);
    g.push_back(&rec);
  }

  SlopeDataset out;
  out.variables = panel.variables;
  out.anchor_year = anchor_year;

  for (const auto& id : order) {
    const auto& recs = groups[id];
    LocationSlopes loc;
    loc.id = id;
    loc.lon = recs.front()->lon;
    loc.lat = recs.front()->lat;

    std::string drop_reason;
    for (const auto& var : panel.variables) {
      const bool logged = log_vars.count(var) > 0;
      std::vector<double> ts, vs;
      for (const auto* rec : recs) {
        const double raw = rec->values.at(var);
        if (std::isnan(raw)) continue;
        double v = raw;
        if (logged) {
          if (!(raw > 0.0))
            throw TransformError("log transform of nonpositive value: location " + id +
                                 ", year " + std::to_string(rec->year) + ", variable " + var);
          v = std::log(raw);
        }
        ts.push_back((rec->year - anchor_year) / 10.0);
        vs.push_back(v);
      }
      const std::set<double> distinct(ts.begin(), ts.end());
      if (distinct.size() < 2) {
        drop_reason = var + ": fewer than 2 usable years";
        break;
      }
      // Simple regression of value on decades since the anchor.
      const int m = static_cast<int>(ts.size());
      double st = 0, sv = 0, stt = 0, stv = 0;
      for (int i = 0; i < m; ++i) {
        st += ts[i];
        sv += vs[i];
        stt += ts[i] * ts[i];
        stv += ts[i] * vs[i];
      }
      const double denom = m * stt - st * st;
      const double slope = (m * stv - st * sv) / denom;
      loc.slope[var] = slope;
      loc.intercept[var] = (sv - slope * st) / m;
    }
    if (!drop_reason.empty())
      out.dropped.emplace_back(id, drop_reason);
    else
      out.locations.push_back(std::move(loc));
  }
  return out;
}

std::shared_ptr<const SiteSet> SlopeDataset::sites() const {
  std::vector<Point> pts;
  pts.reserve(locations.size());
  for (const auto& loc : locations) pts.push_back({loc.lon, loc.lat});
  return std::make_shared<const SiteSet>(SiteSet::from_points(std::move(pts)));
}

Eigen::VectorXd SlopeDataset::slopes_of(const std::string& variable) const {
  Eigen::VectorXd v(static_cast<int>(locations.size()));
  for (std::size_t i = 0; i < locations.size(); ++i) {
    const auto it = locations[i].slope.find(variable);
    if (it == locations[i].slope.end())
      throw InvalidConfigError("no slope for variable '" + variable + "'");
    v(static_cast<int>(i)) = it->second;
  }
  return v;
}

Eigen::VectorXd SlopeDataset::intercepts_of(const std::string& variable) const {
  Eigen::VectorXd v(static_cast<int>(locations.size()));
  for (std::size_t i = 0; i < locations.size(); ++i) {
    const auto it = locations[i].intercept.find(variable);
    if (it == locations[i].intercept.end())
      throw InvalidConfigError("no intercept for variable '" + variable + "'");
    v(static_cast<int>(i)) = it->second;
  }
  return v;
}

void write_slopes_csv(const SlopeDataset& ds, const std::string& path) {
  std::string s = "location_id,lon,lat";
  for (const auto& v : ds.variables) s += ',' + v + "_slope";
  for (const auto& v : ds.variables) s += ',' + v + "_intercept";
  s += '\n';
  for (const auto& loc : ds.locations) {
    s += loc.id + ',' + format_double(loc.lon) + ',' + format_double(loc.lat);
    for (const auto& v : ds.variables) s += ',' + format_double(loc.slope.at(v));
    for (const auto& v : ds.variables) s += ',' + format_double(loc.intercept.at(v));
    s += '\n';
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << s;
}

SlopeDataset read_slopes_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open slopes file: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  const auto header = split_csv_line(line);
  if (header.size() < 4 || header[0] != "location_id" || header[1] != "lon" ||
      header[2] != "lat")
    throw ParseError(path + ":1: header must start with location_id,lon,lat");

  SlopeDataset ds;
  const std::string slope_suffix = "_slope";
  for (std::size_t i = 3; i < header.size(); ++i) {
    const auto& h = header[i];
    if (h.size() > slope_suffix.size() &&
        h.compare(h.size() - slope_suffix.size(), slope_suffix.size(), slope_suffix) == 0)
      ds.variables.push_back(h.substr(0, h.size() - slope_suffix.size()));
  }
  if (ds.variables.empty()) throw ParseError(path + ": no *_slope columns found");
  if (header.size() != 3 + 2 * ds.variables.size())
    throw ParseError(path + ": expected slope and intercept columns for each variable");

  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError(path + ":" + std::to_string(lineno) + ": field count mismatch");
    LocationSlopes loc;
    loc.id = cells[0];
    loc.lon = parse_cell(cells[1], path, lineno);
    loc.lat = parse_cell(cells[2], path, lineno);
    for (std::size_t i = 0; i < ds.variables.size(); ++i) {
      loc.slope[ds.variables[i]] = parse_cell(cells[3 + i], path, lineno);
      loc.intercept[ds.variables[i]] =
          parse_cell(cells[3 + ds.variables.size() + i], path, lineno);
    }
    ds.locations.push_back(std::move(loc));
  }
  return ds;
}

void write_drop_log(const SlopeDataset& ds, const std::string& path) {
  std::string s = "location_id,reason\n";
  for (const auto& [id, reason] : ds.dropped) s += id + ',' + reason + '\n';
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("cannot open for writing: " + path);
  f << s;
}

DiagnosticsResult spatial_diagnostics(const SlopeDataset& ds, const std::string& variable) {
  if (ds.locations.size() < 25)
    throw InsufficientDataError("spatial_diagnostics requires at least 25 locations");
  const auto sites = ds.sites();
  const DesignMatrix design = DesignMatrix::build(ds.slopes_of(variable), {});
  const FitResult fit = gp_mle_fit(design, *sites);
  DiagnosticsResult out;
  out.cov = fit.cov;
  out.practical_range = practical_range(fit.cov.range);
  out.fraction_spatial = spatial_fraction(fit.cov);
  return out;
}

CausalDataset slope_causal_dataset(const SlopeDataset& ds, const std::string& z_var,
                                   const std::string& a_var, const std::string& y_var,
                                   const std::vector<CovariateRequest>& extra,
                                   bool include_intercept_covariates) {
  CausalDataset d;
  d.sites = ds.sites();
  d.z = ds.slopes_of(z_var);
  d.a = ds.slopes_of(a_var);
  d.y = ds.slopes_of(y_var);
  if (include_intercept_covariates) {
    d.covariates.push_back({a_var + "_intercept", ds.intercepts_of(a_var), true, false});
    d.covariates.push_back({y_var + "_intercept", ds.intercepts_of(y_var), false, true});
  }
  for (const auto& req : extra)
    d.covariates.push_back({req.variable + "_slope", ds.slopes_of(req.variable), req.stage1,
                            req.stage2});
  return d;
}

}  // namespace siv

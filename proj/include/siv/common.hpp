#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace siv {

inline constexpr const char* kVersion = "0.1.0";

// Error hierarchy. Every failure mode surfaced by the library derives from
// Error so callers can catch one type at the CLI boundary.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidConfigError : Error { using Error::Error; };
struct SingularDesignError : Error { using Error::Error; };
struct WeakInstrumentError : Error { using Error::Error; };
struct IsolatedSiteError : Error { using Error::Error; };
struct FitFailureError : Error { using Error::Error; };
struct NumericalDegeneracyError : Error { using Error::Error; };
struct DegenerateVarianceError : Error { using Error::Error; };
struct UnattainableTargetError : Error { using Error::Error; };
struct InsufficientDataError : Error { using Error::Error; };
struct IncompleteGridError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct TransformError : Error { using Error::Error; };

inline double mean(const Eigen::VectorXd& v) { return v.mean(); }

inline double sample_var(const Eigen::VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

inline double sample_sd(const Eigen::VectorXd& v) { return std::sqrt(sample_var(v)); }

// Pearson correlation across sites.
inline double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double ma = a.mean(), mb = b.mean();
  const Eigen::ArrayXd da = a.array() - ma, db = b.array() - mb;
  const double denom = std::sqrt(da.square().sum() * db.square().sum());
  if (denom == 0.0) return 0.0;
  return (da * db).sum() / denom;
}

}  // namespace siv

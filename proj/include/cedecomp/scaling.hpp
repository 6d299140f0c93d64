#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cedecomp/decomposition.hpp"
#include "cedecomp/records.hpp"

namespace cedecomp {

enum class Metric { CE, EE, SA, Conf };

inline constexpr Metric kAllMetrics[] = {Metric::CE, Metric::EE, Metric::SA, Metric::Conf};

std::string metric_name(Metric m);  // CE, EE, SA, CONF
double metric_value(const Decomposition& d, Metric m);

struct ScalingPoint {
  std::string model;
  double n = 0.0;  // non-embedding parameter count
  double value = 0.0;
};

struct DroppedPoint {
  std::string model;
  std::string reason;
};

// ln|M| = intercept + slope * ln N, fitted by unweighted OLS.
struct ScalingFit {
  Metric metric = Metric::CE;
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t n_points = 0;
  std::vector<DroppedPoint> dropped_points;
  std::vector<std::string> models;  // models used by the fit, sorted
  // The series changes sign, so ln|M| folds at zero and the fit is suspect.
  bool sign_flip = false;
};

inline constexpr double kDefaultEpsilon = 1e-6;

// Points with |value| < epsilon (or a non-finite value, or N <= 0) are dropped
// and listed. Throws Error(Domain, "insufficient points") with fewer than two
// usable points. When every ln|value| is equal the fit is the constant line:
// slope 0, R^2 = 1.
ScalingFit fit_power_law(std::span<const ScalingPoint> points, double epsilon = kDefaultEpsilon,
                         Metric metric = Metric::CE);

struct ExponentDelta {
  Metric metric = Metric::CE;
  double delta_abs = 0.0;  // |slope_M - slope_CE|
};

// Throws Error(Domain) unless both fits used the same models.
ExponentDelta exponent_delta(const ScalingFit& fit_m, const ScalingFit& fit_ce);

// Each component's fraction of |ee| + |sa| + |conf|.
struct ComponentShares {
  double ee = 0.0;
  double sa = 0.0;
  double conf = 0.0;
};

ComponentShares component_shares(const Decomposition& d);

enum class GroupBy { Family, All };

GroupBy parse_group_by(const std::string& name);

using Cell = std::pair<CorpusManifest, Decomposition>;

struct FitRow {
  std::string group;
  ScalingFit fit;
  std::optional<double> delta_abs;  // absent on the CE row
};

struct FitReport {
  std::vector<FitRow> rows;
  std::vector<std::string> notices;
};

inline constexpr double kLowR2Threshold = 0.5;

// One fit per (group, metric), rows ordered by group name then CE, EE, SA,
// CONF. Groups are split by dataset first; the group label carries the
// dataset only when the cells span more than one. Groups with fewer than two
// models are skipped with a notice, as are metrics whose fit fails.
FitReport fit_report(std::span<const Cell> cells, GroupBy group_by, double epsilon = kDefaultEpsilon);

void write_fit_csv(const FitReport& report, std::ostream& out);
void write_shares_csv(std::span<const Cell> cells, std::ostream& out);

}  // namespace cedecomp

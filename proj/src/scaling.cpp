#include "cedecomp/scaling.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "cedecomp/error.hpp"

namespace cedecomp {

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::CE: return "CE";
    case Metric::EE: return "EE";
    case Metric::SA: return "SA";
    case Metric::Conf: return "CONF";
  }
  return "?";
}

double metric_value(const Decomposition& d, Metric m) {
  switch (m) {
    case Metric::CE: return d.ce;
    case Metric::EE: return d.ee;
    case Metric::SA: return d.sa;
    case Metric::Conf: return d.conf;
  }
  return 0.0;
}

ScalingFit fit_power_law(std::span<const ScalingPoint> points, double epsilon, Metric metric) {
  ScalingFit fit;
  fit.metric = metric;

  std::vector<double> xs;
  std::vector<double> ys;
  bool seen_pos = false;
  bool seen_neg = false;
  for (const auto& pt : points) {
    if (!(pt.n > 0.0) || !std::isfinite(pt.n)) {
      fit.dropped_points.push_back({pt.model, "non-positive model size"});
      continue;
    }
    if (!std::isfinite(pt.value)) {
      fit.dropped_points.push_back({pt.model, "non-finite value"});
      continue;
    }
    if (std::fabs(pt.value) < epsilon) {
      fit.dropped_points.push_back({pt.model, "|value| < epsilon"});
      continue;
    }
    seen_pos = seen_pos || pt.value > 0;
    seen_neg = seen_neg || pt.value < 0;
    xs.push_back(std::log(pt.n));
    ys.push_back(std::log(std::fabs(pt.value)));
    fit.models.push_back(pt.model);
  }
  std::sort(fit.models.begin(), fit.models.end());
  fit.sign_flip = seen_pos && seen_neg;
  fit.n_points = xs.size();
  if (fit.n_points < 2) {
    throw Error(ErrorKind::Domain, "insufficient points for " + metric_name(metric) + " fit (" +
                                       std::to_string(fit.n_points) + " usable)");
  }

  const double count = static_cast<double>(xs.size());
  CompensatedSum sx, sy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx.add(xs[i]);
    sy.add(ys[i]);
  }
  const double x_mean = sx.value() / count;
  const double y_mean = sy.value() / count;

  CompensatedSum sxx, sxy, syy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - x_mean;
    const double dy = ys[i] - y_mean;
    sxx.add(dx * dx);
    sxy.add(dx * dy);
    syy.add(dy * dy);
  }
  if (sxx.value() == 0.0) {
    throw Error(ErrorKind::Domain, "all model sizes identical in " + metric_name(metric) + " fit");
  }

  if (syy.value() == 0.0) {
    fit.slope = 0.0;
    fit.intercept = y_mean;
    fit.r2 = 1.0;
    return fit;
  }

  fit.slope = sxy.value() / sxx.value();
  fit.intercept = y_mean - fit.slope * x_mean;
  CompensatedSum ss_res;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ss_res.add(r * r);
  }
  fit.r2 = std::clamp(1.0 - ss_res.value() / syy.value(), 0.0, 1.0);
  return fit;
}

ExponentDelta exponent_delta(const ScalingFit& fit_m, const ScalingFit& fit_ce) {
  if (fit_m.models != fit_ce.models) {
    throw Error(ErrorKind::Domain,
                "exponent delta: " + metric_name(fit_m.metric) + " and " + metric_name(fit_ce.metric) +
                    " fits use different model sets");
  }
  return {fit_m.metric, std::fabs(fit_m.slope - fit_ce.slope)};
}

ComponentShares component_shares(const Decomposition& d) {
  const double total = std::fabs(d.ee) + std::fabs(d.sa) + std::fabs(d.conf);
  if (!(total > 0.0)) throw Error(ErrorKind::Domain, "degenerate decomposition");
  ComponentShares s;
  s.ee = std::fabs(d.ee) / total;
  s.sa = std::fabs(d.sa) / total;
  s.conf = std::fabs(d.conf) / total;
  return s;
}

GroupBy parse_group_by(const std::string& name) {
  if (name == "family") return GroupBy::Family;
  if (name == "all") return GroupBy::All;
  throw Error(ErrorKind::Domain, "unknown grouping '" + name + "' (expected family or all)");
}

FitReport fit_report(std::span<const Cell> cells, GroupBy group_by, double epsilon) {
  FitReport report;
  if (cells.empty()) {
    report.notices.push_back("no cells to fit");
    return report;
  }

  std::set<std::string> datasets;
  for (const auto& [m, d] : cells) datasets.insert(m.dataset);
  const bool label_dataset = datasets.size() > 1;

  std::map<std::string, std::vector<const Cell*>> groups;
  for (const auto& cell : cells) {
    std::string label = group_by == GroupBy::All ? "all" : cell.first.family;
    if (label_dataset) label = cell.first.dataset + "/" + label;
    groups[label].push_back(&cell);
  }

  for (const auto& [label, members] : groups) {
    std::set<std::string> models;
    for (const Cell* c : members) models.insert(c->first.model_name);
    if (models.size() < 2) {
      report.notices.push_back("group " + label + ": fewer than 2 models, skipped");
      continue;
    }
    if (models.size() != members.size()) {
      report.notices.push_back("group " + label + ": repeated model names; all cells are fitted as separate points");
    }

    std::optional<ScalingFit> ce_fit;
    for (Metric metric : kAllMetrics) {
      std::vector<ScalingPoint> pts;
      for (const Cell* c : members) {
        pts.push_back({c->first.model_name, static_cast<double>(c->first.nonemb_params), metric_value(c->second, metric)});
      }
      FitRow row;
      row.group = label;
      try {
        row.fit = fit_power_law(pts, epsilon, metric);
      } catch (const Error& e) {
        report.notices.push_back("group " + label + ": " + e.what());
        continue;
      }
      for (const auto& dp : row.fit.dropped_points) {
        report.notices.push_back("group " + label + " " + metric_name(metric) + ": dropped " + dp.model + " (" +
                                 dp.reason + ")");
      }
      if (row.fit.sign_flip) {
        report.notices.push_back("group " + label + " " + metric_name(metric) +
                                 ": values change sign; ln|M| fit is unreliable");
      }
      if (row.fit.r2 < kLowR2Threshold) {
        report.notices.push_back("group " + label + " " + metric_name(metric) + ": low R^2 (" +
                                 format_double(row.fit.r2) + ")");
      }
      if (metric == Metric::CE) {
        ce_fit = row.fit;
      } else if (ce_fit) {
        try {
          row.delta_abs = exponent_delta(row.fit, *ce_fit).delta_abs;
        } catch (const Error& e) {
          report.notices.push_back("group " + label + ": " + e.what());
        }
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

void write_fit_csv(const FitReport& report, std::ostream& out) {
  out << "group,metric,slope,intercept,r2,n_points,delta_abs\n";
  for (const auto& row : report.rows) {
    out << row.group << ',' << metric_name(row.fit.metric) << ',' << format_double(row.fit.slope) << ','
        << format_double(row.fit.intercept) << ',' << format_double(row.fit.r2) << ',' << row.fit.n_points << ',';
    if (row.delta_abs) out << format_double(*row.delta_abs);
    out << '\n';
  }
}

void write_shares_csv(std::span<const Cell> cells, std::ostream& out) {
  out << "model,nonemb_params,ee_share,sa_share,conf_share\n";
  for (const auto& [m, d] : cells) {
    const auto s = component_shares(d);
    out << m.model_name << ',' << m.nonemb_params << ',' << format_double(s.ee) << ',' << format_double(s.sa) << ','
        << format_double(s.conf) << '\n';
  }
}

}  // namespace cedecomp

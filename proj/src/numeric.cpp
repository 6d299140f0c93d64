#include "cedecomp/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <limits>

#include "cedecomp/error.hpp"

namespace cedecomp {

double log_sum_exp(std::span<const double> xs) {
  if (xs.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(xs.begin(), xs.end());
  if (std::isinf(hi)) return hi;
  CompensatedSum acc;
  for (double x : xs) acc += std::exp(x - hi);
  return hi + std::log(acc.value());
}

std::string format_double(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v < 0 ? "-Infinity" : "Infinity";

  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string out(buf, end);
  if (out.find_first_of(".eE") == std::string::npos) out += ".0";
  return out;
}

LogBase parse_log_base(const std::string& name) {
  if (name == "e") return LogBase::E;
  if (name == "2") return LogBase::Two;
  if (name == "10") return LogBase::Ten;
  throw Error(ErrorKind::Domain, "unknown log base '" + name + "' (expected e, 2 or 10)");
}

std::string log_base_name(LogBase base) {
  switch (base) {
    case LogBase::Two: return "2";
    case LogBase::Ten: return "10";
    case LogBase::E: break;
  }
  return "e";
}

}  // namespace cedecomp

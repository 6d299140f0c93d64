#pragma once

#include <cmath>
#include <span>
#include <string>

namespace cedecomp {

// Neumaier-compensated running sum. Adding the same multiset of values in a
// different order agrees to within a couple of ulps of the total.
class CompensatedSum {
 public:
  CompensatedSum() = default;
  explicit CompensatedSum(double v) : sum_(v) {}

  void add(double v) {
    const double t = sum_ + v;
    if (std::fabs(sum_) >= std::fabs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }

  void add(const CompensatedSum& other) {
    add(other.sum_);
    add(other.comp_);
  }

  CompensatedSum& operator+=(double v) {
    add(v);
    return *this;
  }

  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// log(sum_i exp(x_i)) with max-subtraction. Returns -inf for an empty span or
// when every term is -inf.
double log_sum_exp(std::span<const double> xs);

// Shortest decimal that parses back to the same binary64 value. Finite values
// always carry a '.' or an exponent so JSON readers keep them as floats
// (this is what preserves the sign of -0.0). Non-finite values are rendered
// as -Infinity / Infinity / NaN.
std::string format_double(double v);

enum class LogBase { E, Two, Ten };

LogBase parse_log_base(const std::string& name);
std::string log_base_name(LogBase base);

// Converts a quantity expressed in nats into the requested base.
inline double from_nats(double nats, LogBase base) {
  switch (base) {
    case LogBase::Two: return nats / std::log(2.0);
    case LogBase::Ten: return nats / std::log(10.0);
    case LogBase::E: break;
  }
  return nats;
}

}  // namespace cedecomp

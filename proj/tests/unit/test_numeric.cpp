#include <doctest.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <random>
#include <vector>

#include "cedecomp/error.hpp"
#include "cedecomp/numeric.hpp"

using namespace cedecomp;

TEST_CASE("CompensatedSum recovers what naive summation loses") {
  CompensatedSum s;
  s.add(1e16);
  for (int i = 0; i < 10; ++i) s.add(1.0);
  s.add(-1e16);
  CHECK(s.value() == 10.0);
}

TEST_CASE("CompensatedSum is close to order-independent") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> dist(-1.0, 0.0);
  std::vector<double> xs(100000);
  for (auto& x : xs) x = std::log(-dist(rng) + 1e-300);
  CompensatedSum a;
  for (double x : xs) a.add(x);
  std::shuffle(xs.begin(), xs.end(), rng);
  CompensatedSum b;
  for (double x : xs) b.add(x);
  CHECK(std::fabs(a.value() - b.value()) <= 4 * std::numeric_limits<double>::epsilon() * std::fabs(a.value()));
}

TEST_CASE("log_sum_exp") {
  const std::vector<double> xs{std::log(0.5), std::log(0.25)};
  CHECK(log_sum_exp(xs) == doctest::Approx(std::log(0.75)).epsilon(1e-15));
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-15));
  CHECK(std::isinf(log_sum_exp(std::vector<double>{})));
}

TEST_CASE("format_double is shortest round-trip and keeps JSON floats") {
  CHECK(format_double(-1.3862943611198906) == "-1.3862943611198906");
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(1.0) == "1.0");
  CHECK(format_double(-0.0) == "-0.0");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-Infinity");
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "NaN");

  std::mt19937_64 rng(17);
  for (int i = 0; i < 20000; ++i) {
    std::uint64_t bits = rng();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    if (!std::isfinite(v)) continue;
    const auto s = format_double(v);
    double back = 0;
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(std::memcmp(&back, &v, sizeof v) == 0);
  }
}

TEST_CASE("log bases") {
  CHECK(parse_log_base("2") == LogBase::Two);
  CHECK(log_base_name(LogBase::Ten) == "10");
  CHECK(from_nats(std::log(8.0), LogBase::Two) == doctest::Approx(3.0).epsilon(1e-15));
  CHECK_THROWS_AS(parse_log_base("3"), Error);
}

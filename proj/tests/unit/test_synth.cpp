#include <doctest.h>

#include <cmath>
#include <sstream>

#include "cedecomp/decomposition.hpp"
#include "cedecomp/error.hpp"
#include "cedecomp/scaling.hpp"
#include "cedecomp/synth.hpp"
#include "oracles.hpp"

using namespace cedecomp;

namespace {

std::string serialize(const std::vector<PredictionRecord>& records) {
  std::ostringstream out;
  write_records(records, out);
  return out.str();
}

}  // namespace

TEST_CASE("CounterRng matches the published SplitMix64 constants") {
  // First output of the reference SplitMix64 seeded with 0.
  CHECK(CounterRng::mix64(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);

  CounterRng a(7, 1), b(7, 1), c(7, 2);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CounterRng u(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK((v > 0.0 && v < 1.0));
  }
}

TEST_CASE("truncated geometric entropy matches the closed form") {
  for (double r : {0.01, 0.3, 0.5, 0.9, 0.999, 1.0}) {
    for (std::uint64_t m : {1u, 3u, 15u, 255u}) {
      const double h = truncated_geometric_entropy(r, m);
      CHECK(std::fabs(h - static_cast<double>(oracle::truncated_geometric_entropy(r, m))) <= 1e-12);
      double direct = 0;
      for (double p : truncated_geometric(r, m)) direct -= p > 0 ? p * std::log(p) : 0.0;
      CHECK(std::fabs(h - direct) <= 1e-12);
    }
  }
  CHECK(truncated_geometric_entropy(0.5, 15) == doctest::Approx(1.3861098742463189).epsilon(1e-14));
}

TEST_CASE("solve_p_for_entropy") {
  SUBCASE("point mass") {
    const double r = solve_p_for_entropy(0.0, 15);
    CHECK(r <= 1e-9);
    CHECK(truncated_geometric_entropy(r, 15) < 1e-8);
  }
  SUBCASE("maximum entropy") {
    const double r = solve_p_for_entropy(std::log(4.0), 3);
    for (double p : truncated_geometric(r, 3)) CHECK(p == doctest::Approx(0.25).epsilon(1e-9));
  }
  SUBCASE("interior target") {
    const double r = solve_p_for_entropy(0.5, 63);
    CHECK(std::fabs(static_cast<double>(oracle::truncated_geometric_entropy(r, 63)) - 0.5) <= 1e-9);
  }
  SUBCASE("out of range") {
    CHECK_THROWS_WITH_AS(solve_p_for_entropy(5.0, 3), doctest::Contains("attainable interval"), Error);
    CHECK_THROWS_AS(solve_p_for_entropy(-0.1, 3), Error);
  }
}

TEST_CASE("gen_corpus: point mass gives all-zero components") {
  SynthSpec spec;
  spec.p_family = std::vector<double>{1.0};
  spec.n_records = 1000;
  const auto corpus = gen_corpus(spec);
  for (const auto& r : corpus.records) {
    CHECK(r.rbe == 0);
    CHECK(r.ln_score == 0.0);
  }
  const auto d = decompose(accumulate(corpus.records));
  CHECK(d.ce == 0.0);
  CHECK(d.ee == 0.0);
  CHECK(d.sa == 0.0);
  CHECK(d.conf == 0.0);
}

TEST_CASE("gen_corpus: aligned geometric corpus") {
  SynthSpec spec;
  spec.p_family = GeometricFamily{0.5, 15};
  spec.seed = 11;
  const auto corpus = gen_corpus(spec);
  CHECK(corpus.manifest.num_records == corpus.records.size());
  const auto d = decompose(accumulate(corpus.records));
  CHECK(d.sa < 1e-6);
  // Sampling noise of the empirical entropy at 50k draws is a few 1e-3.
  CHECK(d.ee == doctest::Approx(static_cast<double>(oracle::truncated_geometric_entropy(0.5, 15))).epsilon(0.01));
  CHECK(std::fabs(d.conf) < 1e-9);
  CHECK(identity_holds(d));
  for (const auto& r : corpus.records) {
    CHECK(r.ln_score <= 0.0);
    CHECK(validate_record(r, corpus.manifest).ok());
  }
}

TEST_CASE("gen_corpus: conf target is met") {
  SynthSpec spec;
  spec.p_family = GeometricFamily{0.6, 31};
  spec.conf_target = -0.7;
  spec.alignment = 0.8;
  spec.n_records = 20000;
  const auto d = decompose(accumulate(gen_corpus(spec).records));
  CHECK(d.conf == doctest::Approx(-0.7).epsilon(1e-9));
}

TEST_CASE("gen_corpus: SA grows as alignment falls") {
  double previous = -1.0;
  for (double alignment : {1.0, 0.8, 0.6, 0.4, 0.2, 0.0}) {
    SynthSpec spec;
    spec.p_family = GeometricFamily{0.5, 15};
    spec.alignment = alignment;
    spec.n_records = 20000;
    spec.seed = 3;
    const auto d = decompose(accumulate(gen_corpus(spec).records));
    CHECK(d.sa > previous);
    previous = d.sa;
  }
  CHECK(previous > 0.1);
}

TEST_CASE("gen_corpus: infeasible conf target") {
  SynthSpec spec;
  spec.p_family = GeometricFamily{0.5, 3};
  spec.conf_target = 1.0;
  spec.n_records = 5000;
  CHECK_THROWS_WITH_AS(gen_corpus(spec), doctest::Contains("feasible maximum"), Error);
}

TEST_CASE("gen_corpus is deterministic") {
  SynthSpec spec;
  spec.p_family = GeometricFamily{0.7, 40};
  spec.alignment = 0.5;
  spec.top_k = 5;
  spec.n_records = 3000;
  spec.seed = 99;
  const auto a = serialize(gen_corpus(spec).records);
  const auto b = serialize(gen_corpus(spec).records);
  CHECK(a == b);
  spec.seed = 100;
  CHECK(a != serialize(gen_corpus(spec).records));
}

TEST_CASE("gen_corpus: synthetic top-k profiles validate") {
  SynthSpec spec;
  spec.p_family = GeometricFamily{0.5, 15};
  spec.top_k = 10;
  spec.n_records = 2000;
  const auto corpus = gen_corpus(spec);
  REQUIRE(corpus.manifest.top_k == 10u);
  for (const auto& r : corpus.records) {
    REQUIRE(r.topk_ln_scores.has_value());
    CHECK(validate_record(r, corpus.manifest).errors() == 0);
  }
}

TEST_CASE("solve_alignment_for_kl inverts alignment_kl") {
  const auto p = truncated_geometric(0.8, 63);
  for (double target : {0.001, 0.05, 0.2}) {
    const double a = solve_alignment_for_kl(p, target);
    CHECK(alignment_kl(p, a) == doctest::Approx(target).epsilon(1e-8));
  }
}

TEST_CASE("gen_scaling_series recovers the planted exponent") {
  SeriesSpec spec;
  spec.alpha = 0.41;
  spec.coefficient = 865.0;
  spec.sizes = {1'000'000, 10'000'000, 100'000'000, 1'000'000'000};
  spec.seed = 42;
  const auto series = gen_scaling_series(spec);
  REQUIRE(series.size() == 4);
  std::vector<ScalingPoint> ee, sa;
  for (const auto& c : series) {
    const auto d = decompose(accumulate(c.records));
    ee.push_back({c.manifest.model_name, static_cast<double>(c.manifest.nonemb_params), d.ee});
    sa.push_back({c.manifest.model_name, static_cast<double>(c.manifest.nonemb_params), d.sa});
    CHECK(d.conf == doctest::Approx(spec.conf_target).epsilon(1e-9));
  }
  const auto fit = fit_power_law(ee);
  CHECK(std::fabs(fit.slope + 0.41) <= 0.02);
  CHECK(fit.r2 > 0.99);
  CHECK(std::fabs(fit_power_law(sa).slope) < 0.02);
  CHECK(series[0].manifest.model_name == "synth-1000000");
}

TEST_CASE("spec parsing") {
  const auto s = synth_spec_from_json(nlohmann::json::parse(
      R"({"n_records": 10, "geometric": {"r": 0.4, "max_rank": 7}, "alignment": 0.5, "seed": 3})"));
  CHECK(s.n_records == 10);
  CHECK(std::get<GeometricFamily>(s.p_family).max_rank == 7);
  const auto series_json = nlohmann::json::parse(R"({"sizes": [1e6, 1e7], "a": 3.2, "n_records": [100, 200]})");
  CHECK(is_series_spec(series_json));
  const auto series = series_spec_from_json(series_json);
  CHECK(series.coefficient == 3.2);
  CHECK(series.sizes == std::vector<std::uint64_t>{1'000'000, 10'000'000});
  CHECK(series.n_records == std::vector<std::uint64_t>{100, 200});
  CHECK_THROWS_AS(synth_spec_from_json(nlohmann::json::parse(R"({"n_records": "x"})")), Error);
}

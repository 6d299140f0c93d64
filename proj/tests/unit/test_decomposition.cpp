#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "cedecomp/decomposition.hpp"
#include "cedecomp/error.hpp"
#include "oracles.hpp"

using namespace cedecomp;

namespace {

PredictionRecord rec(std::uint64_t rbe, double score) {
  PredictionRecord r;
  r.rbe = rbe;
  r.ln_score = std::log(score);
  return r;
}

const std::vector<PredictionRecord> kHand = {rec(0, 0.5), rec(0, 0.5), rec(1, 0.25)};

// Frozen at 40 digits with an arbitrary-precision calculator.
constexpr double kHandCe = 0.9241962407465937;
constexpr double kHandEe = 0.6365141682948128;
constexpr double kHandConf = -0.2876820724517809;

}  // namespace

TEST_CASE("accumulate") {
  SUBCASE("single certain record") {
    const auto agg = accumulate(std::vector{rec(0, 1.0)});
    CHECK(agg.total() == 1);
    REQUIRE(agg.per_rank().size() == 1);
    CHECK(agg.per_rank().at(0).count == 1);
    CHECK(agg.per_rank().at(0).sum_lns.value() == 0.0);
  }
  SUBCASE("hand sums") {
    const auto agg = accumulate(kHand);
    CHECK(agg.total() == 3);
    CHECK(agg.per_rank().at(0).count == 2);
    CHECK(agg.per_rank().at(0).sum_lns.value() == doctest::Approx(2 * std::log(0.5)).epsilon(1e-15));
    CHECK(agg.per_rank().at(1).sum_lns.value() == doctest::Approx(std::log(0.25)).epsilon(1e-15));
  }
  SUBCASE("empty input") {
    CHECK_THROWS_WITH_AS(accumulate(std::vector<PredictionRecord>{}), "empty corpus", Error);
  }
}

TEST_CASE("merge: identity element and split-merge") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const auto records = oracle::random_corpus(rng, 200);
    const auto whole = accumulate(records);

    const auto with_empty = merge(whole, RankAggregate{});
    CHECK(with_empty.total() == whole.total());
    CHECK(decompose(with_empty).ce == decompose(whole).ce);

    const std::size_t cut = rng() % records.size();
    RankAggregate a, b;
    for (std::size_t i = 0; i < records.size(); ++i) (i < cut ? a : b).add(records[i]);
    const auto joined = merge(a, b);
    REQUIRE(joined.support_size() == whole.support_size());
    for (const auto& [rank, stats] : whole.per_rank()) {
      const auto& other = joined.per_rank().at(rank);
      CHECK(other.count == stats.count);
      CHECK(std::fabs(other.sum_lns.value() - stats.sum_lns.value()) <= 1e-12 * std::max(1.0, std::fabs(stats.sum_lns.value())));
    }
  }
}

TEST_CASE("rbe_distribution") {
  CHECK(rbe_distribution(accumulate(std::vector{rec(0, 1.0)})).p.at(0) == 1.0);

  const auto p = rbe_distribution(accumulate(kHand));
  CHECK(p.p.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(p.p.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(p.support == std::vector<std::uint64_t>{0, 1});

  const auto uniform = rbe_distribution(accumulate(std::vector{rec(0, .9), rec(3, .1), rec(7, .1), rec(9, .01)}));
  for (const auto& [e, pe] : uniform.p) CHECK(pe == 0.25);
}

TEST_CASE("score_distribution") {
  SUBCASE("certain record") {
    const auto s = score_distribution(accumulate(std::vector{rec(0, 1.0)}));
    CHECK(s.ln_Q.at(0) == 0.0);
    CHECK(s.ln_C == 0.0);
    CHECK(s.q.at(0) == 1.0);
  }
  SUBCASE("geometric mean forced with one rank") {
    const auto s = score_distribution(accumulate(std::vector{rec(0, 0.5), rec(0, 0.125)}));
    CHECK(std::exp(s.ln_Q.at(0)) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::exp(s.ln_C) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(s.q.at(0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("hand computation") {
    const auto s = score_distribution(accumulate(kHand));
    CHECK(std::exp(s.ln_Q.at(0)) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(std::exp(s.ln_Q.at(1)) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(std::exp(s.ln_C) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(s.q.at(0) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(s.q.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }
  SUBCASE("zero score is rejected") {
    RankAggregate agg;
    agg.add(0, -0.5);
    agg.add(2, -std::numeric_limits<double>::infinity());
    CHECK_THROWS_WITH_AS(score_distribution(agg), doctest::Contains("zero probability score at rbe=2"), Error);
  }
}

TEST_CASE("direct_ce") {
  CHECK(direct_ce(accumulate(std::vector{rec(0, 1.0)})) == 0.0);
  CHECK(direct_ce(accumulate(std::vector{rec(0, 0.5), rec(0, 0.125)})) == doctest::Approx(1.3862943611198906).epsilon(1e-15));
  CHECK(direct_ce(accumulate(kHand)) == doctest::Approx(kHandCe).epsilon(1e-15));
}

TEST_CASE("decompose: hand examples") {
  const auto zero = decompose(accumulate(std::vector{rec(0, 1.0)}));
  CHECK(zero.ce == 0.0);
  CHECK(zero.ee == 0.0);
  CHECK(zero.sa == 0.0);
  CHECK(zero.conf == 0.0);
  CHECK(zero.residual == 0.0);

  const auto d = decompose(accumulate(kHand));
  CHECK(d.ce == doctest::Approx(kHandCe).epsilon(1e-14));
  CHECK(d.ee == doctest::Approx(kHandEe).epsilon(1e-14));
  CHECK(std::fabs(d.sa) < 1e-15);
  CHECK(d.conf == doctest::Approx(kHandConf).epsilon(1e-14));
  CHECK(std::fabs(d.residual) < 1e-15);
  CHECK(d.n == 3);
  CHECK(d.support_size == 2);
  CHECK(identity_holds(d));
}

TEST_CASE("decompose agrees with the long-double oracle on random corpora") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const auto records = oracle::random_corpus(rng, 300, 20);
    const auto d = decompose(accumulate(records));
    const auto o = oracle::brute_decompose(records);
    const double scale = std::max(1.0, static_cast<double>(o.ce));
    CHECK(std::fabs(d.ce - static_cast<double>(o.ce)) <= 1e-12 * scale);
    CHECK(std::fabs(d.ee - static_cast<double>(o.ee)) <= 1e-12 * scale);
    CHECK(std::fabs(d.sa - static_cast<double>(o.sa)) <= 1e-11 * scale);
    CHECK(std::fabs(d.conf - static_cast<double>(o.conf)) <= 1e-12 * scale);
    CHECK(identity_holds(d));
  }
}

TEST_CASE("component bounds hold on random corpora") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 300; ++trial) {
    const auto d = decompose(accumulate(oracle::random_corpus(rng, 500)));
    CHECK(d.ee >= 0.0);
    CHECK(d.ee <= std::log(static_cast<double>(d.support_size)));
    CHECK(d.sa >= 0.0);
    CHECK(d.ce >= 0.0);
  }
}

TEST_CASE("decomposition is invariant to record order and sharding") {
  std::mt19937_64 rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    auto records = oracle::random_corpus(rng, 400);
    const auto base = decompose(accumulate(records));

    std::shuffle(records.begin(), records.end(), rng);
    const auto shuffled = decompose(accumulate(records));

    const std::size_t shards = 1 + rng() % 7;
    std::vector<RankAggregate> parts(shards);
    for (const auto& r : records) parts[rng() % shards].add(r);
    RankAggregate joined;
    for (auto it = parts.rbegin(); it != parts.rend(); ++it) joined.absorb(*it);
    const auto sharded = decompose(joined);

    for (const auto* other : {&shuffled, &sharded}) {
      CHECK(std::fabs(other->ce - base.ce) < 1e-12);
      CHECK(std::fabs(other->ee - base.ee) < 1e-12);
      CHECK(std::fabs(other->sa - base.sa) < 1e-12);
      CHECK(std::fabs(other->conf - base.conf) < 1e-12);
    }
  }
}

TEST_CASE("softmax-derived records respect the rank and harmonic bounds") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> logit(0.0, 2.0);
  const std::size_t vocab = 64;
  RankAggregate agg;
  for (int i = 0; i < 4000; ++i) {
    std::vector<double> z(vocab);
    for (auto& v : z) v = logit(rng);
    // Quantize so ties occur.
    for (auto& v : z) v = std::round(v * 4) / 4;
    const double mx = *std::max_element(z.begin(), z.end());
    double norm = 0;
    for (double v : z) norm += std::exp(v - mx);
    std::vector<double> probs(vocab);
    for (std::size_t t = 0; t < vocab; ++t) probs[t] = std::exp(z[t] - mx) / norm;
    const std::size_t gt = rng() % vocab;
    const auto e = oracle::brute_rank(probs, gt);
    CHECK(probs[gt] <= 1.0 / static_cast<double>(e + 1) + 1e-15);
    agg.add(e, std::log(probs[gt]));
  }
  const auto d = decompose(agg);
  CHECK(d.conf <= harmonic_conf_bound(agg) + 1e-12);
  CHECK(identity_holds(d));
}

TEST_CASE("harmonic_conf_bound") {
  const std::vector<std::uint64_t> support{0, 1, 2};
  CHECK(harmonic_conf_bound(support) == doctest::Approx(std::log(1.0 + 0.5 + 1.0 / 3.0)).epsilon(1e-15));
}

TEST_CASE("decomposition document round-trips through every log base") {
  const auto d = decompose(accumulate(kHand));
  CorpusManifest m;
  m.model_name = "m";
  m.family = "f";
  m.dataset = "d";
  m.nonemb_params = 5;
  m.vocab_size = 10;
  m.num_records = 3;
  for (LogBase base : {LogBase::E, LogBase::Two, LogBase::Ten}) {
    const auto doc = decomposition_to_json(d, m, {base, std::nullopt});
    std::vector<std::string> keys;
    for (const auto& [k, v] : doc.items()) keys.push_back(k);
    CHECK(keys == std::vector<std::string>{"ce", "ee", "sa", "conf", "residual", "n", "support_size", "log_base", "source"});
    const auto [src, back] = decomposition_from_json(nlohmann::json::parse(doc.dump()));
    CHECK(back.ce == doctest::Approx(d.ce).epsilon(1e-15));
    CHECK(back.ee == doctest::Approx(d.ee).epsilon(1e-15));
    CHECK(back.conf == doctest::Approx(d.conf).epsilon(1e-15));
    CHECK(back.n == 3);
    CHECK(src.nonemb_params == 5);
  }
  const auto bits = decomposition_to_json(d, m, {LogBase::Two, -20.0});
  CHECK(bits["ee"].get<double>() == doctest::Approx(d.ee / std::log(2.0)).epsilon(1e-15));
  CHECK(bits["clamp_lns"].get<double>() == -20.0);
}

#include "cedecomp/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "cedecomp/error.hpp"

namespace cedecomp {

void RankAggregate::add(std::uint64_t rbe, double ln_score) {
  auto& stats = per_rank_[rbe];
  ++stats.count;
  stats.sum_lns.add(ln_score);
  ++total_;
}

void RankAggregate::absorb(const RankAggregate& other) {
  for (const auto& [rank, stats] : other.per_rank_) {
    auto& mine = per_rank_[rank];
    mine.count += stats.count;
    mine.sum_lns.add(stats.sum_lns);
  }
  total_ += other.total_;
}

RankAggregate accumulate(std::span<const PredictionRecord> records) {
  if (records.empty()) throw Error(ErrorKind::Domain, "empty corpus");
  RankAggregate agg;
  for (const auto& r : records) agg.add(r);
  return agg;
}

RankAggregate merge(const RankAggregate& a, const RankAggregate& b) {
  RankAggregate out = a;
  out.absorb(b);
  return out;
}

RbeDistribution rbe_distribution(const RankAggregate& agg) {
  if (agg.empty()) throw Error(ErrorKind::Domain, "empty corpus");
  RbeDistribution dist;
  const double n = static_cast<double>(agg.total());
  for (const auto& [rank, stats] : agg.per_rank()) {
    dist.p[rank] = static_cast<double>(stats.count) / n;
    dist.support.push_back(rank);
  }
  return dist;
}

ScoreDistribution score_distribution(const RankAggregate& agg) {
  if (agg.empty()) throw Error(ErrorKind::Domain, "empty corpus");
  ScoreDistribution dist;
  std::vector<double> ln_qs;
  ln_qs.reserve(agg.support_size());
  for (const auto& [rank, stats] : agg.per_rank()) {
    const double ln_q = stats.sum_lns.value() / static_cast<double>(stats.count);
    if (std::isnan(ln_q) || (std::isinf(ln_q) && ln_q < 0)) {
      throw Error(ErrorKind::Validation, "zero probability score at rbe=" + std::to_string(rank));
    }
    dist.ln_Q[rank] = ln_q;
    ln_qs.push_back(ln_q);
  }
  dist.ln_C = log_sum_exp(ln_qs);
  for (const auto& [rank, ln_q] : dist.ln_Q) dist.q[rank] = std::exp(ln_q - dist.ln_C);
  return dist;
}

double direct_ce(const RankAggregate& agg) {
  if (agg.empty()) throw Error(ErrorKind::Domain, "empty corpus");
  CompensatedSum sum;
  for (const auto& [rank, stats] : agg.per_rank()) sum.add(stats.sum_lns);
  return -sum.value() / static_cast<double>(agg.total());
}

Decomposition decompose(const RankAggregate& agg) {
  const auto p = rbe_distribution(agg);
  const auto s = score_distribution(agg);

  CompensatedSum ee;
  CompensatedSum sa;
  for (std::uint64_t rank : p.support) {
    const double pe = p.p.at(rank);
    const double ln_p = std::log(pe);
    const double ln_q = s.ln_Q.at(rank) - s.ln_C;
    ee.add(-pe * ln_p);
    sa.add(pe * (ln_p - ln_q));
  }

  Decomposition d;
  d.n = agg.total();
  d.support_size = agg.support_size();
  // Both bounds are exact mathematically; only rounding can cross them.
  d.ee = std::clamp(ee.value(), 0.0, std::log(static_cast<double>(d.support_size)));
  d.sa = std::max(sa.value(), 0.0);
  d.conf = s.ln_C;
  d.ce = direct_ce(agg);
  d.residual = d.ce - (d.ee + d.sa - d.conf);
  return d;
}

bool identity_holds(const Decomposition& d) {
  return std::fabs(d.residual) <= kIdentityTolerance * std::max(1.0, d.ce);
}

double harmonic_conf_bound(std::span<const std::uint64_t> support) {
  CompensatedSum h;
  for (std::uint64_t e : support) h.add(1.0 / (static_cast<double>(e) + 1.0));
  return std::log(h.value());
}

double harmonic_conf_bound(const RankAggregate& agg) {
  std::vector<std::uint64_t> support;
  for (const auto& [rank, stats] : agg.per_rank()) support.push_back(rank);
  return harmonic_conf_bound(support);
}

nlohmann::ordered_json decomposition_to_json(const Decomposition& d, const CorpusManifest& source,
                                            const DecompositionDocOptions& opts) {
  nlohmann::ordered_json j;
  j["ce"] = from_nats(d.ce, opts.log_base);
  j["ee"] = from_nats(d.ee, opts.log_base);
  j["sa"] = from_nats(d.sa, opts.log_base);
  j["conf"] = from_nats(d.conf, opts.log_base);
  j["residual"] = from_nats(d.residual, opts.log_base);
  j["n"] = d.n;
  j["support_size"] = d.support_size;
  j["log_base"] = log_base_name(opts.log_base);
  if (opts.clamp_lns) j["clamp_lns"] = *opts.clamp_lns;
  j["source"] = nlohmann::ordered_json::parse(manifest_to_json(source).dump());
  return j;
}

std::pair<CorpusManifest, Decomposition> decomposition_from_json(const nlohmann::json& j) {
  try {
    const LogBase base = parse_log_base(j.value("log_base", std::string("e")));
    const double to_nats = base == LogBase::E ? 1.0 : std::log(base == LogBase::Two ? 2.0 : 10.0);
    Decomposition d;
    d.ce = j.at("ce").get<double>() * to_nats;
    d.ee = j.at("ee").get<double>() * to_nats;
    d.sa = j.at("sa").get<double>() * to_nats;
    d.conf = j.at("conf").get<double>() * to_nats;
    d.residual = j.at("residual").get<double>() * to_nats;
    d.n = j.at("n").get<std::uint64_t>();
    d.support_size = j.at("support_size").get<std::uint64_t>();
    return {manifest_from_json(j.at("source")), d};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed decomposition document: ") + e.what());
  }
}

}  // namespace cedecomp

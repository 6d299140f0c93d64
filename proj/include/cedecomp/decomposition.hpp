#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "cedecomp/numeric.hpp"
#include "cedecomp/records.hpp"

namespace cedecomp {

// Sufficient statistics for one RBE group: its size and the sum of its
// ground-truth log-scores.
struct RankStats {
  std::uint64_t count = 0;
  CompensatedSum sum_lns;
};

// Per-rank statistics of a corpus. Mergeable, so shards can be accumulated
// independently and joined. Only non-empty groups are stored.
class RankAggregate {
 public:
  void add(std::uint64_t rbe, double ln_score);
  void add(const PredictionRecord& record) { add(record.rbe, record.ln_score); }

  // Folds another aggregate into this one.
  void absorb(const RankAggregate& other);

  const std::map<std::uint64_t, RankStats>& per_rank() const { return per_rank_; }
  std::uint64_t total() const { return total_; }
  bool empty() const { return total_ == 0; }
  std::size_t support_size() const { return per_rank_.size(); }

 private:
  std::map<std::uint64_t, RankStats> per_rank_;
  std::uint64_t total_ = 0;
};

// Throws Error(Domain, "empty corpus") on empty input.
RankAggregate accumulate(std::span<const PredictionRecord> records);

RankAggregate merge(const RankAggregate& a, const RankAggregate& b);

// p_e = n_e / N over the observed ranks.
struct RbeDistribution {
  std::map<std::uint64_t, double> p;
  std::vector<std::uint64_t> support;  // ascending
};

// Q_e is the geometric mean of the group's scores, kept in log space; q_e is
// its normalisation by C = sum_e Q_e.
struct ScoreDistribution {
  std::map<std::uint64_t, double> ln_Q;
  std::map<std::uint64_t, double> q;
  double ln_C = 0.0;
};

RbeDistribution rbe_distribution(const RankAggregate& agg);

// Throws Error(Validation, "zero probability score") when a group contains a
// score of exactly zero.
ScoreDistribution score_distribution(const RankAggregate& agg);

// Mean of -ln s over all records. Computed straight from the group sums and
// used as the independent check on the decomposition.
double direct_ce(const RankAggregate& agg);

struct Decomposition {
  double ce = 0.0;
  double ee = 0.0;    // Shannon entropy of p
  double sa = 0.0;    // KL(p || q)
  double conf = 0.0;  // ln C
  double residual = 0.0;  // ce - (ee + sa - conf)
  std::uint64_t n = 0;
  std::uint64_t support_size = 0;
};

inline constexpr double kIdentityTolerance = 1e-9;

Decomposition decompose(const RankAggregate& agg);

// |residual| <= 1e-9 * max(1, ce).
bool identity_holds(const Decomposition& d);

// ln(sum over the support of 1/(e+1)): the largest ln C any corpus with this
// support can reach when scores come from proper softmax outputs.
double harmonic_conf_bound(std::span<const std::uint64_t> support);
double harmonic_conf_bound(const RankAggregate& agg);

// Decomposition output document. Component values are converted to the
// requested base for display; the manifest is echoed under "source".
struct DecompositionDocOptions {
  LogBase log_base = LogBase::E;
  std::optional<double> clamp_lns;
};

nlohmann::ordered_json decomposition_to_json(const Decomposition& d, const CorpusManifest& source,
                                            const DecompositionDocOptions& opts = {});

// Parses a document written by decomposition_to_json, converting values back to nats.
std::pair<CorpusManifest, Decomposition> decomposition_from_json(const nlohmann::json& j);

}  // namespace cedecomp

#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cedecomp/decomposition.hpp"
#include "cedecomp/records.hpp"

namespace cedecomp {

enum class BinScheme { Raw, Log2 };

BinScheme parse_bin_scheme(const std::string& name);

struct Bin {
  std::uint64_t lo = 0;  // inclusive
  std::uint64_t hi = 0;  // exclusive
  double mass = 0.0;
};

struct BinnedSeries {
  std::vector<Bin> bins;
  BinScheme scheme = BinScheme::Raw;
};

// Raw: one [e, e+1) bin per support rank. Log2: [0,1), [1,2), [2,4), [4,8), ...
// up to the bin holding the largest rank, empty bins included so the bins
// partition the rank axis.
BinnedSeries bin_distribution(const std::map<std::uint64_t, double>& dist, BinScheme scheme);

struct OverlayRow {
  std::uint64_t rank;
  double p;
  double q;
};

struct Overlay {
  std::vector<OverlayRow> rows;
  double tv_distance = 0.0;  // 1/2 sum |p_e - q_e|
};

// Throws Error(Domain) if the supports differ.
Overlay overlay(const RbeDistribution& p, const ScoreDistribution& q);

// Arithmetic mean of the top-K probability scores, position by position, over
// records whose RBE equals the conditioning rank. This is a display
// statistic, not the geometric mean that feeds the decomposition.
struct ScoreByRankProfile {
  std::uint64_t condition_rbe = 0;
  std::vector<double> mean_score;  // index 0 is rank position 1
  std::uint64_t count = 0;
  std::uint64_t skipped = 0;  // matching records without a long-enough profile
};

ScoreByRankProfile score_by_rank(std::span<const PredictionRecord> records, std::uint64_t condition_rbe,
                                 std::size_t k);

// Streaming form of score_by_rank for file-sized inputs.
class ScoreByRankAccumulator {
 public:
  ScoreByRankAccumulator(std::uint64_t condition_rbe, std::size_t k);
  void add(const PredictionRecord& record);
  // Throws Error(Domain) when no profiled record matched.
  ScoreByRankProfile finish() const;

 private:
  std::uint64_t condition_rbe_;
  std::vector<CompensatedSum> sums_;
  std::uint64_t count_ = 0;
  std::uint64_t skipped_ = 0;
};

struct DynamicsRow {
  std::uint64_t step;
  double ce, ee, sa, conf;
};

// Rows sorted by checkpoint step. All cells must share model_name and dataset
// and carry a checkpoint step; duplicate steps are rejected.
std::vector<DynamicsRow> dynamics_series(std::span<const std::pair<CorpusManifest, Decomposition>> cells);

// CSV emitters. Headers always written; values in shortest round-trip form.
void write_overlay_csv(const Overlay& ov, std::ostream& out);
void write_binned_overlay_csv(const BinnedSeries& p, const BinnedSeries& q, std::ostream& out);
void write_dynamics_csv(std::span<const DynamicsRow> rows, std::ostream& out, LogBase base = LogBase::E);
void write_profile_csv(const ScoreByRankProfile& profile, std::ostream& out);

}  // namespace cedecomp

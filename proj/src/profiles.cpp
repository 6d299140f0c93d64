#include "cedecomp/profiles.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <ostream>

#include "cedecomp/error.hpp"

namespace cedecomp {

BinScheme parse_bin_scheme(const std::string& name) {
  if (name == "raw") return BinScheme::Raw;
  if (name == "log2") return BinScheme::Log2;
  throw Error(ErrorKind::Domain, "unknown bin scheme '" + name + "' (expected raw or log2)");
}

BinnedSeries bin_distribution(const std::map<std::uint64_t, double>& dist, BinScheme scheme) {
  BinnedSeries out;
  out.scheme = scheme;
  if (dist.empty()) return out;

  if (scheme == BinScheme::Raw) {
    for (const auto& [rank, mass] : dist) out.bins.push_back({rank, rank + 1, mass});
    return out;
  }

  // Bin b >= 1 covers [2^(b-1), 2^b); bin 0 is rank 0 alone.
  const std::uint64_t max_rank = dist.rbegin()->first;
  const std::size_t n_bins = max_rank == 0 ? 1 : static_cast<std::size_t>(std::bit_width(max_rank)) + 1;
  std::vector<CompensatedSum> sums(n_bins);
  for (const auto& [rank, mass] : dist) sums[rank == 0 ? 0 : std::bit_width(rank)].add(mass);
  for (std::size_t b = 0; b < n_bins; ++b) {
    const std::uint64_t lo = b == 0 ? 0 : std::uint64_t{1} << (b - 1);
    const std::uint64_t hi = b == 0 ? 1 : (b == 64 ? ~std::uint64_t{0} : std::uint64_t{1} << b);
    out.bins.push_back({lo, hi, sums[b].value()});
  }
  return out;
}

Overlay overlay(const RbeDistribution& p, const ScoreDistribution& q) {
  if (p.p.size() != q.q.size()) throw Error(ErrorKind::Domain, "overlay: support mismatch between p and q");
  Overlay ov;
  CompensatedSum l1;
  for (const auto& [rank, pe] : p.p) {
    auto it = q.q.find(rank);
    if (it == q.q.end()) {
      throw Error(ErrorKind::Domain, "overlay: rank " + std::to_string(rank) + " missing from q");
    }
    ov.rows.push_back({rank, pe, it->second});
    l1.add(std::fabs(pe - it->second));
  }
  ov.tv_distance = 0.5 * l1.value();
  return ov;
}

ScoreByRankAccumulator::ScoreByRankAccumulator(std::uint64_t condition_rbe, std::size_t k)
    : condition_rbe_(condition_rbe), sums_(k) {
  if (k == 0) throw Error(ErrorKind::Domain, "score_by_rank: K must be positive");
}

void ScoreByRankAccumulator::add(const PredictionRecord& record) {
  if (record.rbe != condition_rbe_) return;
  if (!record.topk_ln_scores || record.topk_ln_scores->size() < sums_.size()) {
    ++skipped_;
    return;
  }
  for (std::size_t i = 0; i < sums_.size(); ++i) sums_[i].add(std::exp((*record.topk_ln_scores)[i]));
  ++count_;
}

ScoreByRankProfile ScoreByRankAccumulator::finish() const {
  if (count_ == 0) {
    throw Error(ErrorKind::Domain, "no profiled records at rbe=" + std::to_string(condition_rbe_));
  }
  ScoreByRankProfile profile;
  profile.condition_rbe = condition_rbe_;
  profile.count = count_;
  profile.skipped = skipped_;
  for (const auto& s : sums_) profile.mean_score.push_back(s.value() / static_cast<double>(count_));
  return profile;
}

ScoreByRankProfile score_by_rank(std::span<const PredictionRecord> records, std::uint64_t condition_rbe,
                                 std::size_t k) {
  ScoreByRankAccumulator acc(condition_rbe, k);
  for (const auto& r : records) acc.add(r);
  return acc.finish();
}

std::vector<DynamicsRow> dynamics_series(std::span<const std::pair<CorpusManifest, Decomposition>> cells) {
  std::vector<DynamicsRow> rows;
  if (cells.empty()) return rows;
  const auto& first = cells.front().first;
  for (const auto& [m, d] : cells) {
    if (m.model_name != first.model_name || m.dataset != first.dataset) {
      throw Error(ErrorKind::Domain, "dynamics: cells mix models or datasets (" + first.model_name + "/" +
                                         first.dataset + " vs " + m.model_name + "/" + m.dataset + ")");
    }
    if (!m.checkpoint_step) {
      throw Error(ErrorKind::Domain, "dynamics: " + m.model_name + " cell has no checkpoint_step");
    }
    rows.push_back({*m.checkpoint_step, d.ce, d.ee, d.sa, d.conf});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.step < b.step; });

  std::vector<std::uint64_t> dups;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].step == rows[i - 1].step && (dups.empty() || dups.back() != rows[i].step)) {
      dups.push_back(rows[i].step);
    }
  }
  if (!dups.empty()) {
    std::string msg = "dynamics: duplicate checkpoint steps:";
    for (auto s : dups) msg += " " + std::to_string(s);
    throw Error(ErrorKind::Domain, msg);
  }
  return rows;
}

void write_overlay_csv(const Overlay& ov, std::ostream& out) {
  out << "rank,p,q\n";
  for (const auto& r : ov.rows) out << r.rank << ',' << format_double(r.p) << ',' << format_double(r.q) << '\n';
}

void write_binned_overlay_csv(const BinnedSeries& p, const BinnedSeries& q, std::ostream& out) {
  if (p.bins.size() != q.bins.size()) throw Error(ErrorKind::Domain, "binned overlay: bin mismatch");
  out << "lo,hi,p,q\n";
  for (std::size_t i = 0; i < p.bins.size(); ++i) {
    out << p.bins[i].lo << ',' << p.bins[i].hi << ',' << format_double(p.bins[i].mass) << ','
        << format_double(q.bins[i].mass) << '\n';
  }
}

void write_dynamics_csv(std::span<const DynamicsRow> rows, std::ostream& out, LogBase base) {
  out << "step,ce,ee,sa,conf\n";
  for (const auto& r : rows) {
    out << r.step << ',' << format_double(from_nats(r.ce, base)) << ',' << format_double(from_nats(r.ee, base))
        << ',' << format_double(from_nats(r.sa, base)) << ',' << format_double(from_nats(r.conf, base)) << '\n';
  }
}

void write_profile_csv(const ScoreByRankProfile& profile, std::ostream& out) {
  out << "position,mean_score\n";
  for (std::size_t i = 0; i < profile.mean_score.size(); ++i) {
    out << (i + 1) << ',' << format_double(profile.mean_score[i]) << '\n';
  }
}

}  // namespace cedecomp

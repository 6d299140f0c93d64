#include "cedecomp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cedecomp/error.hpp"
#include "cedecomp/numeric.hpp"

namespace cedecomp {

// ---------------------------------------------------------------------------
// RNG

std::uint64_t CounterRng::mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t stream)
    : key_(mix64(seed ^ mix64(stream + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t CounterRng::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

double CounterRng::uniform() {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double CounterRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

// ---------------------------------------------------------------------------
// Truncated geometric

std::vector<double> truncated_geometric(double r, std::uint64_t max_rank) {
  if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::Domain, "geometric r must lie in (0, 1]");
  std::vector<double> w(max_rank + 1);
  double term = 1.0;
  CompensatedSum z;
  for (auto& x : w) {
    x = term;
    z.add(term);
    term *= r;
  }
  for (auto& x : w) x /= z.value();
  return w;
}

double truncated_geometric_entropy(double r, std::uint64_t max_rank) {
  if (r <= 0.0 || max_rank == 0) return 0.0;
  // H = ln Z - ln r * E[e], weights r^e.
  CompensatedSum z, ez;
  double term = 1.0;
  for (std::uint64_t e = 0; e <= max_rank; ++e) {
    z.add(term);
    ez.add(static_cast<double>(e) * term);
    term *= r;
    if (term == 0.0) break;
  }
  return std::log(z.value()) - std::log(r) * ez.value() / z.value();
}

double solve_p_for_entropy(double target_h, std::uint64_t max_rank) {
  const double h_max = std::log(static_cast<double>(max_rank) + 1.0);
  if (!(target_h >= 0.0 && target_h <= h_max)) {
    throw Error(ErrorKind::Domain, "target entropy " + format_double(target_h) + " outside attainable interval [0, " +
                                       format_double(h_max) + "] for max_rank " + std::to_string(max_rank));
  }
  if (max_rank == 0) return 0.0;
  if (target_h >= h_max) return 1.0;

  double lo = 0.0;
  double hi = 1.0;
  double mid = 0.5;
  for (int it = 0; it < 400; ++it) {
    mid = 0.5 * (lo + hi);
    const double h = truncated_geometric_entropy(mid, max_rank);
    if (std::fabs(h - target_h) <= 1e-12 || !(lo < mid && mid < hi)) break;
    (h < target_h ? lo : hi) = mid;
  }
  return mid;
}

// ---------------------------------------------------------------------------
// Alignment

double alignment_kl(const std::vector<double>& p, double alignment) {
  std::size_t support = 0;
  for (double pe : p) support += pe > 0.0;
  const double u = 1.0 / static_cast<double>(support);
  CompensatedSum kl;
  for (double pe : p) {
    if (pe <= 0.0) continue;
    const double q = alignment * pe + (1.0 - alignment) * u;
    kl.add(pe * (std::log(pe) - std::log(q)));
  }
  return std::max(kl.value(), 0.0);
}

double solve_alignment_for_kl(const std::vector<double>& p, double target_kl) {
  const double kl_max = alignment_kl(p, 0.0);
  if (!(target_kl >= 0.0 && target_kl <= kl_max)) {
    throw Error(ErrorKind::Domain, "self-alignment target " + format_double(target_kl) +
                                       " unattainable; feasible range is [0, " + format_double(kl_max) + "]");
  }
  // KL is non-increasing in the alignment.
  double lo = 0.0;
  double hi = 1.0;
  double mid = 0.5;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double kl = alignment_kl(p, mid);
    if (std::fabs(kl - target_kl) <= 1e-15 || !(lo < mid && mid < hi)) break;
    (kl > target_kl ? lo : hi) = mid;
  }
  return mid;
}

// ---------------------------------------------------------------------------
// Corpus generation

namespace {

enum Stream : std::uint64_t { kRankStream = 0, kScoreStream = 1, kTokenStream = 2 };

std::vector<double> masses_of(const SynthSpec& spec) {
  if (const auto* g = std::get_if<GeometricFamily>(&spec.p_family)) {
    if (!(g->r > 0.0 && g->r <= 1.0)) throw Error(ErrorKind::Domain, "geometric r must lie in (0, 1]");
    return truncated_geometric(g->r, g->max_rank);
  }
  const auto& p = std::get<std::vector<double>>(spec.p_family);
  if (p.empty()) throw Error(ErrorKind::Domain, "explicit p vector is empty");
  CompensatedSum total;
  for (double x : p) {
    if (!(x >= 0.0) || !std::isfinite(x)) throw Error(ErrorKind::Domain, "explicit p has a negative or non-finite mass");
    total.add(x);
  }
  if (std::fabs(total.value() - 1.0) > 1e-9) {
    throw Error(ErrorKind::Domain, "explicit p sums to " + format_double(total.value()) + ", not 1");
  }
  return p;
}

std::vector<std::uint64_t> sample_ranks(const std::vector<double>& p, std::uint64_t n, std::uint64_t seed,
                                        std::uint64_t stream) {
  std::vector<double> cdf(p.size());
  CompensatedSum acc;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc.add(p[i]);
    cdf[i] = acc.value();
  }
  const double total = cdf.back();
  // Ranks with zero mass must never be drawn; keep the search off them.
  std::size_t last = p.size() - 1;
  while (last > 0 && p[last] <= 0.0) --last;

  CounterRng rng(seed, stream);
  std::vector<std::uint64_t> ranks(n);
  for (auto& r : ranks) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cdf.begin(), cdf.begin() + static_cast<std::ptrdiff_t>(last), u);
    r = static_cast<std::uint64_t>(it - cdf.begin());
  }
  return ranks;
}

std::map<std::uint64_t, std::uint64_t> count_ranks(const std::vector<std::uint64_t>& ranks) {
  std::map<std::uint64_t, std::uint64_t> counts;
  for (auto r : ranks) ++counts[r];
  return counts;
}

// Empirical masses in ascending rank order over the observed support.
std::vector<double> empirical_p(const std::map<std::uint64_t, std::uint64_t>& counts, std::uint64_t n) {
  std::vector<double> p;
  for (const auto& [rank, c] : counts) p.push_back(static_cast<double>(c) / static_cast<double>(n));
  return p;
}

struct Realization {
  double alignment;
  double conf_target;
  double score_sigma;
  std::uint64_t top_k;
  std::uint64_t vocab_size;
  std::uint64_t seed;
  std::uint64_t stream_base;
};

std::vector<double> synthetic_profile(double lns, std::uint64_t rbe, std::uint64_t k) {
  // Higher-ranked entries sit above the ground truth; lower-ranked ones drop
  // off after it.
  std::vector<double> out(k);
  for (std::uint64_t j = 0; j < k; ++j) {
    if (j < rbe) {
      out[j] = std::min(0.0, lns + 0.3 * static_cast<double>(rbe - j));
    } else if (j == rbe) {
      out[j] = lns;
    } else {
      out[j] = lns - 1.0 * static_cast<double>(j - rbe);
    }
  }
  return out;
}

SynthCorpus realize(const std::vector<std::uint64_t>& ranks, const Realization& cfg, CorpusManifest manifest) {
  const std::uint64_t n = ranks.size();
  const auto counts = count_ranks(ranks);
  const auto p = empirical_p(counts, n);
  const double uniform = 1.0 / static_cast<double>(counts.size());

  std::map<std::uint64_t, double> ln_q;
  double q_max = 0.0;
  std::vector<std::uint64_t> support;
  {
    std::size_t i = 0;
    for (const auto& [rank, c] : counts) {
      const double q = cfg.alignment * p[i++] + (1.0 - cfg.alignment) * uniform;
      ln_q[rank] = std::log(q);
      q_max = std::max(q_max, q);
      support.push_back(rank);
    }
  }

  CompensatedSum harmonic;
  for (auto e : support) harmonic.add(1.0 / (static_cast<double>(e) + 1.0));
  const double feasible = std::min(std::log(harmonic.value()), -std::log(q_max));
  if (cfg.conf_target > feasible + 1e-12) {
    throw Error(ErrorKind::Domain, "infeasible conf_target " + format_double(cfg.conf_target) +
                                       "; feasible maximum for this support is " + format_double(feasible));
  }

  // Indices of each group's records, in record order.
  std::map<std::uint64_t, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < ranks.size(); ++i) members[ranks[i]].push_back(i);

  std::vector<double> lns(n);
  CounterRng noise(cfg.seed, cfg.stream_base + kScoreStream);
  for (const auto& [rank, idx] : members) {
    const double target = std::min(0.0, cfg.conf_target + ln_q.at(rank));
    std::vector<double> z(idx.size());
    CompensatedSum zsum;
    for (auto& v : z) {
      v = cfg.score_sigma * noise.normal();
      zsum.add(v);
    }
    const double zmean = zsum.value() / static_cast<double>(z.size());
    double zmax = 0.0;
    for (auto& v : z) {
      v -= zmean;
      zmax = std::max(zmax, v);
    }
    // Keep every score <= 1 without moving the group mean.
    if (zmax > -target) {
      const double shrink = zmax > 0.0 ? -target / zmax : 0.0;
      for (auto& v : z) v *= shrink;
    }
    CompensatedSum realized;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      lns[idx[j]] = target + z[j];
      realized.add(lns[idx[j]]);
    }
    // Final affine correction for rounding in the centring step.
    const double drift = realized.value() / static_cast<double>(idx.size()) - target;
    for (std::size_t j : idx) lns[j] = std::min(0.0, lns[j] - drift);
  }

  CounterRng tokens(cfg.seed, cfg.stream_base + kTokenStream);
  SynthCorpus corpus;
  corpus.records.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PredictionRecord r;
    r.doc_id = i / 1024;
    r.pos = i % 1024;
    r.gt_token = tokens.next_u64() % cfg.vocab_size;
    r.ln_score = lns[i];
    r.rbe = ranks[i];
    if (cfg.top_k > 0) r.topk_ln_scores = synthetic_profile(r.ln_score, r.rbe, cfg.top_k);
    corpus.records.push_back(std::move(r));
  }
  manifest.num_records = n;
  manifest.vocab_size = cfg.vocab_size;
  manifest.schema_version = kSchemaVersion;
  if (cfg.top_k > 0) manifest.top_k = cfg.top_k;
  corpus.manifest = std::move(manifest);
  return corpus;
}

void check_vocab(std::uint64_t vocab_size, std::uint64_t max_rank) {
  if (vocab_size < 2 || max_rank >= vocab_size) {
    throw Error(ErrorKind::Domain, "vocab_size " + std::to_string(vocab_size) + " cannot hold rank " +
                                       std::to_string(max_rank));
  }
}

}  // namespace

SynthCorpus gen_corpus(const SynthSpec& spec) {
  if (spec.n_records == 0) throw Error(ErrorKind::Domain, "n_records must be positive");
  if (!(spec.alignment >= 0.0 && spec.alignment <= 1.0)) throw Error(ErrorKind::Domain, "alignment must lie in [0, 1]");
  if (!(spec.score_sigma >= 0.0)) throw Error(ErrorKind::Domain, "score_sigma must be non-negative");
  const auto p = masses_of(spec);
  check_vocab(spec.vocab_size, p.size() - 1);

  const auto ranks = sample_ranks(p, spec.n_records, spec.seed, kRankStream);

  CorpusManifest m;
  m.model_name = spec.model_name;
  m.family = spec.family;
  m.dataset = spec.dataset;
  m.nonemb_params = spec.nonemb_params;
  m.checkpoint_step = spec.checkpoint_step;
  m.seed = static_cast<std::int64_t>(spec.seed);
  return realize(ranks,
                 {spec.alignment, spec.conf_target, spec.score_sigma, spec.top_k, spec.vocab_size, spec.seed, 0},
                 std::move(m));
}

std::vector<SynthCorpus> gen_scaling_series(const SeriesSpec& spec) {
  if (spec.sizes.empty()) throw Error(ErrorKind::Domain, "series needs at least one size");
  if (!(spec.alpha > 0.0) || !(spec.coefficient > 0.0)) {
    throw Error(ErrorKind::Domain, "alpha and coefficient must be positive");
  }
  if (spec.n_records.size() != 1 && spec.n_records.size() != spec.sizes.size()) {
    throw Error(ErrorKind::Domain, "n_records must have one entry or one per size");
  }
  check_vocab(spec.vocab_size, spec.max_rank);

  std::vector<SynthCorpus> out;
  for (std::size_t i = 0; i < spec.sizes.size(); ++i) {
    const std::uint64_t size = spec.sizes[i];
    const std::uint64_t n = spec.n_records.size() == 1 ? spec.n_records[0] : spec.n_records[i];
    if (size == 0 || n == 0) throw Error(ErrorKind::Domain, "sizes and n_records must be positive");

    const double target_ee = spec.coefficient * std::pow(static_cast<double>(size), -spec.alpha);
    const double r = solve_p_for_entropy(target_ee, spec.max_rank);
    const auto p = truncated_geometric(r, spec.max_rank);

    // Each size draws from its own block of streams.
    const std::uint64_t stream_base = 4 * (i + 1);
    const auto ranks = sample_ranks(p, n, spec.seed, stream_base + kRankStream);
    const auto counts = count_ranks(ranks);
    const double alignment = spec.sa_target > 0.0 ? solve_alignment_for_kl(empirical_p(counts, n), spec.sa_target) : 1.0;

    CorpusManifest m;
    m.model_name = "synth-" + std::to_string(size);
    m.family = spec.family;
    m.dataset = spec.dataset;
    m.nonemb_params = size;
    m.seed = static_cast<std::int64_t>(spec.seed);
    m.extra["planted_ee"] = target_ee;
    out.push_back(realize(ranks,
                          {alignment, spec.conf_target, spec.score_sigma, 0, spec.vocab_size, spec.seed, stream_base},
                          std::move(m)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON specs

namespace {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

bool is_series_spec(const nlohmann::json& j) { return j.is_object() && j.contains("sizes"); }

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  try {
    SynthSpec s;
    read_opt(j, "n_records", s.n_records);
    if (auto it = j.find("p"); it != j.end()) {
      s.p_family = it->get<std::vector<double>>();
    } else if (auto g = j.find("geometric"); g != j.end()) {
      GeometricFamily fam;
      read_opt(*g, "r", fam.r);
      read_opt(*g, "max_rank", fam.max_rank);
      s.p_family = fam;
    }
    read_opt(j, "alignment", s.alignment);
    read_opt(j, "conf_target", s.conf_target);
    read_opt(j, "seed", s.seed);
    read_opt(j, "score_sigma", s.score_sigma);
    read_opt(j, "top_k", s.top_k);
    read_opt(j, "vocab_size", s.vocab_size);
    read_opt(j, "model_name", s.model_name);
    read_opt(j, "family", s.family);
    read_opt(j, "dataset", s.dataset);
    read_opt(j, "nonemb_params", s.nonemb_params);
    if (auto it = j.find("checkpoint_step"); it != j.end() && !it->is_null()) s.checkpoint_step = it->get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed synth spec: ") + e.what());
  }
}

SeriesSpec series_spec_from_json(const nlohmann::json& j) {
  try {
    SeriesSpec s;
    read_opt(j, "alpha", s.alpha);
    read_opt(j, "coefficient", s.coefficient);
    read_opt(j, "a", s.coefficient);
    s.sizes.clear();
    for (const auto& v : j.at("sizes")) s.sizes.push_back(static_cast<std::uint64_t>(v.get<double>()));
    if (auto it = j.find("n_records"); it != j.end()) {
      s.n_records = it->is_array() ? it->get<std::vector<std::uint64_t>>()
                                   : std::vector<std::uint64_t>{it->get<std::uint64_t>()};
    }
    read_opt(j, "seed", s.seed);
    read_opt(j, "max_rank", s.max_rank);
    read_opt(j, "sa_target", s.sa_target);
    read_opt(j, "conf_target", s.conf_target);
    read_opt(j, "score_sigma", s.score_sigma);
    read_opt(j, "vocab_size", s.vocab_size);
    read_opt(j, "family", s.family);
    read_opt(j, "dataset", s.dataset);
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("malformed series spec: ") + e.what());
  }
}

}  // namespace cedecomp

#pragma once

#include <cstdint>
#include <string>
#include <optional>
#include <variant>
#include <vector>

#include <json.hpp>

#include "cedecomp/records.hpp"

namespace cedecomp {

// SplitMix64 used as a counter-based generator: output i of a stream is
// mix64(key + (i + 1) * 0x9E3779B97F4A7C15), with key = mix64(seed ^ mix64(stream
// + 0x632BE59BD9B4E019)). Any implementation of that formula reproduces the
// streams. Uniforms take the top 53 bits; normals come from Box-Muller.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();
  double uniform();  // in (0, 1)
  double normal();   // standard normal

  static std::uint64_t mix64(std::uint64_t z);

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// p_e proportional to r^e on ranks 0..max_rank. r = 1 is the uniform case.
struct GeometricFamily {
  double r = 0.5;
  std::uint64_t max_rank = 15;
};

std::vector<double> truncated_geometric(double r, std::uint64_t max_rank);
double truncated_geometric_entropy(double r, std::uint64_t max_rank);

// Bisection for the r whose truncated geometric has entropy target_h (nats),
// to within 1e-9. Throws Error(Domain) outside [0, ln(max_rank + 1)].
double solve_p_for_entropy(double target_h, std::uint64_t max_rank);

struct SynthSpec {
  std::uint64_t n_records = 50000;
  // Explicit masses indexed by rank, or a truncated geometric.
  std::variant<std::vector<double>, GeometricFamily> p_family = GeometricFamily{};
  // 1 puts q exactly on the empirical p; 0 makes q uniform over the observed ranks.
  double alignment = 1.0;
  double conf_target = 0.0;  // ln C
  std::uint64_t seed = 0;
  double score_sigma = 0.1;  // log-space spread of scores within a group
  std::uint64_t top_k = 0;   // > 0 attaches synthetic top-K profiles
  std::uint64_t vocab_size = 50304;
  std::string model_name = "synth";
  std::string family = "synth";
  std::string dataset = "synthetic";
  std::uint64_t nonemb_params = 1;
  std::optional<std::uint64_t> checkpoint_step;
};

struct SynthCorpus {
  std::vector<PredictionRecord> records;
  CorpusManifest manifest;
};

// Ranks are drawn multinomially from p_family. Per-group scores are
// log-normal around the target ln Q_e = conf_target + ln q_e, then shifted
// so each group's geometric mean is exactly Q_e. Throws Error(Domain) when
// conf_target is above the feasible maximum for the sampled support.
SynthCorpus gen_corpus(const SynthSpec& spec);

// Planted Error-Entropy power law: EE(N) = coefficient * N^-alpha. SA and
// Conf are held at fixed targets across sizes.
struct SeriesSpec {
  double alpha = 0.41;
  double coefficient = 3.2;
  std::vector<std::uint64_t> sizes;
  // One entry per size, or a single entry applied to every size.
  std::vector<std::uint64_t> n_records{50000};
  std::uint64_t seed = 0;
  std::uint64_t max_rank = 255;
  double sa_target = 0.05;
  double conf_target = -0.3;
  double score_sigma = 0.1;
  std::uint64_t vocab_size = 50304;
  std::string family = "synth";
  std::string dataset = "synthetic";
};

// One corpus per size with nonemb_params = N and model_name "synth-<N>".
std::vector<SynthCorpus> gen_scaling_series(const SeriesSpec& spec);

// KL(p || alignment * p + (1 - alignment) * uniform) over p's support, and its
// inverse in the alignment.
double alignment_kl(const std::vector<double>& p, double alignment);
double solve_alignment_for_kl(const std::vector<double>& p, double target_kl);

SynthSpec synth_spec_from_json(const nlohmann::json& j);
SeriesSpec series_spec_from_json(const nlohmann::json& j);
bool is_series_spec(const nlohmann::json& j);

}  // namespace cedecomp

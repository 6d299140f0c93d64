#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cedecomp {

inline constexpr int kSchemaVersion = 1;

// One scored next-token position. ln_score is the natural log of the model's
// probability for the ground-truth token; rbe counts vocabulary entries scored
// strictly higher than it.
struct PredictionRecord {
  std::uint64_t doc_id = 0;
  std::uint64_t pos = 0;
  std::uint64_t gt_token = 0;
  double ln_score = 0.0;
  std::uint64_t rbe = 0;
  // Log-scores of the top-K vocabulary entries in rank order, rank 1 first.
  std::optional<std::vector<double>> topk_ln_scores;
};

// Field-for-field equality that compares floats by bit pattern, so -0.0 and
// 0.0 differ and NaN equals an identical NaN.
bool bit_identical(const PredictionRecord& a, const PredictionRecord& b);

struct CorpusManifest {
  std::string model_name;
  std::string family;
  std::uint64_t nonemb_params = 1;
  std::optional<std::uint64_t> checkpoint_step;
  std::string dataset;
  std::uint64_t vocab_size = 2;
  std::uint64_t num_records = 0;
  int schema_version = kSchemaVersion;
  std::optional<std::int64_t> seed;
  // Profile depth the extractor was asked for, when profiles were recorded.
  std::optional<std::uint64_t> top_k;
  // Keys this version does not interpret, preserved for echoing.
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json manifest_to_json(const CorpusManifest& m);
// Throws ParseError (line 0) naming the offending field.
CorpusManifest manifest_from_json(const nlohmann::json& j);

CorpusManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const CorpusManifest& m, const std::filesystem::path& path);

// A record file and its sidecar: <stem>.jsonl + <stem>.manifest.json.
struct CorpusFiles {
  std::filesystem::path records;
  std::filesystem::path manifest;
  std::string name;  // <stem>
};

// Accepts either member of the pair and derives the other.
CorpusFiles resolve_corpus(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Validation

enum class Severity { Error, Warning };

struct ValidationIssue {
  Severity severity;
  std::string field;
  std::string message;
};

struct ValidationReport {
  std::vector<ValidationIssue> issues;

  bool ok() const { return errors() == 0; }
  std::size_t errors() const;
  std::size_t warnings() const;
};

// Hard invariants become errors. The rank bound ln_score <= -ln(rbe+1) only
// holds for scores taken from a proper probability simplex, so a breach is
// reported as a warning.
ValidationReport validate_record(const PredictionRecord& record, const CorpusManifest& manifest);

// ---------------------------------------------------------------------------
// Wire format: UTF-8 JSON Lines, one object per record, keys in the fixed
// order doc, pos, gt, lns, rbe[, topk_lns]. Floats use the shortest decimal
// that round-trips; non-finite values use the -Infinity/Infinity/NaN tokens.

std::string encode_record(const PredictionRecord& record);
// line_no is only used to locate errors.
PredictionRecord decode_record(std::string_view line, std::uint64_t line_no = 0);

// Streams records from a JSON Lines source. The manifest's schema version is
// checked on construction and its record count at end of stream.
class RecordReader {
 public:
  RecordReader(std::istream& in, const CorpusManifest& manifest);

  std::optional<PredictionRecord> next();

  // 1-based line of the record last returned by next().
  std::uint64_t line() const { return line_; }
  std::uint64_t count() const { return count_; }

 private:
  std::istream& in_;
  std::uint64_t expected_;
  std::uint64_t line_ = 0;
  std::uint64_t count_ = 0;
  bool done_ = false;
};

std::vector<PredictionRecord> read_records(std::istream& in, const CorpusManifest& manifest);

// Returns the number of bytes written.
std::uint64_t write_records(std::span<const PredictionRecord> records, std::ostream& out);

// Writes <dir>/<name>.jsonl and <dir>/<name>.manifest.json. num_records in the
// manifest is overwritten with records.size().
CorpusFiles write_corpus(const std::filesystem::path& dir, const std::string& name,
                         std::span<const PredictionRecord> records, CorpusManifest manifest);

}  // namespace cedecomp

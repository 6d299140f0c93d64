#include "cedecomp/records.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cedecomp/error.hpp"
#include "cedecomp/numeric.hpp"

namespace cedecomp {

namespace {

using nlohmann::json;

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

// nlohmann/json rejects the bare -Infinity/Infinity/NaN tokens that Python's
// json module emits. Quote them (outside string literals) so the parser sees
// strings, and map those strings back to doubles when reading float fields.
std::string quote_nonfinite_tokens(std::string_view line) {
  static constexpr std::string_view kTokens[] = {"-Infinity", "Infinity", "NaN"};
  std::string out;
  out.reserve(line.size() + 8);
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (in_string) {
      out += c;
      if (c == '\\' && i + 1 < line.size()) {
        out += line[++i];
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out += c;
      continue;
    }
    bool matched = false;
    for (auto tok : kTokens) {
      if (line.substr(i, tok.size()) == tok) {
        out += '"';
        out += tok;
        out += '"';
        i += tok.size() - 1;
        matched = true;
        break;
      }
    }
    if (!matched) out += c;
  }
  return out;
}

std::optional<double> nonfinite_from_string(const std::string& s) {
  if (s == "-Infinity" || s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "Infinity" || s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "NaN" || s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::nullopt;
}

double as_double(const json& v, std::uint64_t line, const char* field) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    if (auto d = nonfinite_from_string(v.get<std::string>())) return *d;
  }
  throw ParseError(line, field, "expected a number");
}

std::uint64_t as_index(const json& v, std::uint64_t line, const char* field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw ParseError(line, field, "expected a non-negative integer");
}

const json& require(const json& obj, const char* field, std::uint64_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) throw ParseError(line, field, "missing");
  return *it;
}

std::string manifest_string(const json& j, const char* field) {
  const auto& v = require(j, field, 0);
  if (!v.is_string()) throw ParseError(0, field, "expected a string");
  return v.get<std::string>();
}

std::string describe_score(double ln_score) {
  std::ostringstream os;
  os << std::exp(ln_score);
  return os.str();
}

}  // namespace

bool bit_identical(const PredictionRecord& a, const PredictionRecord& b) {
  if (a.doc_id != b.doc_id || a.pos != b.pos || a.gt_token != b.gt_token || a.rbe != b.rbe) return false;
  if (!same_bits(a.ln_score, b.ln_score)) return false;
  if (a.topk_ln_scores.has_value() != b.topk_ln_scores.has_value()) return false;
  if (!a.topk_ln_scores) return true;
  const auto& x = *a.topk_ln_scores;
  const auto& y = *b.topk_ln_scores;
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!same_bits(x[i], y[i])) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Manifest

json manifest_to_json(const CorpusManifest& m) {
  json j = m.extra.is_object() ? m.extra : json::object();
  j["model_name"] = m.model_name;
  j["family"] = m.family;
  j["nonemb_params"] = m.nonemb_params;
  if (m.checkpoint_step) j["checkpoint_step"] = *m.checkpoint_step;
  j["dataset"] = m.dataset;
  j["vocab_size"] = m.vocab_size;
  j["num_records"] = m.num_records;
  j["schema_version"] = m.schema_version;
  if (m.seed) j["seed"] = *m.seed;
  if (m.top_k) j["top_k"] = *m.top_k;
  return j;
}

CorpusManifest manifest_from_json(const json& j) {
  if (!j.is_object()) throw ParseError(0, "", "manifest must be a JSON object");

  CorpusManifest m;
  const auto& version = require(j, "schema_version", 0);
  if (!version.is_number_integer()) throw ParseError(0, "schema_version", "expected an integer");
  m.schema_version = version.get<int>();
  if (m.schema_version != kSchemaVersion) {
    throw ParseError(0, "schema_version",
                     "unsupported schema version " + std::to_string(m.schema_version) + " (expected " +
                         std::to_string(kSchemaVersion) + ")");
  }

  m.model_name = manifest_string(j, "model_name");
  m.family = manifest_string(j, "family");
  m.dataset = manifest_string(j, "dataset");
  m.nonemb_params = as_index(require(j, "nonemb_params", 0), 0, "nonemb_params");
  m.vocab_size = as_index(require(j, "vocab_size", 0), 0, "vocab_size");
  m.num_records = as_index(require(j, "num_records", 0), 0, "num_records");
  if (m.nonemb_params == 0) throw ParseError(0, "nonemb_params", "must be positive");
  if (m.vocab_size < 2) throw ParseError(0, "vocab_size", "must be at least 2");

  if (auto it = j.find("checkpoint_step"); it != j.end() && !it->is_null()) {
    m.checkpoint_step = as_index(*it, 0, "checkpoint_step");
  }
  if (auto it = j.find("seed"); it != j.end() && !it->is_null()) {
    if (!it->is_number_integer()) throw ParseError(0, "seed", "expected an integer");
    m.seed = it->get<std::int64_t>();
  }
  if (auto it = j.find("top_k"); it != j.end() && !it->is_null()) {
    m.top_k = as_index(*it, 0, "top_k");
  }

  static const char* kKnown[] = {"model_name", "family",      "nonemb_params", "checkpoint_step", "dataset",
                                 "vocab_size", "num_records", "schema_version", "seed",           "top_k"};
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (const char* k : kKnown) known = known || key == k;
    if (!known) m.extra[key] = value;
  }
  return m;
}

CorpusManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open manifest " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
  try {
    return manifest_from_json(j);
  } catch (const ParseError& e) {
    throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
  }
}

void write_manifest(const CorpusManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Parse, "cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::Parse, "write failed: " + path.string());
}

CorpusFiles resolve_corpus(const std::filesystem::path& path) {
  static constexpr std::string_view kManifestSuffix = ".manifest.json";
  const std::string file = path.filename().string();
  CorpusFiles files;
  if (file.size() > kManifestSuffix.size() && file.ends_with(kManifestSuffix)) {
    files.name = file.substr(0, file.size() - kManifestSuffix.size());
    files.manifest = path;
    files.records = path.parent_path() / (files.name + ".jsonl");
  } else {
    files.name = path.extension() == ".jsonl" ? path.stem().string() : file;
    files.records = path;
    files.manifest = path.parent_path() / (files.name + std::string(kManifestSuffix));
  }
  return files;
}

// ---------------------------------------------------------------------------
// Validation

std::size_t ValidationReport::errors() const {
  std::size_t n = 0;
  for (const auto& i : issues) n += i.severity == Severity::Error;
  return n;
}

std::size_t ValidationReport::warnings() const {
  std::size_t n = 0;
  for (const auto& i : issues) n += i.severity == Severity::Warning;
  return n;
}

ValidationReport validate_record(const PredictionRecord& record, const CorpusManifest& manifest) {
  ValidationReport report;
  auto error = [&](const char* field, std::string msg) {
    report.issues.push_back({Severity::Error, field, std::move(msg)});
  };

  const double lns = record.ln_score;
  if (std::isnan(lns)) {
    error("lns", "ln_score is NaN");
  } else if (lns > 0.0) {
    error("lns", "ln_score > 0");
  } else if (std::isinf(lns)) {
    error("lns", "zero probability score (ln_score = -inf)");
  }

  if (record.rbe >= manifest.vocab_size) {
    error("rbe", "rbe " + std::to_string(record.rbe) + " >= vocab_size " + std::to_string(manifest.vocab_size));
  }

  if (record.topk_ln_scores) {
    const auto& topk = *record.topk_ln_scores;
    bool finite = true;
    for (double v : topk) {
      if (std::isnan(v) || v > 0.0) finite = false;
    }
    if (!finite) error("topk_lns", "entries must be log-probabilities (<= 0, not NaN)");
    for (std::size_t i = 1; i < topk.size(); ++i) {
      if (topk[i] > topk[i - 1]) {
        error("topk_lns", "not non-increasing at position " + std::to_string(i + 1));
        break;
      }
    }
    const std::uint64_t k = manifest.top_k.value_or(topk.size());
    const std::uint64_t required = std::min<std::uint64_t>(k, record.rbe + 1);
    if (topk.size() < required) {
      error("topk_lns", "length " + std::to_string(topk.size()) + " < required " + std::to_string(required));
    }
    if (record.rbe < topk.size() && topk[record.rbe] != lns) {
      error("topk_lns", "entry at rank " + std::to_string(record.rbe + 1) + " differs from lns");
    }
  }

  // Rank bound: at most rbe+1 tokens can share the top of the simplex with the
  // ground truth, so s <= 1/(rbe+1).
  if (std::isfinite(lns) && lns <= 0.0) {
    const double bound = -std::log1p(static_cast<double>(record.rbe));
    if (lns > bound + 1e-12 * std::max(1.0, std::fabs(bound))) {
      report.issues.push_back({Severity::Warning, "lns",
                               "score " + describe_score(lns) + " > 1/" + std::to_string(record.rbe + 1) + " bound"});
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Wire format

std::string encode_record(const PredictionRecord& r) {
  std::string out;
  out.reserve(96);
  out += "{\"doc\":";
  out += std::to_string(r.doc_id);
  out += ",\"pos\":";
  out += std::to_string(r.pos);
  out += ",\"gt\":";
  out += std::to_string(r.gt_token);
  out += ",\"lns\":";
  out += format_double(r.ln_score);
  out += ",\"rbe\":";
  out += std::to_string(r.rbe);
  if (r.topk_ln_scores) {
    out += ",\"topk_lns\":[";
    bool first = true;
    for (double v : *r.topk_ln_scores) {
      if (!first) out += ',';
      out += format_double(v);
      first = false;
    }
    out += ']';
  }
  out += '}';
  return out;
}

PredictionRecord decode_record(std::string_view line, std::uint64_t line_no) {
  json j;
  try {
    j = json::parse(quote_nonfinite_tokens(line));
  } catch (const json::parse_error& e) {
    throw ParseError(line_no, "", std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ParseError(line_no, "", "expected a JSON object");

  for (const auto& [key, value] : j.items()) {
    if (key != "doc" && key != "pos" && key != "gt" && key != "lns" && key != "rbe" && key != "topk_lns") {
      throw ParseError(line_no, key, "unknown key");
    }
  }

  PredictionRecord r;
  r.doc_id = as_index(require(j, "doc", line_no), line_no, "doc");
  r.pos = as_index(require(j, "pos", line_no), line_no, "pos");
  r.gt_token = as_index(require(j, "gt", line_no), line_no, "gt");
  r.ln_score = as_double(require(j, "lns", line_no), line_no, "lns");
  r.rbe = as_index(require(j, "rbe", line_no), line_no, "rbe");
  if (auto it = j.find("topk_lns"); it != j.end()) {
    if (!it->is_array()) throw ParseError(line_no, "topk_lns", "expected an array");
    std::vector<double> topk;
    topk.reserve(it->size());
    for (const auto& v : *it) topk.push_back(as_double(v, line_no, "topk_lns"));
    r.topk_ln_scores = std::move(topk);
  }
  return r;
}

RecordReader::RecordReader(std::istream& in, const CorpusManifest& manifest)
    : in_(in), expected_(manifest.num_records) {
  if (manifest.schema_version != kSchemaVersion) {
    throw ParseError(0, "schema_version", "unsupported schema version " + std::to_string(manifest.schema_version));
  }
}

std::optional<PredictionRecord> RecordReader::next() {
  if (done_) return std::nullopt;
  std::string buf;
  std::uint64_t line_no = line_;
  while (std::getline(in_, buf)) {
    ++line_no;
    if (!buf.empty() && buf.back() == '\r') buf.pop_back();
    if (line_no == 1 && buf.starts_with("\xEF\xBB\xBF")) buf.erase(0, 3);
    if (buf.find_first_not_of(" \t") == std::string::npos) continue;

    line_ = line_no;
    if (count_ == expected_) {
      throw ParseError(line_, "", "record count exceeds manifest num_records = " + std::to_string(expected_));
    }
    auto record = decode_record(buf, line_);
    ++count_;
    return record;
  }
  if (in_.bad()) throw Error(ErrorKind::Parse, "read error after line " + std::to_string(line_no));
  done_ = true;
  if (count_ != expected_) {
    throw ParseError(0, "num_records",
                     "record count mismatch: file has " + std::to_string(count_) + ", manifest says " +
                         std::to_string(expected_));
  }
  return std::nullopt;
}

std::vector<PredictionRecord> read_records(std::istream& in, const CorpusManifest& manifest) {
  RecordReader reader(in, manifest);
  std::vector<PredictionRecord> out;
  out.reserve(manifest.num_records);
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

std::uint64_t write_records(std::span<const PredictionRecord> records, std::ostream& out) {
  std::uint64_t bytes = 0;
  for (const auto& r : records) {
    std::string line = encode_record(r);
    line += '\n';
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    bytes += line.size();
  }
  if (!out) throw Error(ErrorKind::Parse, "write failed");
  return bytes;
}

CorpusFiles write_corpus(const std::filesystem::path& dir, const std::string& name,
                         std::span<const PredictionRecord> records, CorpusManifest manifest) {
  std::filesystem::create_directories(dir);
  CorpusFiles files = resolve_corpus(dir / (name + ".jsonl"));
  {
    std::ofstream out(files.records, std::ios::binary);
    if (!out) throw Error(ErrorKind::Parse, "cannot write " + files.records.string());
    write_records(records, out);
  }
  manifest.num_records = records.size();
  write_manifest(manifest, files.manifest);
  return files;
}

}  // namespace cedecomp

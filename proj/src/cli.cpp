#include "cedecomp/cli.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cedecomp/decomposition.hpp"
#include "cedecomp/error.hpp"
#include "cedecomp/profiles.hpp"
#include "cedecomp/records.hpp"
#include "cedecomp/scaling.hpp"
#include "cedecomp/synth.hpp"

namespace cedecomp {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct RunConfig {
  std::vector<std::string> inputs;
  unsigned jobs = 1;
  std::string log_base = "e";
  std::string output_dir;
  std::string config_path;

  std::optional<double> clamp_lns;
  double epsilon = kDefaultEpsilon;
  std::string group_by = "family";
  bool shares = false;
  bool dynamics = false;
  bool overlay = false;
  std::optional<std::uint64_t> score_by_rank;
  std::uint64_t top_k = 10;
  std::string bins = "raw";
  std::string spec_path;
  std::string name = "synth";
  std::optional<std::uint64_t> seed;
};

// A failure tied to one input, carrying the exit code it maps to.
struct Failure {
  int code;
  std::string message;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Parse: return kExitParse;
    case ErrorKind::Identity: return kExitIdentity;
    case ErrorKind::Validation:
    case ErrorKind::Domain: return kExitValidation;
  }
  return kExitParse;
}

// ---------------------------------------------------------------------------
// Config file: JSON object mirroring the long flag names (dashes or
// underscores). Values only fill options the command line left unset.

void apply_config_file(CLI::App& app, CLI::App& sub, RunConfig& cfg) {
  if (cfg.config_path.empty()) return;
  std::ifstream in(cfg.config_path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open config " + cfg.config_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, cfg.config_path + ": " + e.what());
  }
  if (!j.is_object()) throw Error(ErrorKind::Parse, cfg.config_path + ": config must be a JSON object");

  auto unset = [&](const std::string& flag) {
    for (CLI::App* a : {&sub, &app}) {
      try {
        if (a->get_option(flag)->count() > 0) return false;
      } catch (const CLI::OptionNotFound&) {
      }
    }
    return true;
  };

  try {
    for (const auto& [raw_key, value] : j.items()) {
      std::string key = raw_key;
      std::replace(key.begin(), key.end(), '_', '-');
      if (key == "inputs") {
        if (unset("inputs")) cfg.inputs = value.get<std::vector<std::string>>();
      } else if (key == "jobs") {
        if (unset("--jobs")) cfg.jobs = value.get<unsigned>();
      } else if (key == "log-base") {
        if (unset("--log-base")) cfg.log_base = value.is_string() ? value.get<std::string>() : value.dump();
      } else if (key == "output-dir") {
        if (unset("--output-dir")) cfg.output_dir = value.get<std::string>();
      } else if (key == "clamp-lns") {
        if (unset("--clamp-lns")) cfg.clamp_lns = value.get<double>();
      } else if (key == "epsilon") {
        if (unset("--epsilon")) cfg.epsilon = value.get<double>();
      } else if (key == "group-by") {
        if (unset("--group-by")) cfg.group_by = value.get<std::string>();
      } else if (key == "shares") {
        if (unset("--shares")) cfg.shares = value.get<bool>();
      } else if (key == "dynamics") {
        if (unset("--dynamics")) cfg.dynamics = value.get<bool>();
      } else if (key == "overlay") {
        if (unset("--overlay")) cfg.overlay = value.get<bool>();
      } else if (key == "score-by-rank") {
        if (unset("--score-by-rank")) cfg.score_by_rank = value.get<std::uint64_t>();
      } else if (key == "top-k") {
        if (unset("--top-k")) cfg.top_k = value.get<std::uint64_t>();
      } else if (key == "bins") {
        if (unset("--bins")) cfg.bins = value.get<std::string>();
      } else if (key == "spec") {
        if (unset("--spec")) cfg.spec_path = value.get<std::string>();
      } else if (key == "name") {
        if (unset("--name")) cfg.name = value.get<std::string>();
      } else if (key == "seed") {
        if (unset("--seed")) cfg.seed = value.get<std::uint64_t>();
      } else {
        throw Error(ErrorKind::Parse, cfg.config_path + ": unknown key '" + raw_key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, cfg.config_path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Inputs

bool has_glob(const std::string& s) { return s.find_first_of("*?[") != std::string::npos; }

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path path(in);
    std::vector<fs::path> found;
    if (has_glob(path.filename().string())) {
      const fs::path dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
      const std::string pattern = path.filename().string();
      if (fs::is_directory(dir)) {
        for (const auto& entry : fs::directory_iterator(dir)) {
          if (fnmatch(pattern.c_str(), entry.path().filename().c_str(), 0) == 0) {
            found.push_back(path.parent_path().empty() ? entry.path().filename() : entry.path());
          }
        }
      }
      if (found.empty()) throw Error(ErrorKind::Parse, "no files match " + in);
    } else if (fs::is_directory(path)) {
      for (const auto& entry : fs::directory_iterator(path)) {
        if (entry.path().extension() == ".jsonl") found.push_back(entry.path());
      }
      if (found.empty()) throw Error(ErrorKind::Parse, "no .jsonl record files in " + in);
    } else {
      out.push_back(path);
      continue;
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  return out;
}

bool is_decomposition_doc(const fs::path& p) { return p.filename().string().ends_with(".decomposition.json"); }

// Parallel map with results kept in input order.
template <typename Fn>
auto parallel_map(std::size_t n, unsigned jobs, Fn fn) -> std::vector<decltype(fn(std::size_t{}))> {
  std::vector<decltype(fn(std::size_t{}))> results(n);
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) results[i] = fn(i);
    return results;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) results[i] = fn(i);
    });
  }
  for (auto& t : pool) t.join();
  return results;
}

struct ScannedCorpus {
  CorpusFiles files;
  CorpusManifest manifest;
  RankAggregate aggregate;
  std::optional<ScoreByRankProfile> profile;
  std::optional<Failure> failure;
};

// Fail-fast pass: every input must exist and its manifest must parse before
// any record is read.
std::vector<CorpusFiles> check_corpus_inputs(const std::vector<fs::path>& paths) {
  std::vector<CorpusFiles> files;
  for (const auto& p : paths) {
    auto f = resolve_corpus(p);
    if (!fs::exists(f.records)) throw Error(ErrorKind::Parse, "missing record file " + f.records.string());
    if (!fs::exists(f.manifest)) throw Error(ErrorKind::Parse, "missing manifest " + f.manifest.string());
    read_manifest(f.manifest);
    files.push_back(std::move(f));
  }
  return files;
}

ScannedCorpus scan_corpus(const CorpusFiles& files, const RunConfig& cfg) {
  ScannedCorpus sc;
  sc.files = files;
  try {
    sc.manifest = read_manifest(files.manifest);
    std::ifstream in(files.records, std::ios::binary);
    if (!in) throw Error(ErrorKind::Parse, "cannot open " + files.records.string());

    std::optional<ScoreByRankAccumulator> sbr;
    if (cfg.score_by_rank) sbr.emplace(*cfg.score_by_rank, cfg.top_k);

    RecordReader reader(in, sc.manifest);
    while (auto rec = reader.next()) {
      if (cfg.clamp_lns && rec->ln_score < *cfg.clamp_lns) rec->ln_score = *cfg.clamp_lns;
      const auto report = validate_record(*rec, sc.manifest);
      for (const auto& issue : report.issues) {
        if (issue.severity != Severity::Error) continue;
        sc.failure = Failure{kExitValidation, files.records.string() + ":" + std::to_string(reader.line()) +
                                                  ": field '" + issue.field + "': " + issue.message};
        return sc;
      }
      sc.aggregate.add(*rec);
      if (sbr) sbr->add(*rec);
    }
    if (sc.aggregate.empty()) throw Error(ErrorKind::Domain, "empty corpus");
    if (sbr) sc.profile = sbr->finish();
  } catch (const Error& e) {
    sc.failure = Failure{exit_code_for(e.kind()), files.records.string() + ": " + e.what()};
  }
  return sc;
}

std::vector<ScannedCorpus> scan_all(const std::vector<CorpusFiles>& files, const RunConfig& cfg, std::ostream& err,
                                    int& code) {
  auto scanned = parallel_map(files.size(), cfg.jobs, [&](std::size_t i) { return scan_corpus(files[i], cfg); });
  code = kExitOk;
  for (const auto& sc : scanned) {
    if (!sc.failure) continue;
    err << "error: " << sc.failure->message << '\n';
    if (code == kExitOk) code = sc.failure->code;
  }
  return scanned;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Parse, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::Parse, "write failed: " + path.string());
}

fs::path ensure_dir(const std::string& dir) {
  const fs::path p = dir.empty() ? fs::path(".") : fs::path(dir);
  fs::create_directories(p);
  return p;
}

void write_run_metadata(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& args) {
  if (cfg.output_dir.empty()) return;
  json meta;
  meta["tool"] = "cedecomp";
  meta["version"] = kVersion;
  meta["command"] = command;
  meta["args"] = std::vector<std::string>(args.begin() + 1, args.end());
  if (cfg.clamp_lns) meta["clamp_lns"] = *cfg.clamp_lns;
  write_text(ensure_dir(cfg.output_dir) / "run.meta.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Commands

int cmd_decompose(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const LogBase base = parse_log_base(cfg.log_base);
  const auto files = check_corpus_inputs(expand_inputs(cfg.inputs));
  if (files.empty()) {
    err << "error: no inputs\n";
    return kExitParse;
  }
  int code = kExitOk;
  auto scanned = scan_all(files, cfg, err, code);
  if (code != kExitOk) return code;

  std::vector<Decomposition> results;
  for (auto& sc : scanned) {
    try {
      results.push_back(decompose(sc.aggregate));
    } catch (const Error& e) {
      err << "error: " << sc.files.records.string() << ": " << e.what() << '\n';
      return exit_code_for(e.kind());
    }
  }

  for (std::size_t i = 0; i < scanned.size(); ++i) {
    const auto doc = decomposition_to_json(results[i], scanned[i].manifest, {base, cfg.clamp_lns});
    if (cfg.output_dir.empty()) {
      out << doc.dump() << '\n';
    } else {
      write_text(ensure_dir(cfg.output_dir) / (scanned[i].files.name + ".decomposition.json"), doc.dump(2) + "\n");
    }
  }

  int result = kExitOk;
  for (std::size_t i = 0; i < scanned.size(); ++i) {
    if (!identity_holds(results[i])) {
      err << "error: identity breach in " << scanned[i].files.name << ": residual " << format_double(results[i].residual)
          << " exceeds " << format_double(kIdentityTolerance * std::max(1.0, results[i].ce)) << '\n';
      result = kExitIdentity;
    }
  }
  return result;
}

// Cells from decomposition documents or corpora (decomposed on the fly).
std::optional<std::vector<Cell>> load_cells(const RunConfig& cfg, std::ostream& err, int& code) {
  const auto paths = expand_inputs(cfg.inputs);
  std::vector<fs::path> docs;
  std::vector<fs::path> corpora;
  for (const auto& p : paths) (is_decomposition_doc(p) ? docs : corpora).push_back(p);

  std::vector<Cell> cells;
  for (const auto& p : docs) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorKind::Parse, "cannot open " + p.string());
    json j;
    try {
      j = json::parse(in);
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Parse, p.string() + ": " + e.what());
    }
    cells.push_back(decomposition_from_json(j));
  }

  const auto files = check_corpus_inputs(corpora);
  auto scanned = scan_all(files, cfg, err, code);
  if (code != kExitOk) return std::nullopt;
  for (auto& sc : scanned) {
    try {
      cells.emplace_back(sc.manifest, decompose(sc.aggregate));
    } catch (const Error& e) {
      err << "error: " << sc.files.records.string() << ": " << e.what() << '\n';
      code = exit_code_for(e.kind());
      return std::nullopt;
    }
    if (!identity_holds(cells.back().second)) {
      err << "error: identity breach in " << sc.files.name << '\n';
      code = kExitIdentity;
      return std::nullopt;
    }
  }
  return cells;
}

int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const GroupBy group_by = parse_group_by(cfg.group_by);
  int code = kExitOk;
  auto cells = load_cells(cfg, err, code);
  if (!cells) return code;

  if (cells->empty()) err << "warning: no input cells; fit table is empty\n";
  const auto report = fit_report(*cells, group_by, cfg.epsilon);
  for (const auto& n : report.notices) err << "notice: " << n << '\n';

  std::ostringstream fits;
  write_fit_csv(report, fits);
  std::ostringstream shares;
  if (cfg.shares) {
    try {
      write_shares_csv(*cells, shares);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code_for(e.kind());
    }
  }

  if (cfg.output_dir.empty()) {
    out << fits.str();
    if (cfg.shares) out << '\n' << shares.str();
  } else {
    const auto dir = ensure_dir(cfg.output_dir);
    write_text(dir / "fits.csv", fits.str());
    if (cfg.shares) write_text(dir / "shares.csv", shares.str());
  }
  return kExitOk;
}

int cmd_report(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const LogBase base = parse_log_base(cfg.log_base);
  const BinScheme scheme = parse_bin_scheme(cfg.bins);
  if (!cfg.dynamics && !cfg.overlay && !cfg.score_by_rank) {
    err << "error: report needs at least one of --dynamics, --overlay, --score-by-rank\n";
    return kExitParse;
  }
  const auto files = check_corpus_inputs(expand_inputs(cfg.inputs));
  int code = kExitOk;
  auto scanned = scan_all(files, cfg, err, code);
  if (code != kExitOk) return code;
  const auto dir = ensure_dir(cfg.output_dir);

  try {
    if (cfg.dynamics) {
      std::vector<Cell> cells;
      for (const auto& sc : scanned) cells.emplace_back(sc.manifest, decompose(sc.aggregate));
      const auto rows = dynamics_series(cells);
      std::ostringstream csv;
      write_dynamics_csv(rows, csv, base);
      write_text(dir / "dynamics.csv", csv.str());
    }
    for (const auto& sc : scanned) {
      if (cfg.overlay) {
        const auto p = rbe_distribution(sc.aggregate);
        const auto q = score_distribution(sc.aggregate);
        const auto ov = overlay(p, q);
        std::ostringstream csv;
        write_overlay_csv(ov, csv);
        write_text(dir / (sc.files.name + ".overlay.csv"), csv.str());
        if (scheme == BinScheme::Log2) {
          std::ostringstream binned;
          write_binned_overlay_csv(bin_distribution(p.p, scheme), bin_distribution(q.q, scheme), binned);
          write_text(dir / (sc.files.name + ".overlay.log2.csv"), binned.str());
        }
        out << sc.files.name << " tv=" << format_double(ov.tv_distance) << '\n';
      }
      if (cfg.score_by_rank) {
        std::ostringstream csv;
        write_profile_csv(*sc.profile, csv);
        write_text(dir / (sc.files.name + ".score_by_rank.e" + std::to_string(*cfg.score_by_rank) + ".csv"),
                   csv.str());
        if (sc.profile->skipped > 0) {
          err << "notice: " << sc.files.name << ": " << sc.profile->skipped
              << " records at the conditioning rank lack a profile and were skipped\n";
        }
      }
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  }
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.spec_path.empty()) {
    err << "error: synth needs --spec <file.json>\n";
    return kExitParse;
  }
  std::ifstream in(cfg.spec_path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open spec " + cfg.spec_path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Parse, cfg.spec_path + ": " + e.what());
  }
  const auto dir = ensure_dir(cfg.output_dir);

  if (is_series_spec(j)) {
    auto spec = series_spec_from_json(j);
    if (cfg.seed) spec.seed = *cfg.seed;
    const auto series = gen_scaling_series(spec);
    for (const auto& corpus : series) {
      const auto files = write_corpus(dir, cfg.name + "-" + std::to_string(corpus.manifest.nonemb_params),
                                      corpus.records, corpus.manifest);
      out << files.records.string() << '\n';
    }
  } else {
    auto spec = synth_spec_from_json(j);
    if (cfg.seed) spec.seed = *cfg.seed;
    const auto corpus = gen_corpus(spec);
    const auto files = write_corpus(dir, cfg.name, corpus.records, corpus.manifest);
    out << files.records.string() << '\n';
  }
  return kExitOk;
}

// Reads line by line so that one malformed record does not hide the rest.
int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto paths = expand_inputs(cfg.inputs);
  if (paths.empty()) {
    err << "error: no inputs\n";
    return kExitParse;
  }
  std::size_t errors = 0;
  std::size_t warnings = 0;
  auto report_issue = [&](const std::string& where, Severity sev, const std::string& msg) {
    (sev == Severity::Error ? errors : warnings)++;
    out << where << ": " << (sev == Severity::Error ? "error" : "warning") << ": " << msg << '\n';
  };

  for (const auto& path : paths) {
    const auto files = resolve_corpus(path);
    CorpusManifest manifest;
    try {
      manifest = read_manifest(files.manifest);
    } catch (const Error& e) {
      report_issue(files.manifest.string(), Severity::Error, e.what());
      continue;
    }
    std::ifstream in(files.records, std::ios::binary);
    if (!in) {
      report_issue(files.records.string(), Severity::Error, "cannot open record file");
      continue;
    }

    RankAggregate agg;
    bool aggregate_ok = true;
    std::uint64_t line_no = 0;
    std::uint64_t count = 0;
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      ++count;
      const std::string where = files.records.string() + ":" + std::to_string(line_no);
      PredictionRecord rec;
      try {
        rec = decode_record(line, line_no);
      } catch (const ParseError& e) {
        report_issue(where, Severity::Error, e.what());
        aggregate_ok = false;
        continue;
      }
      if (cfg.clamp_lns && rec.ln_score < *cfg.clamp_lns) rec.ln_score = *cfg.clamp_lns;
      const auto rep = validate_record(rec, manifest);
      for (const auto& issue : rep.issues) {
        report_issue(where, issue.severity, "field '" + issue.field + "': " + issue.message);
      }
      if (rep.ok()) {
        agg.add(rec);
      } else {
        aggregate_ok = false;
      }
    }
    if (count != manifest.num_records) {
      report_issue(files.records.string(), Severity::Error,
                   "record count mismatch: file has " + std::to_string(count) + ", manifest says " +
                       std::to_string(manifest.num_records));
    }
    if (aggregate_ok && !agg.empty()) {
      const auto d = decompose(agg);
      const double bound = harmonic_conf_bound(agg);
      if (d.conf > bound + 1e-12) {
        report_issue(files.records.string(), Severity::Warning,
                     "conf " + format_double(d.conf) + " exceeds harmonic bound " + format_double(bound));
      }
      if (!identity_holds(d)) {
        report_issue(files.records.string(), Severity::Error, "identity residual " + format_double(d.residual));
      }
    }
  }
  out << errors << " errors, " << warnings << " warnings\n";
  return errors > 0 ? kExitValidation : kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Cross-entropy decomposition and scaling analysis"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kVersion);

  RunConfig cfg;
  app.add_option("--jobs", cfg.jobs, "Cells processed concurrently")->check(CLI::PositiveNumber);
  app.add_option("--log-base", cfg.log_base, "Display base for reported values")->check(CLI::IsMember({"e", "2", "10"}));
  app.add_option("--output-dir", cfg.output_dir, "Directory for output files");
  app.add_option("--config", cfg.config_path, "JSON file mirroring the flags; flags take precedence");

  auto add_inputs = [&](CLI::App* sub) {
    sub->add_option("inputs", cfg.inputs, "Record files, manifests, directories or globs");
  };
  auto add_clamp = [&](CLI::App* sub) {
    sub->add_option("--clamp-lns", cfg.clamp_lns, "Raise log-scores below this floor to it (recorded in output)");
  };

  auto* decompose_cmd = app.add_subcommand("decompose", "Decompose cross-entropy per corpus cell");
  add_inputs(decompose_cmd);
  add_clamp(decompose_cmd);

  auto* fit_cmd = app.add_subcommand("fit", "Power-law fits across model sizes");
  add_inputs(fit_cmd);
  add_clamp(fit_cmd);
  fit_cmd->add_option("--group-by", cfg.group_by, "family or all")->check(CLI::IsMember({"family", "all"}));
  fit_cmd->add_option("--epsilon", cfg.epsilon, "Drop values with |value| below this");
  fit_cmd->add_flag("--shares", cfg.shares, "Also emit per-model component shares");

  auto* report_cmd = app.add_subcommand("report", "Distribution views: dynamics, overlay, score-by-rank");
  add_inputs(report_cmd);
  add_clamp(report_cmd);
  report_cmd->add_flag("--dynamics", cfg.dynamics, "step,ce,ee,sa,conf over checkpoints");
  report_cmd->add_flag("--overlay", cfg.overlay, "rank,p,q per cell plus total-variation distance");
  report_cmd->add_option("--score-by-rank", cfg.score_by_rank, "Mean top-K scores for records at this RBE");
  report_cmd->add_option("--top-k", cfg.top_k, "Profile depth for --score-by-rank")->check(CLI::PositiveNumber);
  report_cmd->add_option("--bins", cfg.bins, "raw or log2 (log2 also writes binned overlays)")
      ->check(CLI::IsMember({"raw", "log2"}));

  auto* synth_cmd = app.add_subcommand("synth", "Generate synthetic corpora");
  synth_cmd->add_option("--spec", cfg.spec_path, "SynthSpec or SeriesSpec JSON file");
  synth_cmd->add_option("--name", cfg.name, "Output file stem");
  synth_cmd->add_option("--seed", cfg.seed, "Override the spec's seed");

  auto* validate_cmd = app.add_subcommand("validate", "Check records and manifests");
  add_inputs(validate_cmd);
  add_clamp(validate_cmd);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitParse;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    apply_config_file(app, *sub, cfg);
    int rc = kExitOk;
    if (sub == decompose_cmd) rc = cmd_decompose(cfg, out, err);
    if (sub == fit_cmd) rc = cmd_fit(cfg, out, err);
    if (sub == report_cmd) rc = cmd_report(cfg, out, err);
    if (sub == synth_cmd) rc = cmd_synth(cfg, out, err);
    if (sub == validate_cmd) rc = cmd_validate(cfg, out, err);
    if (rc == kExitOk && sub != validate_cmd) write_run_metadata(cfg, sub->get_name(), args);
    return rc;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitParse;
  }
}

}  // namespace cedecomp

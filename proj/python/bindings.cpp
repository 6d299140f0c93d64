#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <fstream>
#include <sstream>

#include "cedecomp/cli.hpp"
#include "cedecomp/decomposition.hpp"
#include "cedecomp/error.hpp"
#include "cedecomp/records.hpp"
#include "cedecomp/scaling.hpp"
#include "cedecomp/synth.hpp"

namespace py = pybind11;
using namespace cedecomp;

namespace {

// Dicts cross the boundary as JSON text; the json module does the Python side.
nlohmann::json to_json(const py::object& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object from_json(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

CorpusManifest manifest_arg(const py::object& obj) { return manifest_from_json(to_json(obj)); }

py::dict fit_dict(const ScalingFit& fit) {
  py::dict d;
  d["metric"] = metric_name(fit.metric);
  d["slope"] = fit.slope;
  d["intercept"] = fit.intercept;
  d["r2"] = fit.r2;
  d["n_points"] = fit.n_points;
  d["models"] = fit.models;
  d["sign_flip"] = fit.sign_flip;
  py::list dropped;
  for (const auto& p : fit.dropped_points) dropped.append(py::make_tuple(p.model, p.reason));
  d["dropped_points"] = dropped;
  return d;
}

py::tuple corpus_tuple(const SynthCorpus& c) { return py::make_tuple(c.records, from_json(manifest_to_json(c.manifest))); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cross-entropy decomposition by rank-based error";

  static py::exception<Error> error_type(m, "CedecompError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, e.what());
    }
  });

  py::class_<PredictionRecord>(m, "PredictionRecord")
      .def(py::init<>())
      .def(py::init([](std::uint64_t rbe, double ln_score, std::uint64_t doc_id, std::uint64_t pos,
                       std::uint64_t gt_token, std::optional<std::vector<double>> topk) {
             return PredictionRecord{doc_id, pos, gt_token, ln_score, rbe, std::move(topk)};
           }),
           py::arg("rbe"), py::arg("ln_score"), py::arg("doc_id") = 0, py::arg("pos") = 0, py::arg("gt_token") = 0,
           py::arg("topk_ln_scores") = py::none())
      .def_readwrite("doc_id", &PredictionRecord::doc_id)
      .def_readwrite("pos", &PredictionRecord::pos)
      .def_readwrite("gt_token", &PredictionRecord::gt_token)
      .def_readwrite("ln_score", &PredictionRecord::ln_score)
      .def_readwrite("rbe", &PredictionRecord::rbe)
      .def_readwrite("topk_ln_scores", &PredictionRecord::topk_ln_scores)
      .def("__eq__", [](const PredictionRecord& a, const PredictionRecord& b) { return bit_identical(a, b); })
      .def("__repr__", [](const PredictionRecord& r) { return "PredictionRecord(" + encode_record(r) + ")"; });

  py::class_<Decomposition>(m, "Decomposition")
      .def_readonly("ce", &Decomposition::ce)
      .def_readonly("ee", &Decomposition::ee)
      .def_readonly("sa", &Decomposition::sa)
      .def_readonly("conf", &Decomposition::conf)
      .def_readonly("residual", &Decomposition::residual)
      .def_readonly("n", &Decomposition::n)
      .def_readonly("support_size", &Decomposition::support_size)
      .def("identity_holds", &identity_holds)
      .def("__repr__", [](const Decomposition& d) {
        std::ostringstream s;
        s << "Decomposition(ce=" << d.ce << ", ee=" << d.ee << ", sa=" << d.sa << ", conf=" << d.conf
          << ", n=" << d.n << ")";
        return s.str();
      });

  m.def("decompose", [](const std::vector<PredictionRecord>& records) { return decompose(accumulate(records)); },
        py::arg("records"));

  m.def(
      "read_corpus",
      [](const std::filesystem::path& path) {
        const auto files = resolve_corpus(path);
        const auto manifest = read_manifest(files.manifest);
        std::ifstream in(files.records, std::ios::binary);
        if (!in) throw Error(ErrorKind::Parse, "cannot open " + files.records.string());
        return py::make_tuple(read_records(in, manifest), from_json(manifest_to_json(manifest)));
      },
      py::arg("path"), "Returns (records, manifest dict) for <stem>.jsonl or <stem>.manifest.json.");

  m.def(
      "write_corpus",
      [](const std::filesystem::path& dir, const std::string& name, const std::vector<PredictionRecord>& records,
         const py::object& manifest) {
        return write_corpus(dir, name, records, manifest_arg(manifest)).records.string();
      },
      py::arg("dir"), py::arg("name"), py::arg("records"), py::arg("manifest"));

  m.def("encode_record", &encode_record, py::arg("record"));
  m.def("decode_record", [](const std::string& line) { return decode_record(line); }, py::arg("line"));

  m.def(
      "validate_record",
      [](const PredictionRecord& r, const py::object& manifest) {
        py::list out;
        for (const auto& i : validate_record(r, manifest_arg(manifest)).issues) {
          out.append(py::make_tuple(i.severity == Severity::Error ? "error" : "warning", i.field, i.message));
        }
        return out;
      },
      py::arg("record"), py::arg("manifest"), "List of (severity, field, message).");

  m.def(
      "fit_power_law",
      [](const std::vector<double>& sizes, const std::vector<double>& values, double epsilon,
         std::optional<std::vector<std::string>> models) {
        if (sizes.size() != values.size()) throw Error(ErrorKind::Domain, "sizes and values differ in length");
        std::vector<ScalingPoint> pts;
        for (std::size_t i = 0; i < sizes.size(); ++i) {
          pts.push_back({models ? models->at(i) : "m" + std::to_string(i), sizes[i], values[i]});
        }
        return fit_dict(fit_power_law(pts, epsilon));
      },
      py::arg("sizes"), py::arg("values"), py::arg("epsilon") = kDefaultEpsilon, py::arg("models") = py::none());

  m.def(
      "component_shares",
      [](const Decomposition& d) {
        const auto s = component_shares(d);
        return py::make_tuple(s.ee, s.sa, s.conf);
      },
      py::arg("decomposition"), "(ee_share, sa_share, conf_share)");

  m.def("harmonic_conf_bound", [](const std::vector<std::uint64_t>& support) { return harmonic_conf_bound(support); },
        py::arg("support"));

  m.def("truncated_geometric_entropy", &truncated_geometric_entropy, py::arg("r"), py::arg("max_rank"));
  m.def("solve_p_for_entropy", &solve_p_for_entropy, py::arg("target_h"), py::arg("max_rank"));

  m.def(
      "gen_corpus", [](const py::object& spec) { return corpus_tuple(gen_corpus(synth_spec_from_json(to_json(spec)))); },
      py::arg("spec"), "Returns (records, manifest dict).");
  m.def(
      "gen_scaling_series",
      [](const py::object& spec) {
        py::list out;
        for (const auto& c : gen_scaling_series(series_spec_from_json(to_json(spec)))) out.append(corpus_tuple(c));
        return out;
      },
      py::arg("spec"));

  m.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "cedecomp");
        std::ostringstream out, err;
        int rc;
        {
          py::gil_scoped_release release;
          rc = run_cli(args, out, err);
        }
        return py::make_tuple(rc, out.str(), err.str());
      },
      py::arg("args"), "Runs the command line in-process; returns (exit_code, stdout, stderr).");

  m.attr("__version__") = kVersion;
}

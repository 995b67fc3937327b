#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <iostream>
#include <sstream>

#include "headkd/checkpoint.hpp"
#include "headkd/error.hpp"
#include "headkd/pipeline.hpp"

namespace py = pybind11;
using namespace headkd;
using nlohmann::json;

namespace {

// JSON crosses the boundary through Python's json module, so configs and
// reports arrive as plain dicts and lists.
py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::handle& obj) {
  return json::parse(py::module_::import("json").attr("dumps")(obj).cast<std::string>());
}

PipelineConfig config_from(const py::dict& d) { return PipelineConfig::from_json(from_py(d)); }

// Command logs go to stdout when verbose, otherwise nowhere.
struct Log {
  explicit Log(bool verbose) : verbose(verbose) {}
  std::ostream& stream() { return verbose ? std::cout : sink; }
  bool verbose;
  std::ostringstream sink;
};

using HeadTuple = std::tuple<std::string, std::size_t, int>;

HeadRef head_from(const HeadTuple& t) {
  return {{parse_site_kind(std::get<0>(t)), std::get<1>(t)}, std::get<2>(t)};
}

py::list layout_list(const HeadLayout& layout) {
  py::list out;
  for (const auto& site : all_sites(layout.layers)) {
    out.append(py::make_tuple(std::string(site_kind_name(site.kind)), site.layer, layout.at(site)));
  }
  return out;
}

const std::vector<EncodedExample>& split_of(const PreparedData& d, const std::string& name) {
  if (name == "train") return d.train;
  if (name == "val") return d.val;
  if (name == "test") return d.test;
  throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

}  // namespace

PYBIND11_MODULE(_headkd, m) {
  m.doc() = "Attention-head pruning with recursive distillation";

  static py::exception<Error> base(m, "HeadkdError", PyExc_RuntimeError);
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<ConstraintError> constraint_error(m, "ConstraintError", base.ptr());
  static py::exception<FormatError> format_error(m, "FormatError", base.ptr());
  static py::exception<IoError> io_error(m, "IoError", base.ptr());
  static py::exception<LengthError> length_error(m, "LengthError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const ConstraintError& e) {
      py::set_error(constraint_error, e.what());
    } catch (const FormatError& e) {
      py::set_error(format_error, e.what());
    } catch (const IoError& e) {
      py::set_error(io_error, e.what());
    } catch (const LengthError& e) {
      py::set_error(length_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def("toy_config", [] { return to_py(PipelineConfig::toy().to_json()); }, "The default pipeline config as a dict.");
  m.def("load_config", [](const std::filesystem::path& p) { return to_py(PipelineConfig::load(p).to_json()); },
        py::arg("path"));
  m.def(
      "apply_overrides",
      [](const py::dict& config, std::optional<double> alpha, std::optional<double> p_max,
         std::optional<std::string> strategy, std::optional<std::uint64_t> seed) {
        auto c = config_from(config);
        apply_overrides(c, Overrides{alpha, p_max, strategy, seed});
        return to_py(c.to_json());
      },
      py::arg("config"), py::kw_only(), py::arg("alpha") = py::none(), py::arg("p_max") = py::none(),
      py::arg("strategy") = py::none(), py::arg("seed") = py::none());

  m.def("pruning_ratio",
        [](std::size_t t, const py::dict& schedule) { return pruning_ratio(t, PruneSchedule::from_json(from_py(schedule))); },
        py::arg("t"), py::arg("schedule"));
  m.def("heads_to_prune", &heads_to_prune, py::arg("p"), py::arg("total_heads"));
  m.def("row_entropy", [](const std::vector<double>& row) { return row_entropy(row); }, py::arg("row"));

  py::class_<Model>(m, "Model")
      .def_static("init", [](const py::dict& cfg) { return Model::init(ModelConfig::from_json(from_py(cfg))); },
                  py::arg("config"))
      .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p).model; }, py::arg("path"))
      .def(
          "save",
          [](const Model& self, const std::filesystem::path& p, const py::object& meta) {
            save_checkpoint(self, p, meta.is_none() ? json::object() : from_py(meta));
          },
          py::arg("path"), py::arg("meta") = py::none())
      .def_property_readonly("config", [](const Model& self) { return to_py(self.config().to_json()); })
      .def_property_readonly("layout", [](const Model& self) { return layout_list(self.layout()); })
      .def_property_readonly("num_heads", [](const Model& self) { return self.layout().total_heads(); })
      .def("count_params", [](const Model& self) { return count_params(self); })
      .def("count_flops", [](const Model& self, std::size_t s, std::size_t t) { return count_flops(self, s, t); },
           py::arg("src_len"), py::arg("tgt_len"))
      .def(
          "remove_heads",
          [](const Model& self, const std::vector<HeadTuple>& heads) {
            std::vector<HeadRef> refs;
            for (const auto& h : heads) refs.push_back(head_from(h));
            return remove_heads(self, refs);
          },
          py::arg("heads"), "Returns a copy without the given (kind, layer, head) heads.")
      .def(
          "weight_norm",
          [](const Model& self, const std::string& kind, std::size_t layer, int head) {
            return weight_norm(self, {parse_site_kind(kind), layer}, head);
          },
          py::arg("kind"), py::arg("layer"), py::arg("head"))
      .def(
          "logits",
          [](const Model& self, const std::vector<int>& source, const std::vector<int>& target) {
            EncodedExample e;
            e.source = source;
            e.target = target;
            const std::vector<EncodedExample> one{e};
            NoGradGuard guard;
            const auto out = forward(self, make_batch(one));
            const auto& v = out.logits.value();
            py::array_t<double> arr({v.shape()[1], v.shape()[2]});
            std::copy(v.data().begin(), v.data().end(), arr.mutable_data());
            return arr;
          },
          py::arg("source"), py::arg("target"),
          "Teacher-forced logits, one row per target position plus the end marker.");

  py::class_<PreparedData>(m, "Dataset")
      .def_static("prepare", [](const py::dict& config) { return prepare_data(config_from(config)); },
                  py::arg("config"), "Generates the corpus, splits and vocabulary in memory.")
      .def_property_readonly("vocab", [](const PreparedData& d) { return d.vocab.tokens(); })
      .def("size", [](const PreparedData& d, const std::string& split) { return split_of(d, split).size(); },
           py::arg("split"))
      .def(
          "problem",
          [](const PreparedData& d, const std::string& split, std::size_t i) {
            const auto& e = split_of(d, split).at(i);
            py::dict out;
            out["text"] = detokenize_text(e.source, d.vocab);
            out["expression"] = detokenize_expression(e.target, d.vocab);
            out["complexity"] = std::string(complexity_name(e.complexity));
            out["source"] = e.source;
            out["target"] = e.target;
            return out;
          },
          py::arg("split"), py::arg("index"))
      .def(
          "evaluate",
          [](const PreparedData& d, const Model& model, const std::string& split) {
            return to_py(evaluate(model, split_of(d, split), d.vocab).to_json());
          },
          py::arg("model"), py::arg("split") = "test")
      .def(
          "importance",
          [](const PreparedData& d, const Model& model, double alpha, const py::object& calibration) {
            const auto calib = calibration.is_none() ? CalibrationConfig{} : CalibrationConfig::from_json(from_py(calibration));
            const auto& examples = calib.split == CalibrationSplit::Train ? d.train : d.val;
            return to_py(importance_scores(model, examples, calib, alpha).to_json());
          },
          py::arg("model"), py::arg("alpha") = 0.5, py::arg("calibration") = py::none());

  m.def(
      "select_heads",
      [](const py::dict& scores, std::size_t count, const std::string& strategy, std::uint64_t seed) {
        return to_py(select_heads(ImportanceMatrix::from_json(from_py(scores)), count, parse_strategy(strategy), seed)
                         .to_json());
      },
      py::arg("scores"), py::arg("count"), py::arg("strategy") = "combined", py::arg("seed") = 0);
  m.def(
      "prune_to_ratio",
      [](const Model& model, const py::dict& scores, double p, const std::string& strategy, std::uint64_t seed) {
        auto r = prune_to_ratio(model, ImportanceMatrix::from_json(from_py(scores)), p, parse_strategy(strategy), seed);
        return py::make_tuple(std::move(r.model), to_py(r.plan.to_json()));
      },
      py::arg("model"), py::arg("scores"), py::arg("p"), py::arg("strategy") = "combined", py::arg("seed") = 0);

  m.def(
      "gen_data",
      [](const py::dict& config, bool verbose) {
        Log log(verbose);
        const auto r = cmd_gen_data(config_from(config), log.stream());
        py::dict out;
        out["problems"] = r.problems;
        out["level_counts"] = r.level_counts;
        out["split_sizes"] = r.split_sizes;
        return out;
      },
      py::arg("config"), py::arg("verbose") = false);
  m.def(
      "train",
      [](const py::dict& config, bool verbose) {
        Log log(verbose);
        const auto r = cmd_train(config_from(config), log.stream());
        json history = json::array();
        for (const auto& h : r.history) history.push_back(h.to_json());
        return py::make_tuple(r.model.clone(), r.val_accuracy, to_py(history));
      },
      py::arg("config"), py::arg("verbose") = false, "Trains the teacher; returns (model, val_accuracy, history).");
  m.def(
      "score",
      [](const py::dict& config, const std::filesystem::path& checkpoint, bool verbose) {
        Log log(verbose);
        return to_py(cmd_score(config_from(config), checkpoint, log.stream()).to_json());
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("verbose") = false);
  m.def(
      "prune",
      [](const py::dict& config, const std::filesystem::path& checkpoint, bool verbose) {
        Log log(verbose);
        return to_py(cmd_prune(config_from(config), checkpoint, log.stream()).to_json());
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("verbose") = false);
  m.def(
      "pipeline",
      [](const py::dict& config, bool verbose) {
        Log log(verbose);
        return to_py(cmd_pipeline(config_from(config), log.stream()).to_json());
      },
      py::arg("config"), py::arg("verbose") = false, "Runs the whole pipeline and returns the report dict.");
  m.def(
      "report",
      [](const py::dict& config, bool verbose) {
        Log log(verbose);
        return to_py(cmd_report(config_from(config), log.stream()).to_json());
      },
      py::arg("config"), py::arg("verbose") = false);
}

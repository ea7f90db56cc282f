#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "rcalad/checkpoint.hpp"
#include "rcalad/config.hpp"
#include "rcalad/error.hpp"
#include "rcalad/experiment.hpp"
#include "rcalad/metrics.hpp"

namespace py = pybind11;
using namespace rcalad;

namespace {

using Array = py::array_t<Real, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Tensor({rows, cols}, std::vector<Real>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.rows(), t.cols()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

template <class T>
py::array_t<T> to_array(const std::vector<T>& v) {
  py::array_t<T> out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

std::vector<Real> to_vector(const Array& a) {
  if (a.ndim() != 1) throw py::value_error("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

py::dict metrics_dict(const Metrics& m) {
  py::dict d;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["auroc"] = m.auroc;
  d["precision_undefined"] = m.precision_undefined;
  d["recall_undefined"] = m.recall_undefined;
  return d;
}

py::dict scores_dict(const ScoreTable& t) {
  py::dict d;
  for (ScoreKind k : kAllScores)
    if (t.has(k)) d[py::str(std::string(to_string(k)))] = to_array(t.get(k));
  return d;
}

// One bundle and its trainer, kept together so the trainer's reference
// stays valid.
class Model {
public:
  Model(const ExperimentConfig& config, std::size_t input_dim, std::uint64_t seed)
      : config_(config),
        bundle_(std::make_unique<ModelBundle>(build_bundle(config, input_dim, seed))) {
    TrainConfig tc = config.train;
    tc.seed = seed;
    trainer_ = std::make_unique<Trainer>(*bundle_, tc);
  }

  py::list fit(const Array& x) {
    const Tensor data = to_tensor(x);
    TrainHistory h;
    {
      py::gil_scoped_release release;
      h = trainer_->fit(data);
    }
    if (h.failure) throw Error(ErrorCode::numerical, *h.failure);
    py::list out;
    for (const auto& e : h.epochs) {
      py::dict d;
      d["epoch"] = e.epoch;
      d["steps"] = e.steps;
      d["d_total"] = e.mean.discriminator_total;
      d["g_total"] = e.mean.generator_total;
      out.append(d);
    }
    return out;
  }

  py::dict score(const Array& x, bool oriented) const {
    const Tensor data = to_tensor(x);
    ScoreTable t;
    {
      py::gil_scoped_release release;
      t = score_batch(*bundle_, data);
    }
    return scores_dict(oriented ? orient(t, config_.score.orientation) : t);
  }

  void save(const std::filesystem::path& p) const { save_checkpoint(p, *trainer_, config_hash(config_)); }
  void load(const std::filesystem::path& p) { load_checkpoint(p, *trainer_, config_hash(config_)); }
  std::uint64_t global_step() const { return trainer_->global_step(); }
  std::size_t epoch() const { return trainer_->epoch(); }

private:
  ExperimentConfig config_;
  std::unique_ptr<ModelBundle> bundle_;
  std::unique_ptr<Trainer> trainer_;
};

} // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "rcalad core bindings";

  PYBIND11_CONSTINIT static py::gil_safe_call_once_and_store<py::object> error_type;
  error_type.call_once_and_store_result(
      [&] { return py::object(py::exception<Error>(m, "RcaladError", PyExc_RuntimeError)); });
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const py::object& type = error_type.get_stored();
      py::object exc = type(std::string(to_string(e.code())) + ": " + e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(type.ptr(), exc.ptr());
    }
  });

  py::class_<ExperimentConfig>(m, "Config")
      .def_static("parse", [](const std::string& yaml) { return parse_config(yaml); })
      .def_static("load", [](const std::filesystem::path& p) { return load_config(p); })
      .def("to_yaml", [](const ExperimentConfig& c) { return to_yaml(c); })
      .def("hash", [](const ExperimentConfig& c) { return config_hash(c); })
      .def("validate", &ExperimentConfig::validate)
      .def_readwrite("runs", &ExperimentConfig::runs)
      .def_readwrite("seed", &ExperimentConfig::seed)
      .def_readwrite("alpha", &ExperimentConfig::alpha)
      .def_readwrite("output", &ExperimentConfig::output)
      .def_property(
          "epochs", [](const ExperimentConfig& c) { return c.train.max_epochs; },
          [](ExperimentConfig& c, std::size_t v) { c.train.max_epochs = v; })
      .def_property(
          "batch_size", [](const ExperimentConfig& c) { return c.train.batch_size; },
          [](ExperimentConfig& c, std::size_t v) { c.train.batch_size = v; })
      .def_property(
          "lr", [](const ExperimentConfig& c) { return c.train.adam.lr; },
          [](ExperimentConfig& c, Real v) { c.train.adam.lr = v; })
      .def_property(
          "variant", [](const ExperimentConfig& c) { return std::string(to_string(c.variant)); },
          [](ExperimentConfig& c, const std::string& v) {
            c.variant = parse_variant(v);
            c.train.toggles = toggles_for(c.variant);
          })
      .def_property(
          "score", [](const ExperimentConfig& c) { return std::string(to_string(c.score.kind)); },
          [](ExperimentConfig& c, const std::string& v) { c.score.kind = parse_score_kind(v); })
      .def("__repr__", [](const ExperimentConfig& c) { return to_yaml(c); });

  m.def(
      "toy",
      [](const std::string& kind, std::size_t n_normal, std::size_t n_anomaly, double noise,
         std::uint64_t seed) {
        const Dataset d = synth_toy({parse_toy_kind(kind), n_normal, n_anomaly, noise, seed});
        return py::make_tuple(to_array(d.x), to_array(d.y));
      },
      py::arg("kind") = "gaussian_ring", py::arg("n_normal") = 1000, py::arg("n_anomaly") = 0,
      py::arg("noise") = 0.05, py::arg("seed") = 0,
      "Synthetic 2-D data; returns (x, labels) with label 1 for anomalies.");

  m.def(
      "prepare",
      [](const ExperimentConfig& c, std::uint64_t seed) {
        const PreparedData p = prepare_data(c, seed);
        py::dict d;
        d["train_x"] = to_array(p.train.x);
        d["validation_x"] = to_array(p.validation.x);
        d["validation_y"] = to_array(p.validation.y);
        d["test_x"] = to_array(p.test.x);
        d["test_y"] = to_array(p.test.y);
        d["feature_names"] = p.feature_names;
        return d;
      },
      py::arg("config"), py::arg("seed"),
      "Split, encode and scale the configured dataset for one run seed.");

  py::class_<Model>(m, "Model")
      .def(py::init<const ExperimentConfig&, std::size_t, std::uint64_t>(), py::arg("config"),
           py::arg("input_dim"), py::arg("seed"))
      .def("fit", &Model::fit, py::arg("x"), "Train for the configured epochs; per-epoch losses.")
      .def("score", &Model::score, py::arg("x"), py::arg("oriented") = true,
           "Every available score column for the rows of x.")
      .def("save", &Model::save)
      .def("load", &Model::load)
      .def_property_readonly("global_step", &Model::global_step)
      .def_property_readonly("epoch", &Model::epoch);

  py::class_<Report>(m, "Report")
      .def("metrics_json", [](const Report& r) { return metrics_json(r); })
      .def("emit", [](const Report& r, const std::filesystem::path& dir) { emit_report(r, dir); })
      .def_property_readonly("failures", [](const Report& r) {
        std::vector<std::string> out;
        for (const auto& run : r.runs)
          if (run.failure) out.push_back(*run.failure);
        return out;
      });

  m.def(
      "run_experiment",
      [](const ExperimentConfig& c, std::size_t threads) {
        RunOptions opt;
        opt.threads = threads;
        py::gil_scoped_release release;
        return run_experiment(c, opt);
      },
      py::arg("config"), py::arg("threads") = 0);

  m.def("flag_count", &flag_count, py::arg("n"), py::arg("alpha"));
  m.def(
      "threshold_flags",
      [](const Array& s, double alpha) {
        const auto flags = threshold_flags(to_vector(s), alpha);
        return std::vector<bool>(flags.begin(), flags.end());
      },
      py::arg("scores"), py::arg("alpha"));
  m.def(
      "auroc", [](const Array& s, const std::vector<int>& y) { return auroc(to_vector(s), y); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "evaluate",
      [](const Array& s, const std::vector<int>& y, double alpha) {
        return metrics_dict(evaluate(to_vector(s), y, alpha));
      },
      py::arg("scores"), py::arg("labels"), py::arg("alpha"));
  m.def(
      "wilcoxon",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const WilcoxonResult w = wilcoxon_signed_rank(a, b);
        py::dict d;
        d["statistic"] = w.statistic;
        d["p_value"] = w.p_value;
        d["n"] = w.n;
        d["w_plus"] = w.w_plus;
        d["w_minus"] = w.w_minus;
        d["exact"] = w.exact;
        return d;
      },
      py::arg("a"), py::arg("b"));
}

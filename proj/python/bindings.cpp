#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>

#include "seqmeta/decay_fit.hpp"
#include "seqmeta/eval.hpp"
#include "seqmeta/experiment.hpp"
#include "seqmeta/meta.hpp"
#include "seqmeta/serialization.hpp"

namespace py = pybind11;
using namespace seqmeta;
using nlohmann::json;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

json to_json(const py::object& obj) {
    if (py::isinstance<py::str>(obj)) return json::parse(obj.cast<std::string>());
    const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
    return json::parse(text);
}

py::object to_python(const nlohmann::ordered_json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

ParamVector to_params(const Array& a) {
    if (a.ndim() != 1) throw invalid_argument("parameter array must be one-dimensional");
    return ParamVector(std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const ParamVector& p) {
    Array out(static_cast<py::ssize_t>(p.size()));
    double* dst = out.mutable_data();
    for (std::size_t k = 0; k < p.size(); ++k) dst[k] = p[k];
    return out;
}

Matrix to_matrix(const Array& a) {
    if (a.ndim() != 2) throw invalid_argument("input array must be two-dimensional (samples x features)");
    Matrix m(a.shape(0), a.shape(1));
    std::copy(a.data(), a.data() + a.size(), m.data());
    return m;
}

Array matrix_to_array(const Matrix& m) {
    Array out({m.rows(), m.cols()});
    std::copy(m.data(), m.data() + m.size(), out.mutable_data());
    return out;
}

Batch make_batch(const Array& inputs, const std::optional<std::vector<int>>& labels, const std::optional<Array>& targets) {
    Batch b;
    b.inputs = to_matrix(inputs);
    if (labels) b.labels = *labels;
    if (targets) b.targets = to_matrix(*targets);
    return b;
}

MetaConfig meta_config(const py::object& obj) {
    const auto cfg = obj.is_none() ? MetaConfig{} : meta_config_from_json(to_json(obj));
    cfg.validate();
    return cfg;
}

py::dict fit_dict(const DecayFit& f) {
    py::dict d;
    d["a"] = f.a;
    d["tau"] = f.tau;
    d["chance"] = f.chance;
    d["residual_sse"] = f.residual_sse;
    d["converged"] = f.converged;
    d["iterations"] = f.iterations;
    d["tau_identifiable"] = f.tau_identifiable;
    d["objective_log"] = f.objective_log;
    return d;
}

ExperimentConfig stage_config(const std::string& config, const std::optional<std::string>& out,
                              std::optional<std::uint64_t> seed, std::optional<std::size_t> L,
                              const std::optional<std::string>& head_mode) {
    auto cfg = load_experiment_config(config);
    Overrides o;
    if (out) o.out = *out;
    o.seed = seed;
    o.sequence_length = L;
    if (head_mode) o.head_mode = parse_head_mode(*head_mode);
    apply_overrides(cfg, o);
    return cfg;
}

// Forwards stage output to Python's sys.stdout / sys.stderr.
struct PyStreams {
    std::ostringstream out, err;
    StageStreams io() { return {out, err}; }
    ~PyStreams() {
        py::gil_scoped_acquire gil;
        py::module_::import("sys").attr("stdout").attr("write")(out.str());
        py::module_::import("sys").attr("stderr").attr("write")(err.str());
    }
};

}  // namespace

PYBIND11_MODULE(_seqmeta, m) {
    m.doc() = "Sequential first-order meta-learning toolkit";

    // Raised for every library error; `kind` carries the error category.
    static PyObject* error_type =
        PyErr_NewException("seqmeta._seqmeta.SeqmetaError", PyExc_RuntimeError, nullptr);
    m.add_object("SeqmetaError", py::handle(error_type));
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = to_string(e.kind());
            PyErr_SetObject(error_type, exc.ptr());
        }
    });

    py::class_<Network>(m, "Network")
        .def(py::init([](const py::object& spec) { return Network(network_spec_from_json(to_json(spec))); }),
             py::arg("spec"), "Builds a network from a spec dict or JSON string.")
        .def_property_readonly("param_count", &Network::param_count)
        .def_property_readonly("input_size", &Network::input_size)
        .def_property_readonly("output_size", &Network::output_size)
        .def_property_readonly("head_param_count", &Network::head_param_count)
        .def_property_readonly("spec", [](const Network& n) { return to_python(network_spec_to_json(n.spec())); })
        .def("forward", [](const Network& n, const Array& params, const Array& inputs) {
                return matrix_to_array(n.forward(to_params(params), to_matrix(inputs)));
            }, py::arg("params"), py::arg("inputs"))
        .def("loss_and_grad",
             [](const Network& n, const Array& params, const Array& inputs, std::optional<std::vector<int>> labels,
                std::optional<Array> targets) {
                 const auto r = n.loss_and_grad(to_params(params), make_batch(inputs, labels, targets));
                 return py::make_tuple(r.loss, to_array(r.grad));
             },
             py::arg("params"), py::arg("inputs"), py::arg("labels") = py::none(), py::arg("targets") = py::none())
        .def("predict", [](const Network& n, const Array& params, const Array& inputs) {
                return n.predict(to_params(params), to_matrix(inputs));
            }, py::arg("params"), py::arg("inputs"))
        .def("accuracy", [](const Network& n, const Array& params, const Array& inputs, std::vector<int> labels) {
                return n.accuracy(to_params(params), make_batch(inputs, labels, std::nullopt));
            }, py::arg("params"), py::arg("inputs"), py::arg("labels"));

    m.def("init_params", [](const Network& n, std::uint64_t seed) { return to_array(init_params(n, seed)); },
          py::arg("network"), py::arg("seed"));

    py::class_<TaskDistribution>(m, "Distribution")
        .def(py::init([](const py::object& spec, const std::string& base_dir) {
                 return make_distribution(to_json(spec), base_dir);
             }),
             py::arg("spec"), py::arg("base_dir") = ".",
             "Distribution from a data spec such as {\"kind\": \"synthetic_glyphs\", ...}.")
        .def_property_readonly("kind", [](const TaskDistribution& d) { return to_string(d.kind); })
        .def_property_readonly("ways", [](const TaskDistribution& d) { return d.ways; })
        .def_property_readonly("input_size", &TaskDistribution::input_size)
        .def_property_readonly("output_size", &TaskDistribution::output_size)
        .def_property_readonly("available_classes", &TaskDistribution::available_classes);

    py::class_<Task>(m, "Task")
        .def_readonly("id", &Task::id)
        .def_readonly("ways", &Task::ways)
        .def_readonly("classes", &Task::classes)
        .def_property_readonly("train_inputs", [](const Task& t) { return matrix_to_array(t.train.inputs); })
        .def_property_readonly("train_labels", [](const Task& t) { return t.train.labels; })
        .def_property_readonly("test_inputs", [](const Task& t) { return matrix_to_array(t.test.inputs); })
        .def_property_readonly("test_labels", [](const Task& t) { return t.test.labels; });

    m.def("sample_sequence", [](const TaskDistribution& d, std::size_t n, std::uint64_t seed) {
            Rng rng(seed);
            return sample_sequence(d, n, rng).tasks;
        }, py::arg("distribution"), py::arg("n"), py::arg("seed"));

    m.def("fomaml_meta_gradient",
          [](const Network& n, const Array& params, const Task& task, const py::object& config) {
              return to_array(fomaml_meta_gradient(n, to_params(params), task, meta_config(config)));
          },
          py::arg("network"), py::arg("params"), py::arg("task"), py::arg("config") = py::none());

    m.def("seqfomaml_meta_gradient",
          [](const Network& n, const Array& params, const std::vector<Task>& tasks, const py::object& config) {
              const auto r = seqfomaml_meta_gradient(n, to_params(params), TaskSequence{tasks}, meta_config(config));
              return py::make_tuple(to_array(r.grad), r.objective);
          },
          py::arg("network"), py::arg("params"), py::arg("tasks"), py::arg("config") = py::none(),
          "Returns (gradient, objective).");

    m.def("meta_train",
          [](const Network& n, const TaskDistribution& d, const py::object& config, std::uint64_t seed,
             std::optional<Array> init, std::size_t workers) {
              const auto cfg = meta_config(config);
              MetaTrainOptions opts;
              opts.workers = workers;
              MetaTrainResult r;
              {
                  py::gil_scoped_release release;
                  r = init ? meta_train(n, d, cfg, seed, to_params(*init), opts) : meta_train(n, d, cfg, seed, opts);
              }
              return py::make_tuple(to_array(r.params), r.objective_log);
          },
          py::arg("network"), py::arg("distribution"), py::arg("config"), py::arg("seed"),
          py::arg("init") = py::none(), py::arg("workers") = 1, "Returns (params, objective_log).");

    m.def("sequential_evaluate",
          [](const Network& n, const Array& init, const std::vector<Task>& tasks, std::size_t k, double lr,
             const std::string& head_mode) {
              const auto r =
                  sequential_evaluate(n, to_params(init), TaskSequence{tasks}, k, lr, parse_head_mode(head_mode));
              const auto T = static_cast<py::ssize_t>(r.matrix.tasks());
              Array a({T, T});
              auto v = a.mutable_unchecked<2>();
              for (py::ssize_t t = 0; t < T; ++t)
                  for (py::ssize_t i = 0; i < T; ++i) {
                      const auto cell = i <= t ? r.matrix.get(t + 1, i + 1) : std::nullopt;
                      v(t, i) = cell.value_or(std::numeric_limits<double>::quiet_NaN());
                  }
              py::list failures;
              for (const auto& f : r.failures) failures.append(py::make_tuple(f.t, f.i, f.message));
              return py::make_tuple(a, failures);
          },
          py::arg("network"), py::arg("init"), py::arg("tasks"), py::arg("k"), py::arg("lr"),
          py::arg("head_mode") = "single",
          "Returns (A, failures); A[t-1, i-1] is the accuracy on task i after task t, NaN when absent.");

    m.def("predict_f", &predict_f, py::arg("a"), py::arg("tau"), py::arg("chance"), py::arg("i"), py::arg("t"));
    m.def("predict_F", &predict_F, py::arg("a"), py::arg("tau"), py::arg("chance"), py::arg("t"));

    m.def("nls_fit",
          [](std::vector<double> curve, double chance, const std::string& model, std::size_t task_index) {
              FitProblem p;
              if (model == "aggregate_F") {
                  p = curve_problem(curve, chance);
              } else if (model == "single_task_f") {
                  p.model = DecayModel::single_task_f;
                  p.chance = chance;
                  p.task_index = task_index;
                  for (std::size_t k = 0; k < curve.size(); ++k) p.observations.push_back({task_index + k, curve[k]});
              } else {
                  throw invalid_argument("unknown model \"" + model + "\"");
              }
              return fit_dict(nls_fit(p));
          },
          py::arg("curve"), py::arg("chance"), py::arg("model") = "aggregate_F", py::arg("task_index") = 1,
          "Fits a decay model to curve[k] observed at t = task_index + k (task_index is 1 for aggregate_F).");

    m.def("pearson_r", [](std::vector<double> x, std::vector<double> y) {
            const auto c = pearson_r(x, y);
            py::dict d;
            d["r"] = c.r;
            d["p"] = c.p;
            d["n"] = c.n;
            return d;
        }, py::arg("x"), py::arg("y"));

    m.def("stage_meta_train",
          [](const std::string& config, std::optional<std::string> out, std::optional<std::uint64_t> seed,
             std::optional<std::size_t> L, std::optional<std::string> head_mode, std::size_t workers) {
              const auto cfg = stage_config(config, out, seed, L, head_mode);
              PyStreams s;
              py::gil_scoped_release release;
              return cmd_meta_train(cfg, workers, s.io());
          });
    m.def("stage_evaluate",
          [](const std::string& config, std::optional<std::string> init, std::optional<std::string> out,
             std::optional<std::uint64_t> seed, std::optional<std::size_t> L, std::optional<std::string> head_mode,
             std::size_t workers) {
              const auto cfg = stage_config(config, out, seed, L, head_mode);
              const auto init_path = init ? std::filesystem::path(*init) : cfg.output_dir / "init" / "init.bin";
              PyStreams s;
              py::gil_scoped_release release;
              return cmd_evaluate(cfg, init_path, workers, s.io());
          });
    m.def("stage_fit_decay",
          [](const std::vector<std::string>& inputs, const std::string& out, std::optional<double> chance,
             const std::string& model) {
              std::vector<FitInput> parsed;
              for (const auto& a : inputs) parsed.push_back(parse_fit_input(a));
              const auto dm = model == "single_task_f" ? DecayModel::single_task_f : DecayModel::aggregate_F;
              if (model != "single_task_f" && model != "aggregate_F")
                  throw invalid_argument("unknown model \"" + model + "\"");
              PyStreams s;
              return cmd_fit_decay(parsed, chance, dm, out, s.io());
          });
    m.def("stage_report", [](const std::string& dir) {
        PyStreams s;
        return cmd_report(dir, s.io());
    });
}

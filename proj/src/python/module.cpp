#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "amaml/experiment.hpp"
#include "amaml/meta.hpp"
#include "amaml/metrics.hpp"
#include "amaml/model.hpp"
#include "amaml/rng.hpp"
#include "amaml/tasks.hpp"

namespace py = pybind11;
using namespace amaml;

namespace {

tasks::SyntheticFamily family_from_string(const std::string& name) {
  if (name == "cosmixture") return tasks::SyntheticFamily::CosMixture;
  if (name == "alpine") return tasks::SyntheticFamily::Alpine;
  throw ContractError("unknown synthetic family '" + name + "'");
}

meta::AdjointResult run_estimator(const model::MlpSpec& spec, const model::Task& task,
                                  const Eigen::VectorXd& theta, const meta::MetaConfig& cfg,
                                  const std::string& name) {
  meta::MetaConfig local = cfg;
  local.algorithm = meta::algorithm_from_name(name);
  return meta::task_grad(meta::bind_task(spec, task), theta, local);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Meta-learning of initializations with adjoint gradient-flow ODEs";

  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  py::class_<model::MlpSpec>(m, "MlpSpec")
      .def(py::init([](std::vector<int> layer_sizes, std::uint64_t seed) {
             model::MlpSpec spec;
             spec.layer_sizes = std::move(layer_sizes);
             spec.seed = seed;
             spec.validate();
             return spec;
           }),
           py::arg("layer_sizes"), py::arg("seed") = 0)
      .def_readonly("layer_sizes", &model::MlpSpec::layer_sizes)
      .def_readonly("seed", &model::MlpSpec::seed)
      .def_property_readonly("param_count", &model::MlpSpec::param_count);

  py::class_<model::Dataset>(m, "Dataset")
      .def(py::init([](Eigen::MatrixXd inputs, Eigen::MatrixXd targets) {
             model::Dataset d{std::move(inputs), std::move(targets)};
             d.validate();
             return d;
           }),
           py::arg("inputs"), py::arg("targets"))
      .def_readonly("inputs", &model::Dataset::inputs)
      .def_readonly("targets", &model::Dataset::targets);

  py::class_<model::Task>(m, "Task")
      .def(py::init([](model::Dataset train, model::Dataset val, std::string id) {
             return model::Task{std::move(train), std::move(val), std::move(id)};
           }),
           py::arg("train"), py::arg("val"), py::arg("id") = "")
      .def_readonly("train", &model::Task::train)
      .def_readonly("val", &model::Task::val)
      .def_readonly("id", &model::Task::id);

  py::class_<meta::MetaConfig>(m, "MetaConfig")
      .def(py::init<>())
      .def_readwrite("inner_step", &meta::MetaConfig::inner_step)
      .def_readwrite("outer_lr", &meta::MetaConfig::outer_lr)
      .def_readwrite("batch_size", &meta::MetaConfig::batch_size)
      .def_readwrite("max_meta_iters", &meta::MetaConfig::max_meta_iters)
      .def_readwrite("stop_tol", &meta::MetaConfig::stop_tol)
      .def_readwrite("horizon", &meta::MetaConfig::horizon)
      .def_readwrite("grid_step", &meta::MetaConfig::grid_step)
      .def_readwrite("inner_steps", &meta::MetaConfig::inner_steps)
      .def_readwrite("prox_strength", &meta::MetaConfig::prox_strength)
      .def_readwrite("cg_steps", &meta::MetaConfig::cg_steps)
      .def_readwrite("rtol", &meta::MetaConfig::rtol)
      .def_readwrite("atol", &meta::MetaConfig::atol)
      .def_property(
          "algorithm",
          [](const meta::MetaConfig& c) { return std::string(meta::algorithm_name(c.algorithm)); },
          [](meta::MetaConfig& c, const std::string& name) {
            c.algorithm = meta::algorithm_from_name(name);
          });

  py::class_<meta::AdjointResult>(m, "AdjointResult")
      .def_readonly("grad", &meta::AdjointResult::grad)
      .def_readonly("val_loss", &meta::AdjointResult::val_loss)
      .def_readonly("forward_steps", &meta::AdjointResult::forward_steps)
      .def_readonly("grad_calls", &meta::AdjointResult::grad_calls)
      .def_readonly("hvp_calls", &meta::AdjointResult::hvp_calls)
      .def_readonly("peak_state_floats", &meta::AdjointResult::peak_state_floats);

  py::class_<meta::MetaIterLog>(m, "MetaIterLog")
      .def_readonly("iter", &meta::MetaIterLog::iter)
      .def_readonly("mean_val_loss", &meta::MetaIterLog::mean_val_loss)
      .def_readonly("grad_norm", &meta::MetaIterLog::grad_norm)
      .def_readonly("wall_ms", &meta::MetaIterLog::wall_ms)
      .def_readonly("grad_calls", &meta::MetaIterLog::grad_calls)
      .def_readonly("hvp_calls", &meta::MetaIterLog::hvp_calls)
      .def_readonly("peak_state_floats", &meta::MetaIterLog::peak_state_floats);

  m.def("init_params", &model::init_params, py::arg("spec"));
  m.def("predict", &model::predict, py::arg("spec"), py::arg("u"), py::arg("x"));
  m.def("predict_all", &model::predict_all, py::arg("spec"), py::arg("u"), py::arg("inputs"));
  m.def("mse_loss", &model::mse_loss, py::arg("spec"), py::arg("u"), py::arg("data"));

  m.def(
      "mse_grad",
      [](const model::MlpSpec& spec, const model::Dataset& data, const Eigen::VectorXd& u) {
        return ad::grad(model::MlpLossField(spec, data), u);
      },
      py::arg("spec"), py::arg("data"), py::arg("u"),
      py::call_guard<py::gil_scoped_release>());
  m.def("dynamics_hvp", &model::dynamics_hvp, py::arg("spec"), py::arg("data"), py::arg("u"),
        py::arg("v"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "sample_synthetic_task",
      [](const std::string& family, std::uint64_t seed, int n_shot, int n_val) {
        std::mt19937_64 rng(seed);
        return tasks::sample_synthetic_task(family_from_string(family), rng, n_shot, n_val);
      },
      py::arg("family"), py::arg("seed"), py::arg("n_shot"), py::arg("n_val"));

  m.def("cosmixture_value",
        [](double amplitude, double omega, double phase, double x1, double x2) {
          return tasks::cosmixture_value({amplitude, omega, phase}, x1, x2);
        });
  m.def("alpine_value", [](double phase1, double phase2, double x1, double x2) {
    return tasks::alpine_value({phase1, phase2}, x1, x2);
  });

  m.def("task_grad", &run_estimator, py::arg("spec"), py::arg("task"), py::arg("theta"),
        py::arg("cfg"), py::arg("algorithm"), py::call_guard<py::gil_scoped_release>(),
        "Per-task meta-gradient: algorithm in {amaml, maml, fomaml, reptile, imaml}");

  m.def(
      "nrmse",
      [](const Eigen::VectorXd& pred, const Eigen::VectorXd& truth, const std::string& norm) {
        return metrics::nrmse(pred, truth, metrics::normalizer_from_name(norm));
      },
      py::arg("pred"), py::arg("truth"), py::arg("normalizer") = "mean_abs");

  m.def(
      "adaptation_curve",
      [](const model::MlpSpec& spec, const Eigen::VectorXd& theta,
         const std::vector<model::Task>& test_tasks, int epochs_max, double alpha,
         int checkpoint_every, int threads) {
        const auto curve = metrics::adaptation_curve(spec, theta, test_tasks, epochs_max, alpha,
                                                     checkpoint_every, threads);
        return std::make_tuple(curve.epochs, curve.nrmse_mean, curve.nrmse_std);
      },
      py::arg("spec"), py::arg("theta"), py::arg("test_tasks"), py::arg("epochs_max"),
      py::arg("alpha"), py::arg("checkpoint_every") = 10, py::arg("threads") = 1,
      py::call_guard<py::gil_scoped_release>());

  m.def(
      "meta_train_synthetic",
      [](const std::string& family, int shots, int vals, std::vector<int> hidden,
         std::uint64_t seed, const meta::MetaConfig& cfg, int threads) {
        experiment::ExperimentConfig ec;
        ec.family = family;
        ec.shots = shots;
        ec.vals = vals;
        ec.hidden = std::move(hidden);
        ec.seed = seed;
        ec.meta = cfg;
        const auto env = experiment::TaskEnvironment::create(ec);
        const Eigen::VectorXd theta0 = model::init_params(env.spec);
        auto result = meta::meta_train(env.meta_task_source(), theta0, cfg, threads);
        return std::make_tuple(theta0, result.theta, result.log);
      },
      py::arg("family"), py::arg("shots"), py::arg("vals"), py::arg("hidden"), py::arg("seed"),
      py::arg("cfg"), py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>(),
      "Meta-train on a synthetic family; returns (theta0, theta, per-iteration log)");

  m.attr("__version__") = "0.1.0";
}

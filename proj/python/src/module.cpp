#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ocsvm_cpd/calibration.hpp"
#include "ocsvm_cpd/dataset.hpp"
#include "ocsvm_cpd/de.hpp"
#include "ocsvm_cpd/detect.hpp"
#include "ocsvm_cpd/errors.hpp"
#include "ocsvm_cpd/io.hpp"
#include "ocsvm_cpd/svm.hpp"

namespace py = pybind11;
using namespace ocsvm_cpd;

namespace {

using InArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const InArray& a, const char* what) {
    if (a.ndim() != 2) throw std::invalid_argument(std::string(what) + " must be a 2-D array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    const double* src = a.data();
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = src[i * m.cols() + j];
    return m;
}

py::array_t<double> to_array(const Matrix& m) {
    py::array_t<double> out({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), out.mutable_data());
    return out;
}

template <class T>
py::array_t<T> to_array(const std::vector<T>& v) {
    py::array_t<T> out(v.size());
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

// Cycle indices go out as signed integers so differences behave in numpy.
py::array_t<std::int64_t> to_index_array(const std::vector<std::size_t>& v) {
    return to_array(std::vector<std::int64_t>(v.begin(), v.end()));
}

std::vector<double> decision_function(const TrainedModel& model, const InArray& x) {
    const auto m = to_matrix(x, "X");
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = decision_value(model, m.row(i));
    return out;
}

py::list trace_list(const std::vector<GenerationSummary>& trace) {
    py::list out;
    for (const auto& g : trace)
        out.append(py::dict(py::arg("generation") = g.generation, py::arg("best_loss") = g.best_loss,
                            py::arg("mean_loss") = g.mean_loss, py::arg("evaluations") = g.evaluations));
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "One-class SVM change-point detection with self-calibrated hypotheses";

    py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<CalibrationError>(m, "CalibrationError", PyExc_RuntimeError);
    py::register_exception<ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);

    py::class_<TrainedModel>(m, "Model")
        .def_readonly("gamma", &TrainedModel::gamma)
        .def_readonly("nu", &TrainedModel::nu)
        .def_readonly("offset_b", &TrainedModel::offset_b)
        .def_property_readonly("alphas", [](const TrainedModel& t) { return to_array(t.alphas); })
        .def_property_readonly("support_vectors", [](const TrainedModel& t) { return to_array(t.support_vectors); })
        .def("decision_function", [](const TrainedModel& t, const InArray& x) { return to_array(decision_function(t, x)); },
             py::arg("X"))
        .def(
            "predict",
            [](const TrainedModel& t, const InArray& x) {
                const auto m = to_matrix(x, "X");
                std::vector<int> out(m.rows());
                for (std::size_t i = 0; i < m.rows(); ++i) out[i] = classify(t, m.row(i));
                return to_array(out);
            },
            py::arg("X"), "+1 for normal rows, -1 for outliers")
        .def("dual_objective", &dual_objective)
        .def("to_json", [](const TrainedModel& t) { return to_json(t).dump(2); })
        .def_static("from_json", [](const std::string& text) { return model_from_json(Json::parse(text)); },
                    py::arg("text"))
        .def_static("load", [](const std::string& path) { return load_model_file(path); }, py::arg("path"),
                    "Reads a model or calibration result file")
        .def("__repr__", [](const TrainedModel& t) {
            return "<Model gamma=" + format_double(t.gamma) + " nu=" + format_double(t.nu) +
                   " support_vectors=" + std::to_string(t.alphas.size()) + ">";
        });

    m.def("rbf_kernel",
          [](const std::vector<double>& x, const std::vector<double>& y, double gamma) {
              if (x.size() != y.size()) throw std::invalid_argument("x and y differ in length");
              return rbf_kernel(x, y, gamma);
          },
          py::arg("x"), py::arg("y"), py::arg("gamma"));

    m.def(
        "train_ocsvm",
        [](const InArray& points, double nu, double gamma, double kkt_tol, std::size_t max_iter) {
            const auto pts = to_matrix(points, "points");
            SmoOptions o;
            o.kkt_tol = kkt_tol;
            o.max_iter = max_iter;
            py::gil_scoped_release release;
            return train_ocsvm(pts, nu, gamma, o);
        },
        py::arg("points"), py::arg("nu"), py::arg("gamma"), py::arg("kkt_tol") = 1e-3,
        py::arg("max_iter") = std::size_t{10'000'000});

    m.def(
        "qp_reference_solve",
        [](const InArray& points, double nu, double gamma) { return qp_reference_solve(to_matrix(points, "points"), nu, gamma); },
        py::arg("points"), py::arg("nu"), py::arg("gamma"), "Dense reference solver for n <= 50");

    m.def(
        "log_loss",
        [](const std::vector<int>& labels, const std::vector<double>& probabilities, double eps) {
            return log_loss(labels, probabilities, eps);
        },
        py::arg("labels"), py::arg("probabilities"), py::arg("eps") = 1e-7);

    m.def(
        "smooth_labels",
        [](const std::vector<int>& labels, std::size_t window) { return to_array(smooth_labels(labels, window)); },
        py::arg("labels"), py::arg("window"));

    m.def(
        "infer_change_point",
        [](const std::vector<int>& labels, double eps) {
            const auto cp = infer_change_point(labels, eps);
            return py::make_tuple(cp.change_cycle, to_array(cp.loss_curve));
        },
        py::arg("labels"), py::arg("eps") = 1e-7, "Returns (change_cycle, loss_curve)");

    m.def(
        "detect",
        [](const TrainedModel& model, const InArray& series, std::size_t window, double eps) {
            const auto rows = to_matrix(series, "series");
            const auto labels = smooth_labels(predict_normalized(model, rows), window);
            const auto cp = infer_change_point(labels, eps);
            const double T = static_cast<double>(labels.size());
            return py::dict(py::arg("change_cycle") = cp.change_cycle,
                            py::arg("life_fraction") = static_cast<double>(cp.change_cycle) / T,
                            py::arg("labels") = to_array(labels), py::arg("loss_curve") = to_array(cp.loss_curve));
        },
        py::arg("model"), py::arg("series"), py::arg("window") = 1, py::arg("eps") = 1e-7,
        "Change point of one already-normalized series (T x d)");

    m.def(
        "de_minimize",
        [](const std::function<double(py::array_t<double>)>& func, const std::vector<std::pair<double, double>>& bounds,
           std::size_t population, std::size_t generations, std::uint64_t seed, const std::string& strategy,
           double f_min, double f_max, double cr, std::optional<double> tolerance, std::size_t threads) {
            DEConfig c;
            for (const auto& [lo, hi] : bounds) c.bounds.push_back({lo, hi});
            c.population = population;
            c.generations = generations;
            c.seed = seed;
            c.strategy = de_strategy_from_string(strategy);
            c.f_min = f_min;
            c.f_max = f_max;
            c.cr = cr;
            c.tolerance = tolerance;
            c.threads = threads;
            const Objective objective = [&](std::span<const double> x) {
                py::gil_scoped_acquire gil;
                return func(to_array(std::vector<double>(x.begin(), x.end())));
            };
            DEResult r;
            {
                py::gil_scoped_release release;
                r = de_run(objective, c);
            }
            py::list trace;
            for (const auto& g : r.trace.generations)
                trace.append(py::dict(py::arg("generation") = g.generation, py::arg("best_value") = g.best_value,
                                      py::arg("mean_value") = g.mean_value, py::arg("evaluations") = g.evaluations,
                                      py::arg("best_vector") = to_array(g.best_vector)));
            return py::dict(py::arg("x") = to_array(r.best), py::arg("fun") = r.best_value, py::arg("trace") = trace,
                            py::arg("warnings") = r.warnings);
        },
        py::arg("func"), py::arg("bounds"), py::arg("population") = 15, py::arg("generations") = 100,
        py::arg("seed") = 0, py::arg("strategy") = "best1bin", py::arg("f_min") = 0.5, py::arg("f_max") = 1.0,
        py::arg("cr") = 0.7, py::arg("tolerance") = py::none(), py::arg("threads") = 1,
        "Differential evolution; NaN or raising objectives count as +inf");

    m.def(
        "generate_synthetic",
        [](std::size_t units, std::size_t dim, std::size_t t_min, std::size_t t_max, double rho_min, double rho_max,
           double drift, double ramp_power, double noise, std::uint64_t seed) {
            SyntheticConfig c;
            c.num_units = units;
            c.dim = dim;
            c.t_min = t_min;
            c.t_max = t_max;
            c.rho_min = rho_min;
            c.rho_max = rho_max;
            c.drift_magnitude = drift;
            c.ramp_power = ramp_power;
            c.noise_std = noise;
            const auto data = generate_synthetic(c, seed);
            py::list out;
            for (std::size_t i = 0; i < data.instances.size(); ++i)
                out.append(py::dict(py::arg("unit") = data.instances[i].unit_id,
                                    py::arg("sensors") = to_array(data.instances[i].sensors),
                                    py::arg("true_change_cycle") = data.truths[i].true_change_cycle,
                                    py::arg("cycles") = data.truths[i].cycles));
            return out;
        },
        py::arg("units") = 20, py::arg("dim") = 5, py::arg("t_min") = 150, py::arg("t_max") = 350,
        py::arg("rho_min") = 0.55, py::arg("rho_max") = 0.85, py::arg("drift") = 6.0, py::arg("ramp_power") = 0.5,
        py::arg("noise") = 1.0, py::arg("seed") = 0);

    m.def(
        "calibrate",
        [](const std::vector<InArray>& instances, double nu, std::size_t population, std::size_t generations,
           std::pair<double, double> log10_gamma, std::pair<double, double> rho, const std::string& strategy,
           std::uint64_t seed, double kkt_tol, double eps, std::size_t threads) {
            std::vector<Matrix> mats;
            for (const auto& a : instances) mats.push_back(to_matrix(a, "instance"));
            CalibrationConfig c;
            c.nu = nu;
            c.population = population;
            c.generations = generations;
            c.bounds = {log10_gamma.first, log10_gamma.second, rho.first, rho.second};
            c.strategy = de_strategy_from_string(strategy);
            c.seed = seed;
            c.smo.kkt_tol = kkt_tol;
            c.eps = eps;
            c.threads = threads;
            CalibrationResult r;
            {
                py::gil_scoped_release release;
                r = calibrate(mats, c);
            }
            return py::dict(py::arg("gamma") = r.best.gamma, py::arg("rho") = to_array(r.best.rho),
                            py::arg("change_cycles") = to_index_array(r.best.change_cycles), py::arg("loss") = r.loss,
                            py::arg("model") = r.model, py::arg("trace") = trace_list(r.trace),
                            py::arg("infeasible_candidates") = r.infeasible_candidates);
        },
        py::arg("instances"), py::arg("nu") = 0.05, py::arg("population") = 105, py::arg("generations") = 10,
        py::arg("log10_gamma") = std::pair{-2.0, 2.0}, py::arg("rho") = std::pair{0.5, 1.0},
        py::arg("strategy") = "best1bin", py::arg("seed") = 0, py::arg("kkt_tol") = 1e-3, py::arg("eps") = 1e-7,
        py::arg("threads") = 1, "Searches gamma and per-instance change points on already-normalized series");
}

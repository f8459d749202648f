#include "geoqhd/core_stats.hpp"
#include "geoqhd/data_io.hpp"
#include "geoqhd/error.hpp"
#include "geoqhd/geometric_test.hpp"
#include "geoqhd/glr_detector.hpp"
#include "geoqhd/pipeline.hpp"
#include "geoqhd/rmt_density.hpp"
#include "geoqhd/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace geoqhd;

namespace {

py::object optional_index(const std::optional<std::size_t>& v) {
    return v ? py::cast(*v) : py::none();
}

py::list event_list(const std::vector<DetectorEvent>& events) {
    py::list out;
    for (const auto& e : events) {
        py::dict d;
        d["time"] = e.time;
        d["type"] = to_string(e.type);
        d["variable"] = e.variable;
        d["value"] = e.value;
        out.append(d);
    }
    return out;
}

DataMatrix as_block(const Matrix& X) {
    DataMatrix d;
    d.values = X;
    for (Eigen::Index c = 0; c < X.cols(); ++c) d.variable_ids.push_back("X" + std::to_string(c));
    for (Eigen::Index r = 0; r < X.rows(); ++r) d.timestamps.push_back(std::to_string(r));
    return d;
}

py::dict partition_dict(const ClusterPartition& p) {
    py::dict d;
    d["medoids"] = p.medoids;
    d["assignments"] = p.assignments;
    d["cost"] = p.cost;
    return d;
}

py::list table_rows(const Table& t) {
    py::list rows;
    for (const auto& row : t.rows) {
        py::dict d;
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, std::monostate>) {
                        d[py::str(t.columns[i])] = py::none();
                    } else {
                        d[py::str(t.columns[i])] = v;
                    }
                },
                row[i]);
        }
        rows.append(d);
    }
    return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Sequential hub discovery in correlation streams";

    static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
    static py::exception<DataError> data(m, "DataError", base.ptr());
    static py::exception<ConfigError> config(m, "ConfigError", base.ptr());
    static py::exception<DomainError> domain(m, "DomainError", base.ptr());
    static py::exception<StateError> state(m, "StateError", base.ptr());
    static py::exception<IoError> io(m, "IoError", base.ptr());
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const DataError& e) {
            py::set_error(data, e.what());
        } catch (const ConfigError& e) {
            py::set_error(config, e.what());
        } catch (const DomainError& e) {
            py::set_error(domain, e.what());
        } catch (const StateError& e) {
            py::set_error(state, e.what());
        } catch (const IoError& e) {
            py::set_error(io, e.what());
        } catch (const Error& e) {
            py::set_error(base, e.what());
        }
    });

    m.def("p0", &p0, py::arg("rho"), py::arg("n"), "Null probability that |sample correlation| exceeds rho.");
    m.def(
        "local_density",
        [](double rho, int n, int p, double J) { return local_density(rho, DensityParams{n, p, J}); },
        py::arg("rho"), py::arg("n"), py::arg("p"), py::arg("J") = 1.0);
    m.def(
        "local_cdf", [](double rho, int n, int p, double J) { return local_cdf(rho, DensityParams{n, p, J}); },
        py::arg("rho"), py::arg("n"), py::arg("p"), py::arg("J") = 1.0);
    m.def(
        "global_density",
        [](double rho, int n, int p, double J) { return global_density(rho, DensityParams{n, p, J}); },
        py::arg("rho"), py::arg("n"), py::arg("p"), py::arg("J") = 1.0);
    m.def(
        "global_cdf", [](double rho, int n, int p, double J) { return global_cdf(rho, DensityParams{n, p, J}); },
        py::arg("rho"), py::arg("n"), py::arg("p"), py::arg("J") = 1.0);
    m.def("rho_for_j_magnitude", &rho_for_j_magnitude, py::arg("J"), py::arg("p"), py::arg("n"));

    m.def(
        "correlation_statistics",
        [](const Matrix& X) {
            const auto snap = correlation_of(X);
            return py::make_tuple(snap.R, local_statistics(snap.R), global_statistic(snap.R));
        },
        py::arg("X"), "Sample correlation of an n x p block, its per-variable statistics V_k and global V.");

    m.def("mle_J", &mle_J, py::arg("sum_p0"), py::arg("count"), py::arg("rate"), py::arg("epsilon"),
          py::arg("baseline") = 1.0);
    m.def(
        "glr_statistic",
        [](const std::vector<double>& history, double rate, double epsilon, std::size_t window_cap, double baseline) {
            const auto g = glr_statistic(history, rate, epsilon, window_cap, baseline);
            return py::make_tuple(g.value, g.j_hat, g.window_start);
        },
        py::arg("p0_history"), py::arg("rate"), py::arg("epsilon"), py::arg("window_cap") = 0,
        py::arg("baseline") = 1.0, "(G, J_hat, window_start) over a history of P_0 values.");

    py::class_<GlrDetector>(m, "Detector")
        .def(py::init([](std::size_t p, int n, double A_v, double A, double epsilon_v, double epsilon, std::size_t q,
                         bool use_global, std::size_t training_blocks) {
                 DetectorConfig c;
                 c.A_v = A_v;
                 c.A = A;
                 c.epsilon_v = epsilon_v;
                 c.epsilon = epsilon;
                 c.q = q;
                 c.use_global = use_global;
                 c.training_blocks = training_blocks;
                 return GlrDetector(p, n, c);
             }),
             py::arg("p"), py::arg("n"), py::arg("A_v") = 3.0, py::arg("A") = 3.0, py::arg("epsilon_v") = 0.1,
             py::arg("epsilon") = 0.1, py::arg("q") = 1, py::arg("use_global") = true, py::arg("training_blocks") = 0)
        .def(
            "step", [](GlrDetector& d, const Matrix& X) { return event_list(d.step(correlation_of(X))); },
            py::arg("X"), "Feeds one n x p block; returns the stopping-time events it triggered.")
        .def_property_readonly("steps", &GlrDetector::steps)
        .def_property_readonly("G", [](const GlrDetector& d) { return Vector(d.G()); })
        .def_property_readonly("j_hat", [](const GlrDetector& d) { return Vector(d.j_hat()); })
        .def_property_readonly("global_G", &GlrDetector::global_G)
        .def_property_readonly("tau_V", [](const GlrDetector& d) { return optional_index(d.tau_V()); })
        .def_property_readonly("tau_G", [](const GlrDetector& d) { return optional_index(d.tau_G()); })
        .def_property_readonly("tau_HB", [](const GlrDetector& d) { return optional_index(d.tau_HB()); })
        .def(
            "decision", [](const GlrDetector& d) { return top_q_decision(d.G(), d.config().q); },
            "Top-q hub decision on the current G.")
        .def(
            "distance_matrix",
            [](const GlrDetector& d, int label, double theta1, double gamma1, std::optional<Vector> dmd_z,
               bool minmax_scale) {
                auto in = DistanceInputs::from_detector(d);
                if (dmd_z) in.dmd_z = *dmd_z;
                const MetricWeights w{theta1, 1.0 - theta1, gamma1, 1.0 - gamma1};
                return distance_matrix(in, static_cast<MetricLabel>(label), w, DistanceOptions{QhdBase::GStatistic, minmax_scale})
                    .D;
            },
            py::arg("label"), py::arg("theta1") = 1.0, py::arg("gamma1") = 1.0, py::arg("dmd_z") = py::none(),
            py::arg("minmax_scale") = false, "Composite distance of label 1 (QHD), 2 (QCD+QHD) or 3 (TH).");

    m.def(
        "kmedoids", [](const Matrix& D, std::size_t K, std::uint64_t seed) { return partition_dict(kmedoids(D, K, seed)); },
        py::arg("D"), py::arg("K"), py::arg("seed") = 1);

    m.def(
        "generate_block",
        [](std::size_t p, int n, std::vector<std::size_t> hubs, double rho, std::size_t change_time, std::size_t m,
           std::uint64_t seed) {
            ChangeScenario s;
            s.p = p;
            s.n = n;
            s.hub_set = std::move(hubs);
            s.post_correlation = rho;
            s.change_time = change_time;
            s.horizon = std::max(change_time + 1, m);
            s.seed = seed;
            s.validate();
            return generate_block(s, m).values;
        },
        py::arg("p"), py::arg("n"), py::arg("hubs"), py::arg("rho"), py::arg("change_time"), py::arg("m"),
        py::arg("seed") = 1, "Block m of a planted-hub Gaussian stream.");

    m.def(
        "effective_config",
        [](const std::string& text, const std::vector<std::string>& overrides) {
            return emit_config(parse_config(text, overrides).config);
        },
        py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{});

    m.def(
        "detect",
        [](const std::string& prices_csv, const std::string& config_json, const std::vector<std::string>& overrides) {
            const auto parsed = parse_config(config_json, overrides);
            const auto panel = parse_panel(prices_csv, parsed.config.dataset);
            const auto run = run_detection(panel.prices, parsed.config);
            py::dict d;
            d["ids"] = run.ids;
            d["block_ends"] = run.block_ends;
            d["V"] = run.V;
            d["G"] = run.G;
            d["J_hat"] = run.J;
            d["tau_V"] = optional_index(run.tau_V);
            d["tau_G"] = optional_index(run.tau_G);
            d["tau_HB"] = optional_index(run.tau_HB);
            d["events"] = event_list(run.events);
            d["warnings"] = parsed.warnings;
            return d;
        },
        py::arg("prices_csv"), py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{},
        "GLR detection over the blocks of a price panel given as CSV text.");

    m.def(
        "benchmark",
        [](const std::string& config_json, const std::vector<std::string>& overrides) {
            const auto parsed = parse_config(config_json, overrides);
            const auto& c = parsed.config;
            ExperimentResult result;
            {
                py::gil_scoped_release release;
                result = run_experiment(c.scenario_family(), c.benchmark_grid(), c.benchmark.trials, c.seed,
                                        c.benchmark.threads);
            }
            py::dict d;
            d["results"] = table_rows(results_table(result.rows));
            d["verdicts"] = table_rows(verdict_table(result.verdicts));
            d["warnings"] = parsed.warnings;
            return d;
        },
        py::arg("config_json") = "{}", py::arg("overrides") = std::vector<std::string>{},
        "Monte Carlo benchmark: per-label result rows and ordering verdicts.");
}

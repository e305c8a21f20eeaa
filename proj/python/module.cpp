#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "cmodes/cli.hpp"
#include "cmodes/config.hpp"
#include "cmodes/errors.hpp"
#include "cmodes/linearization.hpp"
#include "cmodes/modal.hpp"
#include "cmodes/reduction.hpp"
#include "cmodes/sweeps.hpp"
#include "cmodes/timedomain.hpp"

namespace py = pybind11;
using nlohmann::json;
using namespace cmodes;

namespace {

BenchmarkConfig parse(const std::string& text) {
    if (text.empty()) return nominal_config();
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return config_from_json(j);
}

json mode_entry(const ModeReport& r, const std::vector<StateLabel>& states) {
    json p = json::object();
    for (std::size_t k = 0; k < states.size(); ++k) p[states[k].str()] = r.participation(static_cast<Eigen::Index>(k));
    json shapes = json::object();
    for (const auto& [name, s] : r.extended_shapes) shapes[name] = {s.real(), s.imag()};
    return {{"re", r.mode.lambda.real()},
            {"im", r.mode.lambda.imag()},
            {"freq_hz", r.mode.freq_hz},
            {"damping", r.mode.damping},
            {"coupling", to_string(r.coupling)},
            {"groups", r.groups},
            {"participation", p},
            {"shapes", shapes}};
}

std::string solve(const std::string& cfg) {
    const auto sys = assemble_benchmark(parse(cfg));
    return solve_operating_point(sys, sys.nominal_inputs()).to_json().dump();
}

py::tuple state_matrix(const std::string& cfg) {
    const auto sys = assemble_benchmark(parse(cfg));
    const auto lm = linearize(sys, solve_operating_point(sys, sys.nominal_inputs()));
    std::vector<std::string> names;
    for (const auto& s : lm.states) names.push_back(s.str());
    return py::make_tuple(lm.A, names);
}

std::string modes(const std::string& cfg, double threshold) {
    const auto sys = assemble_benchmark(parse(cfg));
    const auto lm = linearize(sys, solve_operating_point(sys, sys.nominal_inputs()));
    ModalOptions mo;
    mo.coupling_threshold = threshold;
    json out = json::array();
    for (const auto& r : analyze_modes(sys, lm, mo)) out.push_back(mode_entry(r, lm.states));
    return out.dump();
}

std::string sweep(const std::string& cfg, const std::string& param, const std::vector<double>& values) {
    SweepSpec spec;
    spec.parameter = param;
    spec.values = values;
    const auto r = run_sweep(parse(cfg), spec);
    json traj = json::array();
    for (const auto& t : r.trajectories) {
        json pts = json::array();
        for (std::size_t k = 0; k < t.point.size(); ++k) {
            const auto& m = r.mode_at(t, k);
            pts.push_back({{"value", r.points[t.point[k]].value},
                           {"re", m.lambda.real()},
                           {"im", m.lambda.imag()},
                           {"damping", m.damping},
                           {"flux", r.points[t.point[k]].flux[t.mode[k]]}});
        }
        traj.push_back(pts);
    }
    json failed = json::array();
    for (const auto& p : r.points)
        if (!p.ok) failed.push_back({{"value", p.value}, {"error", p.error}});
    return json{{"parameter", param}, {"values", values}, {"trajectories", traj}, {"failed", failed}}.dump();
}

py::dict simulate_py(const std::string& cfg, const std::vector<std::tuple<double, std::string, double>>& events,
                     double t_end, const std::vector<std::string>& channels, double max_step) {
    const auto sys = assemble_benchmark(parse(cfg));
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    Scenario sc;
    sc.t_end = t_end;
    sc.max_step = max_step;
    sc.outputs = channels;
    for (const auto& [t, in, v] : events) sc.events.push_back({t, in, v});
    Trace tr;
    {
        py::gil_scoped_release nogil;
        tr = simulate(sys, op, sc);
    }
    py::dict d;
    d["time"] = Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(tr.time.data(), static_cast<Eigen::Index>(tr.time.size())));
    for (std::size_t c = 0; c < tr.names.size(); ++c)
        d[py::str(tr.names[c])] = Eigen::VectorXd(
            Eigen::Map<const Eigen::VectorXd>(tr.data[c].data(), static_cast<Eigen::Index>(tr.data[c].size())));
    return d;
}

py::dict fit(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1) {
    const auto f = estimate_mode_from_trace(t, y, t0, t1);
    py::dict d;
    d["freq_hz"] = f.freq_hz;
    d["damping"] = f.damping;
    d["amplitude"] = f.amplitude;
    d["sigma"] = f.sigma;
    return d;
}

std::string reduce(const std::string& measurements, const std::string& generators, const std::string& inverter,
                   const std::string& machine, const std::optional<std::string>& between, double x_over_r,
                   const std::string& templ) {
    ReductionInput in;
    bool got_i = false, got_m = false;
    for (const auto& m : read_measurements_csv(measurements)) {
        if (m.location == inverter) in.sc_inverter = m, got_i = true;
        if (m.location == machine) in.sc_machine = m, got_m = true;
        if (between && m.location == *between) in.sc_between = m;
    }
    if (!got_i || !got_m) throw ValidationError("measurement table lacks the inverter or machine location");
    if (between && !in.sc_between) throw ValidationError("measurement table lacks location '" + *between + "'");
    in.generators = read_generators_csv(generators);
    in.x_over_r = x_over_r;
    return config_to_json(reduce_to_benchmark(in, parse(templ))).dump();
}

py::dict classify(std::complex<double> s) {
    py::dict d;
    d["angle_deg"] = std::arg(s) * 180.0 / M_PI;
    d["quadrant"] = to_string(quadrant_of(s));
    d["verdict"] = to_string(quadrant_classification(s));
    return d;
}

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"cmodes"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "coupling-mode analysis of a machine / inverter / grid benchmark";

    static py::exception<ValidationError> validation(m, "ValidationError", PyExc_ValueError);
    static py::exception<NumericalError> numerical(m, "NumericalError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const ValidationError& e) {
            py::set_error(validation, e.what());
        } catch (const NumericalError& e) {
            py::set_error(numerical, e.what());
        }
    });

    m.def("nominal_config", [] { return config_to_json(nominal_config()).dump(); });
    m.def("normalize_config", [](const std::string& c) { return config_to_json(parse(c)).dump(); });
    m.def("resolved_config", [](const std::string& c) { return resolved_config(parse(c)).dump(); });
    m.def("frequency_damping", [](std::complex<double> l) {
        const auto fd = mode_frequency_damping(l);
        return py::make_tuple(fd.freq_hz, fd.damping);
    });
    m.def("star_to_triangle", [](std::complex<double> z1, std::complex<double> z2, std::complex<double> zcc) {
        const auto u = UnitSystem::kPhysical;
        const auto t = star_to_triangle({ComplexImpedance::from_complex(z1, u), ComplexImpedance::from_complex(z2, u),
                                         ComplexImpedance::from_complex(zcc, u)});
        return py::make_tuple(t.z1p.z(), t.z2p.z(), t.z3p.z());
    });
    m.def("triangle_to_star", [](std::complex<double> z1p, std::complex<double> z2p, std::complex<double> z3p) {
        const auto u = UnitSystem::kPhysical;
        const auto s = triangle_to_star({ComplexImpedance::from_complex(z1p, u),
                                         ComplexImpedance::from_complex(z2p, u),
                                         ComplexImpedance::from_complex(z3p, u)});
        return py::make_tuple(s.z1.z(), s.z2.z(), s.zcc.z());
    });
    m.def("solve", &solve, py::arg("config") = "");
    m.def("state_matrix", &state_matrix, py::arg("config") = "");
    m.def("modes", &modes, py::arg("config") = "", py::arg("threshold") = 0.05);
    m.def("sweep", &sweep, py::arg("config"), py::arg("parameter"), py::arg("values"));
    m.def("simulate", &simulate_py, py::arg("config"), py::arg("events"), py::arg("t_end"), py::arg("channels"),
          py::arg("max_step") = 10e-6);
    m.def("fit_ringdown", &fit, py::arg("t"), py::arg("y"), py::arg("t0"), py::arg("t1"));
    m.def("reduce", &reduce, py::arg("measurements"), py::arg("generators"), py::arg("inverter") = "inverter",
          py::arg("machine") = "machine", py::arg("between") = py::none(), py::arg("x_over_r") = 10.0,
          py::arg("template") = "");
    m.def("classify", &classify, py::arg("s"));
    m.def("cli", &run_cli, py::arg("args"));
}

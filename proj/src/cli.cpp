#include "cmodes/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cmodes/config.hpp"
#include "cmodes/errors.hpp"
#include "cmodes/reduction.hpp"

namespace cmodes {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        const auto a = item.find_first_not_of(" \t");
        const auto b = item.find_last_not_of(" \t");
        if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
    }
    return out;
}

double to_number(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ValidationError(what + ": not a number: '" + s + "'");
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

BenchmarkConfig config_of(const StudyRequest& req) {
    return req.config ? load_config(*req.config) : nominal_config();
}

// Two-state style toy configs: {"linear_system": {"states": [...], "A": [[...]]}}.
std::optional<json> linear_system_json(const StudyRequest& req) {
    if (!req.config) return std::nullopt;
    std::ifstream f(*req.config);
    if (!f) throw ValidationError("cannot open " + req.config->string());
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ValidationError(req.config->string() + ": " + e.what());
    }
    if (!j.is_object() || !j.contains("linear_system")) return std::nullopt;
    return j["linear_system"];
}

struct Linearized {
    DynamicSystem sys;
    OperatingPoint op;
    LinearModel lm;
};

Linearized linear_toy(const json& ls) {
    if (!ls.contains("A") || !ls["A"].is_array()) throw ValidationError("linear_system.A: required matrix");
    const auto n = static_cast<Eigen::Index>(ls["A"].size());
    if (n == 0) throw ValidationError("linear_system.A: empty");
    Eigen::MatrixXd A(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = ls["A"][static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
            throw ValidationError(fmt::format("linear_system.A[{}]: expected {} numbers", i, n));
        for (Eigen::Index k = 0; k < n; ++k) {
            if (!row[static_cast<std::size_t>(k)].is_number())
                throw ValidationError(fmt::format("linear_system.A[{}][{}]: not a number", i, k));
            A(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
    }
    std::vector<StateLabel> states;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::string name = fmt::format("x{}", i);
        if (ls.contains("states")) {
            if (!ls["states"].is_array() || static_cast<Eigen::Index>(ls["states"].size()) != n)
                throw ValidationError("linear_system.states: expected one label per row of A");
            name = ls["states"][static_cast<std::size_t>(i)].get<std::string>();
        }
        const auto dot = name.find('.');
        states.push_back(dot == std::string::npos ? StateLabel{"toy", name}
                                                  : StateLabel{name.substr(0, dot), name.substr(dot + 1)});
    }
    DynamicSystem sys(states, {}, [A](std::span<const double> x, std::span<const double>, std::span<double> dx) {
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        Eigen::Map<Eigen::VectorXd>(dx.data(), static_cast<Eigen::Index>(dx.size())) = A * xv;
    });
    sys.set_initial_state(Eigen::VectorXd::Zero(n));
    sys.set_nominal_inputs(Eigen::VectorXd::Zero(0));
    OperatingPoint op;
    op.x = Eigen::VectorXd::Zero(n);
    op.u = Eigen::VectorXd::Zero(0);
    op.state_labels = states;
    LinearModel lm;
    lm.A = A;
    lm.B = Eigen::MatrixXd::Zero(n, 0);
    lm.states = states;
    lm.op = op;
    return {std::move(sys), std::move(op), std::move(lm)};
}

void write_sweep_outputs(const StudyRequest& req, const SweepResult& r, const fs::path& dir) {
    if (req.wants("csv")) {
        write_text(dir / "trajectories.csv", trajectory_csv(r));
        write_text(dir / "flux_table.csv", flux_table_csv(r, req.filter.min_freq_hz));
    }
    if (req.wants("svg")) write_text(dir / "root_locus.svg", root_locus_svg(r, req.filter.min_freq_hz));
    if (req.wants("json")) {
        json pts = json::array();
        for (const auto& p : r.points) {
            json q = {{"value", p.value}, {"ok", p.ok}};
            if (!p.ok) q["error"] = p.error;
            else q["residual_norm"] = p.op.residual_norm;
            pts.push_back(q);
        }
        write_json(dir / "sweep.json", {{"parameter", r.spec.parameter},
                                        {"context", r.context},
                                        {"points", pts},
                                        {"trajectories", r.trajectories.size()}});
    }
}

json sweep_summary(const SweepResult& r) {
    std::size_t failed = 0;
    for (const auto& p : r.points) failed += p.ok ? 0 : 1;
    return {{"context", r.context},
            {"points", r.points.size()},
            {"failed", failed},
            {"trajectories", r.trajectories.size()}};
}

const char* kind_of(ErrorCode c) { return c == ErrorCode::kValidation ? "validation" : "numerical"; }

}  // namespace

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> v;
    if (text.find(':') != std::string::npos) {
        const auto parts = split(text, ':');
        if (parts.size() != 3) throw ValidationError("grid '" + text + "': expected start:stop:count");
        const double a = to_number(parts[0], "grid start"), b = to_number(parts[1], "grid stop");
        const double n = to_number(parts[2], "grid count");
        if (n < 2 || n != std::floor(n)) throw ValidationError("grid count must be an integer >= 2");
        for (int i = 0; i < static_cast<int>(n); ++i) v.push_back(a + (b - a) * i / (n - 1));
    } else {
        const auto parts = split(text, ',');
        if (parts.size() != static_cast<std::size_t>(std::count(text.begin(), text.end(), ',')) + 1)
            throw ValidationError("grid '" + text + "' has an empty entry");
        for (const auto& p : parts) v.push_back(to_number(p, "grid value"));
    }
    if (v.empty()) throw ValidationError("empty grid");
    return v;
}

InputEvent parse_event(const std::string& text) {
    const auto colon = text.find(':');
    const auto eq = text.find('=');
    if (colon == std::string::npos || eq == std::string::npos || eq < colon)
        throw ValidationError("event '" + text + "': expected <t>:<input>=<value>");
    return {to_number(text.substr(0, colon), "event time"), text.substr(colon + 1, eq - colon - 1),
            to_number(text.substr(eq + 1), "event value")};
}

cplx parse_complex(const std::string& text) {
    const auto p = split(text, ',');
    if (p.size() != 2) throw ValidationError("'" + text + "': expected re,im");
    return {to_number(p[0], "real part"), to_number(p[1], "imaginary part")};
}

json cmd_modes(const StudyRequest& req) {
    const auto toy = linear_system_json(req);
    std::optional<BenchmarkConfig> cfg;
    std::optional<Linearized> L;
    if (toy) {
        L = linear_toy(*toy);
    } else {
        cfg = config_of(req);
        auto sys = assemble_benchmark(*cfg);
        auto op = solve_operating_point(sys, sys.nominal_inputs());
        auto lm = linearize(sys, op);
        L = Linearized{std::move(sys), std::move(op), std::move(lm)};
    }
    ModalOptions mo;
    mo.coupling_threshold = req.threshold_pct / 100.0;
    auto reports = analyze_modes(L->sys, L->lm, mo);

    for (const auto& path : req.sensitivity_params) {
        if (!cfg) throw ValidationError("--sensitivity needs a benchmark config");
        const double p0 = get_parameter(*cfg, path);
        const double dp = 1e-4 * std::max(std::abs(p0), 1e-3);
        const Eigen::MatrixXd dA = parameter_jacobian(config_factory(*cfg, path), p0, dp, L->op);
        for (auto& r : reports) r.sensitivities[path] = eigenvalue_sensitivity(dA, r.mode);
    }

    fs::create_directories(req.out);
    const auto& states = L->lm.states;
    json modes = json::array();
    std::size_t shown = 0, coupling = 0;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (!passes(r, req.filter)) continue;
        ++shown;
        coupling += r.coupling == CouplingClass::kCoupling ? 1 : 0;
        json m = mode_json(r);
        m["index"] = i;
        modes.push_back(m);
        const std::string stem = fmt::format("mode_{:02}", i);
        if (req.wants("csv")) {
            write_text(req.out / "participation" / (stem + ".csv"), participation_csv(states, r));
            if (!r.extended_shapes.empty()) write_text(req.out / "shapes" / (stem + ".csv"), shapes_csv(r));
        }
        if (req.wants("svg")) {
            write_text(req.out / "participation" / (stem + ".svg"), participation_svg(states, r));
            if (!r.extended_shapes.empty())
                write_text(req.out / "shapes" / (stem + ".svg"),
                           compass_svg(r.extended_shapes, fmt::format("mode {}: f = {:.4g} Hz, zeta = {:.3g}%", i,
                                                                      r.mode.freq_hz, 100 * r.mode.damping)));
        }
    }
    if (req.wants("csv")) write_text(req.out / "modes.csv", modes_csv(reports, req.filter));
    if (req.wants("json")) {
        write_json(req.out / "modes.json", modes);
        if (cfg) {
            write_json(req.out / "operating_point.json", L->op.to_json());
            write_json(req.out / "config.resolved.json", resolved_config(*cfg));
        }
    }
    return {{"modes", shown}, {"coupling_modes", coupling}, {"states", states.size()}, {"out", req.out.string()}};
}

json cmd_sweep(const StudyRequest& req) {
    if (req.param.empty() || req.grid.empty()) throw ValidationError("sweep needs --param <path>=<grid>");
    const auto base = config_of(req);
    SweepSpec spec;
    spec.parameter = req.param;
    spec.values = req.grid;
    spec.tracking_substeps = req.substeps;
    spec.sensitivities = !req.sensitivity_params.empty();
    spec.validate();

    const std::vector<std::string> contexts = req.contexts.empty() ? std::vector<std::string>{""} : req.contexts;
    std::vector<SweepResult> results;
    json summary = json::array();
    for (std::size_t c = 0; c < contexts.size(); ++c) {
        const auto cfg = contexts[c].empty() ? base : apply_context(base, contexts[c]);
        auto r = run_sweep(cfg, spec);
        r.context = contexts[c];
        write_sweep_outputs(req, r, contexts.size() == 1 ? req.out : req.out / fmt::format("context_{}", c));
        summary.push_back(sweep_summary(r));
        results.push_back(std::move(r));
    }
    json out = {{"parameter", req.param}, {"contexts", summary}};
    if (contexts.size() > 1) {
        TendencyOptions to;
        to.min_frequency_hz = req.filter.min_freq_hz;
        const auto verdicts = classify_tendency(results, to);
        if (req.wants("json")) write_json(req.out / "tendency.json", tendency_json(results, verdicts));
        std::size_t structural = 0;
        for (const auto& v : verdicts) structural += v.verdict == Tendency::kStructural ? 1 : 0;
        out["structural_modes"] = structural;
        out["classified_modes"] = verdicts.size();
    }
    return out;
}

json cmd_penetration(const StudyRequest& req) {
    if (req.grid.empty()) throw ValidationError("penetration needs --grid <P_inv values>");
    SweepSpec base;
    base.tracking_substeps = req.substeps;
    base.sensitivities = !req.sensitivity_params.empty();
    auto r = penetration_sweep(config_of(req), req.grid, req.p_total, base);
    write_sweep_outputs(req, r, req.out);
    return sweep_summary(r);
}

json cmd_simulate(const StudyRequest& req) {
    const auto cfg = config_of(req);
    const auto sys = assemble_benchmark(cfg);
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    json out;
    if (req.fit_mode) {
        if (req.events.size() != 1) throw ValidationError("--fit-mode needs exactly one --event");
        const auto lm = linearize(sys, op);
        const auto reports = analyze_modes(sys, lm);
        const ModeReport* target = nullptr;
        for (const auto& r : reports) {
            if (r.coupling != CouplingClass::kCoupling || r.mode.freq_hz < req.filter.min_freq_hz) continue;
            if (!target || r.mode.damping < target->mode.damping) target = &r;
        }
        if (!target) throw NumericalError("no coupling mode above the frequency floor");
        RingdownOptions ro;
        ro.max_step = req.max_step;
        ro.channels = req.channels;
        const auto rd = modal_ringdown(sys, op, target->mode, req.events.front(), ro);
        out["predicted"] = {{"freq_hz", target->mode.freq_hz}, {"damping", target->mode.damping}};
        out["fit"] = {{"freq_hz", rd.fit.freq_hz}, {"damping", rd.fit.damping}, {"rms_residual", rd.fit.rms_residual}};
        out["relative_error"] = {{"freq", rd.fit.freq_hz / target->mode.freq_hz - 1.0},
                                 {"damping", rd.fit.damping / target->mode.damping - 1.0}};
        out["window"] = {rd.t0, rd.t1};
        if (req.fit_channel) {
            try {
                const auto f = estimate_mode_from_trace(rd.trace, *req.fit_channel, rd.t0, rd.t1);
                out["channel_fit"] = {{"channel", *req.fit_channel}, {"freq_hz", f.freq_hz}, {"damping", f.damping}};
            } catch (const NumericalError& e) {
                out["channel_fit"] = {{"channel", *req.fit_channel}, {"error", e.what()}};
            }
        }
        if (req.wants("csv")) {
            std::string s = "t,z\n";
            for (std::size_t i = 0; i < rd.z.size(); ++i) s += num(rd.trace.time[i]) + "," + num(rd.z[i]) + "\n";
            write_text(req.out / "modal_coordinate.csv", s);
        }
        if (req.wants("json")) write_json(req.out / "ringdown.json", out);
        if (req.wants("svg") && !req.channels.empty()) write_text(req.out / "trace.svg", trace_svg(rd.trace, req.channels));
        return out;
    }
    Scenario sc;
    sc.events = req.events;
    sc.t_end = req.t_end;
    sc.max_step = req.max_step;
    sc.outputs = req.channels;
    const auto tr = simulate(sys, op, sc);
    if (req.wants("csv")) write_trace_csv(tr, (req.out / "trace.csv").string());
    if (req.wants("svg")) {
        const auto shown = req.channels.empty() ? std::vector<std::string>(tr.names.begin(),
                                                                           tr.names.begin() + std::min<std::ptrdiff_t>(4, static_cast<std::ptrdiff_t>(tr.names.size())))
                                                : req.channels;
        write_text(req.out / "trace.svg", trace_svg(tr, shown));
    }
    if (req.fit_channel) {
        const double t0 = req.events.empty() ? 0.0 : req.events.back().time + 0.5e-3;
        const auto f = estimate_mode_from_trace(tr, *req.fit_channel, t0, req.t_end);
        out["channel_fit"] = {{"channel", *req.fit_channel}, {"freq_hz", f.freq_hz}, {"damping", f.damping}};
    }
    out["samples"] = tr.size();
    out["channels"] = tr.names.size();
    if (req.wants("json")) write_json(req.out / "simulate.json", out);
    return out;
}

json cmd_reduce(const StudyRequest& req) {
    if (req.measurements.empty()) throw ValidationError("reduce needs --measurements <csv>");
    if (req.generators.empty()) throw ValidationError("reduce needs --generators <csv>");
    const auto ms = read_measurements_csv(req.measurements);
    auto find = [&](const std::string& loc) {
        for (const auto& m : ms)
            if (m.location == loc) return m;
        throw ValidationError(req.measurements.string() + ": no measurement at location '" + loc + "'");
    };
    ReductionInput in;
    in.sc_inverter = find(req.inverter_location);
    in.sc_machine = find(req.machine_location);
    if (req.between_location) in.sc_between = find(*req.between_location);
    in.z3_ohm = req.z3_ohm;
    in.generators = read_generators_csv(req.generators);
    in.x_over_r = req.x_over_r;
    const auto cfg = reduce_to_benchmark(in, config_of(req));
    fs::create_directories(req.out);
    save_config(cfg, req.out / "reduced_config.json");
    const auto t = cfg.triangle_impedances();
    return {{"config", (req.out / "reduced_config.json").string()},
            {"z1p_ohm", {t.z1p.r, t.z1p.x}},
            {"z2p_ohm", {t.z2p.r, t.z2p.x}},
            {"z3p_ohm", {t.z3p.r, t.z3p.x}},
            {"He", cfg.grid.He},
            {"Du", cfg.grid.Du}};
}

json cmd_classify(const StudyRequest& req) {
    if (req.values.empty()) throw ValidationError("classify needs at least one --value re,im");
    json rows = json::array();
    for (const auto& v : req.values) {
        const double ang = std::arg(v) * 180.0 / std::numbers::pi;
        json r = {{"value", {v.real(), v.imag()}},
                  {"angle_deg", ang},
                  {"quadrant", to_string(quadrant_of(v))},
                  {"verdict", to_string(quadrant_classification(v))}};
        if (req.lambda) r["dzeta_dp"] = damping_derivative(*req.lambda, v);
        rows.push_back(r);
    }
    if (req.wants("json")) write_json(req.out / "classify.json", rows);
    return rows;
}

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"Coupling-mode analysis of a machine / inverter / grid benchmark"};
    app.require_subcommand(1);
    StudyRequest req;
    std::string config, format = "csv,json,svg", param, grid, contexts, z3;
    std::vector<std::string> events, values;
    std::string lambda;

    auto common = [&](CLI::App* s) {
        s->add_option("--config", config, "scenario JSON (default: built-in nominal)");
        s->add_option("--out", req.out, "output directory");
        s->add_option("--format", format, "comma list of csv,json,svg");
        s->add_option("--min-freq", req.filter.min_freq_hz, "Hz");
    };
    auto* modes = app.add_subcommand("modes", "eigenvalues, participations, extended shapes");
    common(modes);
    modes->add_flag("--coupling-only", req.filter.coupling_only, "drop local modes");
    modes->add_option("--max-damping", req.filter.max_damping, "fraction");
    modes->add_option("--threshold", req.threshold_pct, "coupling participation threshold, %");
    modes->add_option("--sensitivity", req.sensitivity_params, "dotted parameter path for d(lambda)/dp");

    auto* sweep = app.add_subcommand("sweep", "parameter sweep with mode tracking");
    common(sweep);
    sweep->add_option("--param", param, "<path>=<grid>, grid as a,b,c or start:stop:count")->required();
    sweep->add_option("--contexts", contexts, "';'-separated operating contexts, e.g. 'P=0.2;P=0.9'");
    sweep->add_option("--substeps", req.substeps, "extra tracking points between grid values");
    sweep->add_flag("--sensitivities", [&](std::int64_t) { req.sensitivity_params = {"swept"}; },
                    "annotate trajectories with d(lambda)/dp");

    auto* pen = app.add_subcommand("penetration", "inverter share sweep at constant total generation");
    common(pen);
    pen->add_option("--grid", grid, "P_inv values")->required();
    pen->add_option("--p-total", req.p_total, "total generation, pu");
    pen->add_option("--substeps", req.substeps, "extra tracking points between grid values");

    auto* sim = app.add_subcommand("simulate", "time-domain run with setpoint events");
    common(sim);
    sim->add_option("--event", events, "<t>:<input>=<value>");
    sim->add_option("--t-end", req.t_end, "s");
    sim->add_option("--step", req.max_step, "integration step, s");
    sim->add_option("--channel", req.channels, "state label or channel name to record");
    sim->add_flag("--fit-mode", req.fit_mode, "fit the least-damped coupling mode ringdown");
    sim->add_option("--fit-channel", req.fit_channel, "also fit a damped cosine to this channel");

    auto* red = app.add_subcommand("reduce", "benchmark from short-circuit measurements and a generator table");
    common(red);
    red->add_option("--measurements", req.measurements, "CSV location,U_V,Icc_A")->required();
    red->add_option("--generators", req.generators, "CSV name,H_s,S_VA,droop")->required();
    red->add_option("--inverter-location", req.inverter_location);
    red->add_option("--machine-location", req.machine_location);
    red->add_option("--between-location", req.between_location, "measurement giving the inverter-machine path");
    red->add_option("--z3", z3, "inverter-machine impedance r,x in ohm");
    red->add_option("--x-over-r", req.x_over_r);

    auto* cls = app.add_subcommand("classify", "quadrant rule for eigenvalue sensitivities");
    common(cls);
    cls->add_option("--value", values, "re,im")->required();
    cls->add_option("--lambda", lambda, "eigenvalue re,im for the damping derivative");

    auto fail = [](ErrorCode code, const std::string& msg) {
        json d = {{"error", {{"code", static_cast<int>(code)}, {"kind", kind_of(code)}, {"message", msg}}}};
        std::cerr << d.dump() << std::endl;
        return static_cast<int>(code);
    };

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(ErrorCode::kValidation, e.what());
    }

    try {
        req.subcommand = app.get_subcommands().front()->get_name();
        if (!config.empty()) req.config = config;
        req.formats.clear();
        for (const auto& f : split(format, ',')) {
            if (f != "csv" && f != "json" && f != "svg") throw ValidationError("--format: unknown format '" + f + "'");
            req.formats.insert(f);
        }
        if (!param.empty()) {
            const auto eq = param.find('=');
            if (eq == std::string::npos) throw ValidationError("--param: expected <path>=<grid>");
            req.param = param.substr(0, eq);
            req.grid = parse_grid(param.substr(eq + 1));
        }
        if (!grid.empty()) req.grid = parse_grid(grid);
        if (!contexts.empty()) req.contexts = split(contexts, ';');
        for (const auto& e : events) req.events.push_back(parse_event(e));
        for (const auto& v : values) req.values.push_back(parse_complex(v));
        if (!lambda.empty()) req.lambda = parse_complex(lambda);
        if (!z3.empty()) {
            const cplx z = parse_complex(z3);
            req.z3_ohm = ComplexImpedance{z.real(), z.imag(), UnitSystem::kPhysical};
        }

        json res;
        if (req.subcommand == "modes") res = cmd_modes(req);
        else if (req.subcommand == "sweep") res = cmd_sweep(req);
        else if (req.subcommand == "penetration") res = cmd_penetration(req);
        else if (req.subcommand == "simulate") res = cmd_simulate(req);
        else if (req.subcommand == "reduce") res = cmd_reduce(req);
        else res = cmd_classify(req);
        std::cout << res.dump(2) << std::endl;
        return 0;
    } catch (const Error& e) {
        return fail(e.code(), std::string(req.subcommand) + ": " + e.what());
    } catch (const fs::filesystem_error& e) {
        return fail(ErrorCode::kValidation, std::string(req.subcommand) + ": " + e.what());
    }
}

}  // namespace cmodes

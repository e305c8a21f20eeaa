#include "cmodes/reduction.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "cmodes/equilibrium.hpp"
#include "cmodes/errors.hpp"
#include "cmodes/timedomain.hpp"

namespace cmodes {

void ShortCircuitMeasurement::validate() const {
    if (!(U > 0.0) || !std::isfinite(U)) throw ValidationError("measurement '" + location + "': U must be > 0");
    if (!(Icc > 0.0) || !std::isfinite(Icc))
        throw ValidationError("measurement '" + location + "': Icc must be > 0");
}

void GeneratorRecord::validate() const {
    if (!(H > 0.0) || !std::isfinite(H)) throw ValidationError("generator '" + name + "': H must be > 0");
    if (!(S > 0.0) || !std::isfinite(S)) throw ValidationError("generator '" + name + "': S must be > 0");
    if (droop && (!std::isfinite(*droop) || *droop < 0.0))
        throw ValidationError("generator '" + name + "': droop must be >= 0");
}

double impedance_from_short_circuit(const ShortCircuitMeasurement& m) {
    m.validate();
    return m.U / (m.Icc * std::sqrt(3.0));
}

double aggregate_inertia(const std::vector<GeneratorRecord>& gens) {
    if (gens.empty()) throw ValidationError("aggregate_inertia: empty generator list");
    double hs = 0.0, st = 0.0;
    for (const auto& g : gens) {
        g.validate();
        hs += g.H * g.S;
        st += g.S;
    }
    return hs / st;
}

double tune_equivalent_droop(const std::vector<GeneratorRecord>& gens, const PerUnitBase& base) {
    base.validate();
    double du = 0.0;
    for (const auto& g : gens) {
        g.validate();
        if (!g.droop) continue;
        if (*g.droop == 0.0) throw ValidationError("generator '" + g.name + "': zero droop gives infinite gain");
        du += (g.S / base.s_base) / *g.droop;
    }
    return du;
}

ComplexImpedance split_impedance(double magnitude, double x_over_r) {
    if (!(magnitude > 0.0)) throw ValidationError("impedance magnitude must be > 0");
    if (!(x_over_r > 0.0) || !std::isfinite(x_over_r)) throw ValidationError("X/R must be > 0");
    const double r = magnitude / std::hypot(1.0, x_over_r);
    return {r, r * x_over_r, UnitSystem::kPhysical};
}

BenchmarkConfig reduce_to_benchmark(const ReductionInput& in, const BenchmarkConfig& templ) {
    in.sc_inverter.validate();
    in.sc_machine.validate();
    const double u = in.sc_inverter.U;
    auto same_level = [&](const ShortCircuitMeasurement& m) {
        if (std::abs(m.U - u) > 1e-9 * u)
            throw ValidationError("measurement '" + m.location + "' is at a different voltage level");
    };
    same_level(in.sc_machine);

    ComplexImpedance z3;
    if (in.z3_ohm) {
        z3 = *in.z3_ohm;
        z3.unit_system = UnitSystem::kPhysical;
        if (!(z3.x > 0.0) || z3.r < 0.0) throw ValidationError("Z3: need X > 0 and R >= 0");
    } else if (in.sc_between) {
        same_level(*in.sc_between);
        z3 = split_impedance(impedance_from_short_circuit(*in.sc_between), in.x_over_r);
    } else {
        throw ValidationError(
            "no source for the inverter-machine impedance: pass z3_ohm or a third measurement (sc_between)");
    }

    BenchmarkConfig cfg = templ;
    cfg.name = templ.name + "-reduced";
    cfg.base.v_base = u;
    cfg.topology = Topology::kTriangle;
    cfg.extra_devices.clear();
    cfg.z1p = {std::nullopt, split_impedance(impedance_from_short_circuit(in.sc_inverter), in.x_over_r)};
    cfg.z2p = {std::nullopt, split_impedance(impedance_from_short_circuit(in.sc_machine), in.x_over_r)};
    cfg.z3p = {std::nullopt, z3};
    cfg.grid.He = aggregate_inertia(in.generators);
    cfg.grid.Du = tune_equivalent_droop(in.generators, cfg.base);
    cfg.validate();
    return cfg;
}

double simulate_short_circuit_current(const BenchmarkConfig& cfg, const std::string& node, double fault_conductance,
                                      double duration) {
    if (cfg.topology != Topology::kTriangle) throw ValidationError("short-circuit synthesis needs the triangle form");
    if (node != "gfl" && node != "sm") throw ValidationError("fault node must be 'gfl' or 'sm'");
    if (!(fault_conductance > 0.0)) throw ValidationError("fault conductance must be > 0");
    const double period = 1.0 / cfg.base.f_base;
    if (!(duration > 2.0 * period)) throw ValidationError("fault duration must exceed two cycles");

    // Short-circuit levels are quoted at nominal frequency; a light equivalent
    // grid would speed up during the fault and shift every reactance.
    BenchmarkConfig c = cfg;
    c.grid.He = 1e6;
    const auto sys = assemble_benchmark(c);
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    const std::string line = "line_" + node + "_grid";
    Scenario sc;
    sc.t_end = duration;
    sc.events = {{0.0, node + ".g_fault", fault_conductance}};
    sc.outputs = {line + ".i_line_d", line + ".i_line_q"};
    const auto tr = simulate(sys, op, sc);
    const auto mag = channel_magnitude(tr.channel(sc.outputs[0]), tr.channel(sc.outputs[1]));
    // Average over the last cycle to cancel the residual offset ripple.
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (tr.time[i] < duration - period) continue;
        acc += mag[i];
        ++n;
    }
    if (n == 0) throw NumericalError("short-circuit trace is empty");
    return acc / static_cast<double>(n) * cfg.base.i_base();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        const auto a = cell.find_first_not_of(" \t\r");
        const auto b = cell.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? std::string() : cell.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, const std::filesystem::path& path, std::size_t row, const char* col) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(path.string() + ":" + std::to_string(row) + ": column " + col + ": not a number: '" + s +
                              "'");
    }
}

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path,
                                                const std::vector<std::string>& header) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open " + path.string());
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool first = true;
    while (std::getline(f, line)) {
        if (line.empty() || line[0] == '#' || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_csv(line);
        if (first) {
            first = false;
            if (cells != header) {
                std::string want;
                for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
                throw ValidationError(path.string() + ": expected header '" + want + "'");
            }
            continue;
        }
        if (cells.size() != header.size())
            throw ValidationError(path.string() + ":" + std::to_string(rows.size() + 2) + ": expected " +
                                  std::to_string(header.size()) + " columns");
        rows.push_back(std::move(cells));
    }
    if (first) throw ValidationError(path.string() + ": empty file");
    return rows;
}

}  // namespace

std::vector<ShortCircuitMeasurement> read_measurements_csv(const std::filesystem::path& path) {
    std::vector<ShortCircuitMeasurement> out;
    std::size_t row = 1;
    for (const auto& c : read_rows(path, {"location", "U_V", "Icc_A"})) {
        ++row;
        ShortCircuitMeasurement m{c[0], parse_number(c[1], path, row, "U_V"), parse_number(c[2], path, row, "Icc_A")};
        m.validate();
        out.push_back(m);
    }
    return out;
}

std::vector<GeneratorRecord> read_generators_csv(const std::filesystem::path& path) {
    std::vector<GeneratorRecord> out;
    std::size_t row = 1;
    for (const auto& c : read_rows(path, {"name", "H_s", "S_VA", "droop"})) {
        ++row;
        GeneratorRecord g{c[0], parse_number(c[1], path, row, "H_s"), parse_number(c[2], path, row, "S_VA"),
                          std::nullopt};
        if (!c[3].empty()) g.droop = parse_number(c[3], path, row, "droop");
        g.validate();
        out.push_back(g);
    }
    return out;
}

}  // namespace cmodes

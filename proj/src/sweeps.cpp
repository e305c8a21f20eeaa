#include "cmodes/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "cmodes/errors.hpp"

namespace cmodes {

void SweepSpec::validate() const {
    if (parameter.empty()) throw ValidationError("sweep: parameter path is empty");
    if (values.empty()) throw ValidationError("sweep: empty value grid");
    const bool up = values.size() < 2 || values[1] > values[0];
    for (std::size_t i = 1; i < values.size(); ++i)
        if (up ? !(values[i] > values[i - 1]) : !(values[i] < values[i - 1]))
            throw ValidationError("sweep: value grid must be strictly monotone");
    if (!(mac_threshold > 0.0 && mac_threshold <= 1.0)) throw ValidationError("sweep: MAC threshold outside (0, 1]");
    if (tracking_substeps < 0) throw ValidationError("sweep: negative tracking_substeps");
}

std::vector<double> SweepResult::parameter_values(const Trajectory& t) const {
    std::vector<double> v;
    for (auto p : t.point) v.push_back(points[p].value);
    return v;
}
std::vector<double> SweepResult::damping(const Trajectory& t) const {
    std::vector<double> v;
    for (std::size_t k = 0; k < t.point.size(); ++k) v.push_back(mode_at(t, k).damping);
    return v;
}
std::vector<double> SweepResult::frequency(const Trajectory& t) const {
    std::vector<double> v;
    for (std::size_t k = 0; k < t.point.size(); ++k) v.push_back(mode_at(t, k).freq_hz);
    return v;
}
std::vector<double> SweepResult::flux(const Trajectory& t) const {
    std::vector<double> v;
    for (std::size_t k = 0; k < t.point.size(); ++k) v.push_back(points[t.point[k]].flux[t.mode[k]]);
    return v;
}

double mac(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    const double na = a.squaredNorm(), nb = b.squaredNorm();
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::norm(a.dot(b)) / (na * nb);
}

std::vector<ModeLink> track_modes(const std::vector<Mode>& prev, const std::vector<Mode>& next, double threshold) {
    struct Cand {
        double mac, dist;
        std::size_t i, j;
    };
    std::vector<Cand> c;
    for (std::size_t i = 0; i < prev.size(); ++i)
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (prev[i].phi.size() != next[j].phi.size()) throw ValidationError("track_modes: state orderings differ");
            const double m = mac(prev[i].phi, next[j].phi);
            if (m >= threshold) c.push_back({m, std::abs(prev[i].lambda - next[j].lambda), i, j});
        }
    std::sort(c.begin(), c.end(), [](const Cand& a, const Cand& b) {
        if (std::abs(a.mac - b.mac) > 1e-12) return a.mac > b.mac;
        return a.dist < b.dist;
    });
    std::vector<bool> used_i(prev.size()), used_j(next.size());
    std::vector<ModeLink> links;
    for (const auto& x : c) {
        if (used_i[x.i] || used_j[x.j]) continue;
        used_i[x.i] = used_j[x.j] = true;
        links.push_back({x.i, x.j, x.mac});
    }
    std::sort(links.begin(), links.end(), [](const ModeLink& a, const ModeLink& b) { return a.prev < b.prev; });
    return links;
}

namespace {

BenchmarkConfig point_config(const BenchmarkConfig& cfg, const SweepSpec& spec, double v) {
    BenchmarkConfig c = with_parameter(cfg, spec.parameter, v);
    if (spec.conservation == Conservation::kTotalGeneration) {
        const double p_sm = spec.p_total - v;
        if (p_sm < 0.0) throw ValidationError(fmt::format("penetration: P_sm = {:.9g} would be negative", p_sm));
        c.p_sm = p_sm;
    }
    return c;
}

struct Evaluated {
    bool ok = false;
    std::string error;
    OperatingPoint op;
    LinearModel lm;
    std::vector<Mode> modes;
};

Evaluated evaluate(const BenchmarkConfig& cfg, const SweepSpec& spec, double v,
                   const std::optional<Eigen::VectorXd>& guess, const std::vector<StateLabel>* expect) {
    Evaluated e;
    try {
        const DynamicSystem sys = assemble_benchmark(point_config(cfg, spec, v));
        if (expect && sys.states() != *expect) throw ValidationError("state layout changes across the sweep");
        try {
            e.op = solve_operating_point(sys, sys.nominal_inputs(), spec.newton, guess);
        } catch (const NumericalError&) {
            if (!guess) throw;
            e.op = solve_operating_point(sys, sys.nominal_inputs(), spec.newton);
        }
        LinearizeOptions lo = spec.linearize;
        lo.richardson = false;
        e.lm = linearize(sys, e.op, lo);
        e.modes = eigen_decompose(e.lm.A);
        e.ok = true;
    } catch (const Error& err) {
        e.error = err.what();
    }
    return e;
}

}  // namespace

SweepResult run_sweep(const BenchmarkConfig& cfg, const SweepSpec& spec) {
    spec.validate();
    (void)get_parameter(cfg, spec.parameter);
    SweepResult res;
    res.spec = spec;

    std::vector<Evaluated> chain;         // including tracking substeps
    std::vector<std::size_t> chain_point;  // reported point index, or npos
    constexpr auto npos = static_cast<std::size_t>(-1);
    std::optional<Eigen::VectorXd> guess;
    const std::vector<StateLabel>* layout = nullptr;
    for (std::size_t k = 0; k < spec.values.size(); ++k) {
        if (k > 0 && spec.tracking_substeps > 0) {
            const double a = spec.values[k - 1], b = spec.values[k];
            for (int s = 1; s <= spec.tracking_substeps; ++s) {
                const double v = a + (b - a) * s / (spec.tracking_substeps + 1);
                chain.push_back(evaluate(cfg, spec, v, guess, layout));
                chain_point.push_back(npos);
                if (chain.back().ok) guess = chain.back().op.x;
            }
        }
        chain.push_back(evaluate(cfg, spec, spec.values[k], guess, layout));
        chain_point.push_back(k);
        Evaluated& e = chain.back();
        SweepPoint pt;
        pt.value = spec.values[k];
        pt.ok = e.ok;
        pt.error = e.error;
        if (e.ok) {
            guess = e.op.x;
            if (res.states.empty()) res.states = e.lm.states;
            layout = &res.states;
            pt.op = e.op;
            pt.modes = e.modes;
            pt.participation = participation_factors(e.modes);
            for (std::size_t i = 0; i < e.modes.size(); ++i) {
                const Eigen::VectorXd p = pt.participation.col(static_cast<Eigen::Index>(i));
                pt.coupling.push_back(classify_coupling(res.states, p));
                pt.flux.push_back(flux_participation(res.states, p));
            }
            if (spec.sensitivities) {
                const double dp = 1e-3 * std::max(std::abs(pt.value), 1e-3);
                const BenchmarkConfig base = cfg;
                const SweepSpec sp = spec;
                const SystemFactory f = [base, sp](double p) { return assemble_benchmark(point_config(base, sp, p)); };
                ParameterJacobianOptions po;
                po.linearize = spec.linearize;
                po.newton = spec.newton;
                try {
                    const Eigen::MatrixXd dA = parameter_jacobian(f, pt.value, dp, e.op, po);
                    for (const auto& m : e.modes) pt.sensitivity.emplace_back(eigenvalue_sensitivity(dA, m));
                } catch (const Error& err) {
                    pt.sensitivity.assign(e.modes.size(), std::nullopt);
                    pt.error = err.what();
                }
            }
        }
        res.points.push_back(std::move(pt));
    }

    // Link consecutive successful chain entries; a trajectory is broken when
    // a link is missing.
    struct Live {
        std::size_t traj;
        double mac_since_report;
    };
    std::map<std::size_t, Live> live;
    std::size_t last = npos;
    for (std::size_t c = 0; c < chain.size(); ++c) {
        if (!chain[c].ok) continue;
        std::map<std::size_t, Live> next_live;
        if (last != npos) {
            for (const auto& l : track_modes(chain[last].modes, chain[c].modes, spec.mac_threshold)) {
                auto it = live.find(l.prev);
                if (it == live.end()) continue;
                next_live[l.next] = {it->second.traj, std::min(it->second.mac_since_report, l.mac)};
            }
        }
        if (chain_point[c] != npos) {
            const std::size_t p = chain_point[c];
            for (std::size_t j = 0; j < chain[c].modes.size(); ++j) {
                auto it = next_live.find(j);
                if (it == next_live.end()) {
                    res.trajectories.push_back({{p}, {j}, {1.0}});
                    next_live[j] = {res.trajectories.size() - 1, 1.0};
                } else {
                    auto& t = res.trajectories[it->second.traj];
                    t.point.push_back(p);
                    t.mode.push_back(j);
                    t.mac.push_back(it->second.mac_since_report);
                    it->second.mac_since_report = 1.0;
                }
            }
        }
        live = std::move(next_live);
        last = c;
    }
    return res;
}

SweepResult penetration_sweep(const BenchmarkConfig& cfg, const std::vector<double>& p_inv_grid, double p_total,
                              const SweepSpec& base) {
    for (double p : p_inv_grid)
        if (p_total - p < 0.0)
            throw ValidationError(fmt::format("penetration: P_inv = {:.9g} exceeds the total {:.9g}", p, p_total));
    SweepSpec spec = base;
    spec.parameter = "setpoints.P_inv";
    spec.values = p_inv_grid;
    spec.conservation = Conservation::kTotalGeneration;
    spec.p_total = p_total;
    BenchmarkConfig c = cfg;
    if (!c.has_gfl()) c.p_inv = 0.0;
    if (!c.has_sm()) c.p_sm = 0.0;
    return run_sweep(c, spec);
}

double ls_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ValidationError("slope needs at least two matched samples");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    if (sxx == 0.0) throw ValidationError("slope undefined for a constant abscissa");
    return sxy / sxx;
}

std::string to_string(Tendency t) {
    switch (t) {
        case Tendency::kStructural: return "structural";
        case Tendency::kNonStructural: return "non-structural";
        default: return "neutral";
    }
}

std::vector<TendencyVerdict> classify_tendency(const std::vector<SweepResult>& contexts, const TendencyOptions& opt) {
    if (contexts.size() < 2) throw ValidationError("tendency classification needs at least two contexts");
    const SweepResult& ref = contexts.front();
    auto slope_of = [&](const SweepResult& r, const Trajectory& t) -> std::optional<double> {
        if (t.point.size() < 2) return std::nullopt;
        return ls_slope(r.parameter_values(t), r.damping(t));
    };
    auto start_mode = [](const SweepResult& r, const Trajectory& t) -> const Mode& { return r.mode_at(t, 0); };

    std::vector<TendencyVerdict> out;
    for (std::size_t ti = 0; ti < ref.trajectories.size(); ++ti) {
        const Trajectory& t = ref.trajectories[ti];
        if (t.point.front() != 0 || t.point.size() < 2) continue;
        const Mode& m0 = start_mode(ref, t);
        if (m0.freq_hz < opt.min_frequency_hz) continue;
        TendencyVerdict v;
        v.trajectory = ti;
        v.lambda_start = m0.lambda;
        v.slopes.push_back(slope_of(ref, t));
        for (std::size_t c = 1; c < contexts.size(); ++c) {
            const SweepResult& r = contexts[c];
            double best = opt.match_mac;
            const Trajectory* match = nullptr;
            for (const auto& u : r.trajectories) {
                if (u.point.front() != 0) continue;
                if (r.states.size() != ref.states.size()) break;
                const double m = mac(m0.phi, start_mode(r, u).phi);
                if (m > best) {
                    best = m;
                    match = &u;
                }
            }
            v.slopes.push_back(match ? slope_of(r, *match) : std::nullopt);
        }
        const auto& grid = ref.spec.values;
        const double span = grid.empty() ? 1.0 : std::abs(grid.back() - grid.front());
        int pos = 0, neg = 0, flat = 0;
        for (const auto& s : v.slopes) {
            int sg = 0;
            if (s && std::abs(*s) * span >= opt.slope_tolerance) sg = *s > 0 ? 1 : -1;
            v.signs.push_back(sg);
            if (sg > 0) ++pos;
            else if (sg < 0) ++neg;
            else ++flat;
        }
        if (pos > 0 && neg > 0) v.verdict = Tendency::kNonStructural;
        else if (pos + neg > 0) {
            v.verdict = Tendency::kStructural;
            v.weak = flat > 0;
        }
        out.push_back(std::move(v));
    }
    return out;
}

BenchmarkConfig apply_context(const BenchmarkConfig& cfg, const std::string& context) {
    static const std::map<std::string, std::string> alias{
        {"P_inv", "setpoints.P_inv"}, {"P_sm", "setpoints.P_sm"}, {"lcc", "lines.lcc_km"},
        {"l1", "lines.l1_km"},        {"l2", "lines.l2_km"},      {"l3p", "lines.l3p_km"},
        {"Ki", "gfl.Ki"},             {"Kp", "gfl.Kp"}};
    BenchmarkConfig c = cfg;
    std::stringstream ss(context);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw ValidationError("context entry '" + item + "' is not key=value");
        const std::string key = item.substr(0, eq);
        double value = 0.0;
        try {
            std::size_t used = 0;
            value = std::stod(item.substr(eq + 1), &used);
            if (used != item.size() - eq - 1) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ValidationError("context entry '" + item + "' has a non-numeric value");
        }
        if (key == "P") {
            c = with_parameter(c, "setpoints.P_inv", value);
            c = with_parameter(c, "setpoints.P_sm", value);
            continue;
        }
        auto it = alias.find(key);
        c = with_parameter(c, it == alias.end() ? key : it->second, value);
    }
    return c;
}

}  // namespace cmodes

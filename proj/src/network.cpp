#include "cmodes/network.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>

#include "cmodes/errors.hpp"

namespace cmodes {

using cplx = std::complex<double>;

namespace {

void require_nonzero(const cplx& z, const char* what) {
    if (std::abs(z) == 0.0) throw ValidationError(std::string(what) + " impedance must be nonzero");
}

void require_same_units(std::initializer_list<ComplexImpedance> zs) {
    const auto u = zs.begin()->unit_system;
    for (const auto& z : zs)
        if (z.unit_system != u) throw ValidationError("impedance triple mixes physical and per-unit values");
}

}  // namespace

TriangleTriple star_to_triangle(const StarTriple& s) {
    require_same_units({s.z1, s.z2, s.zcc});
    const cplx z1 = s.z1.z(), z2 = s.z2.z(), zcc = s.zcc.z();
    require_nonzero(z1, "star z1");
    require_nonzero(z2, "star z2");
    require_nonzero(zcc, "star zcc");
    const cplx num = z1 * zcc + z2 * zcc + z1 * z2;
    const auto u = s.z1.unit_system;
    return {ComplexImpedance::from_complex(num / z2, u), ComplexImpedance::from_complex(num / z1, u),
            ComplexImpedance::from_complex(num / zcc, u)};
}

StarTriple triangle_to_star(const TriangleTriple& t) {
    require_same_units({t.z1p, t.z2p, t.z3p});
    const cplx a = t.z1p.z(), b = t.z2p.z(), c = t.z3p.z();
    const cplx sum = a + b + c;
    if (std::abs(sum) == 0.0) throw ValidationError("triangle impedances sum to zero");
    const auto u = t.z1p.unit_system;
    return {ComplexImpedance::from_complex(a * c / sum, u), ComplexImpedance::from_complex(b * c / sum, u),
            ComplexImpedance::from_complex(a * b / sum, u)};
}

std::vector<cplx> star_to_mesh(const std::vector<cplx>& star) {
    if (star.size() < 2) throw ValidationError("a star needs at least two branches");
    cplx ysum = 0.0;
    for (const auto& z : star) {
        require_nonzero(z, "star branch");
        ysum += 1.0 / z;
    }
    std::vector<cplx> mesh;
    for (std::size_t i = 0; i < star.size(); ++i)
        for (std::size_t j = i + 1; j < star.size(); ++j) mesh.push_back(star[i] * star[j] * ysum);
    return mesh;
}

ComplexImpedance LineData::per_km() const {
    if (!(z_ohm_per_km > 0.0) || !(x_over_r > 0.0)) throw ValidationError("line per-km data must be positive");
    if (z_is_resistance) return {z_ohm_per_km, z_ohm_per_km * x_over_r, UnitSystem::kPhysical};
    const double r = z_ohm_per_km / std::sqrt(1.0 + x_over_r * x_over_r);
    return {r, r * x_over_r, UnitSystem::kPhysical};
}

ComplexImpedance impedance_from_length(double length_km, const ComplexImpedance& per_km, const PerUnitBase& base) {
    if (!(length_km > 0.0)) throw ValidationError("line length must be positive");
    return to_per_unit({per_km.r * length_km, per_km.x * length_km, UnitSystem::kPhysical}, base);
}

ComplexImpedance to_per_unit(const ComplexImpedance& z, const PerUnitBase& base) {
    if (z.unit_system == UnitSystem::kPerUnit) return z;
    base.validate();
    const double zb = base.z_base();
    return {z.r / zb, z.x / zb, UnitSystem::kPerUnit};
}

ComplexImpedance BranchSpec::physical(const LineData& line) const {
    if (z_ohm) return *z_ohm;
    if (!length_km) throw ValidationError("branch needs a length or an explicit impedance");
    if (!(*length_km > 0.0)) throw ValidationError("line length must be positive");
    const auto pk = line.per_km();
    return {pk.r * *length_km, pk.x * *length_km, UnitSystem::kPhysical};
}

StarTriple BenchmarkConfig::star_impedances() const {
    if (topology == Topology::kStar) return {z1.physical(line), z2.physical(line), zcc.physical(line)};
    return triangle_to_star(triangle_impedances());
}

TriangleTriple BenchmarkConfig::triangle_impedances() const {
    if (topology == Topology::kTriangle) return {z1p.physical(line), z2p.physical(line), z3p.physical(line)};
    return star_to_triangle(star_impedances());
}

void BenchmarkConfig::validate() const {
    base.validate();
    sm.validate();
    avr.validate();
    gov.validate();
    gfl.validate();
    grid.validate();
    if (!has_sm() && !has_gfl() && extra_devices.empty())
        throw ValidationError("benchmark needs at least one device besides the equivalent grid");
    if (!(sm_terminal_shunt_r > 0.0)) throw ValidationError("modeling.sm_terminal_shunt_r must be positive");
    if (topology == Topology::kTriangle && !extra_devices.empty())
        throw ValidationError("extra devices are only supported on the star topology");
    auto check_branch = [&](const BranchSpec& b, const char* name) {
        const auto z = b.physical(line);
        if (z.r < 0.0) throw ValidationError(std::string("lines.") + name + ": resistance must be non-negative");
        if (!(z.x > 0.0)) throw ValidationError(std::string("lines.") + name + ": reactance must be positive");
    };
    if (topology == Topology::kStar) {
        check_branch(z1, "z1");
        check_branch(z2, "z2");
        check_branch(zcc, "zcc");
    } else {
        check_branch(z1p, "z1p");
        check_branch(z2p, "z2p");
        check_branch(z3p, "z3p");
    }
    for (const auto& e : extra_devices) {
        if (e.name.empty() || e.name == "sm" || e.name == "gfl" || e.name == "grid")
            throw ValidationError("extra device needs a unique name");
        check_branch(e.branch, e.name.c_str());
    }
}

// ---------------------------------------------------------------------------
// Network layout: Kron-reduce every device-less node.

NetworkLayout network_layout(const BenchmarkConfig& cfg) {
    cfg.validate();
    struct RawBranch {
        std::size_t a, b;
        cplx z;  // physical
    };
    std::vector<std::string> names;
    std::vector<bool> keep;
    auto add_node = [&](std::string n, bool k) {
        names.push_back(std::move(n));
        keep.push_back(k);
        return names.size() - 1;
    };
    const std::size_t n_gfl = add_node("gfl", cfg.has_gfl());
    const std::size_t n_sm = add_node("sm", cfg.has_sm());
    std::vector<RawBranch> raw;
    if (cfg.topology == Topology::kStar) {
        const std::size_t n_star = add_node("star", false);
        const std::size_t n_grid = add_node("grid", true);
        raw.push_back({n_gfl, n_star, cfg.z1.physical(cfg.line).z()});
        raw.push_back({n_sm, n_star, cfg.z2.physical(cfg.line).z()});
        raw.push_back({n_star, n_grid, cfg.zcc.physical(cfg.line).z()});
        for (const auto& e : cfg.extra_devices) {
            const std::size_t n = add_node(e.name, true);
            raw.push_back({n, n_star, e.branch.physical(cfg.line).z()});
        }
    } else {
        const std::size_t n_grid = add_node("grid", true);
        raw.push_back({n_gfl, n_grid, cfg.z1p.physical(cfg.line).z()});
        raw.push_back({n_sm, n_grid, cfg.z2p.physical(cfg.line).z()});
        raw.push_back({n_gfl, n_sm, cfg.z3p.physical(cfg.line).z()});
    }
    // Move the grid node behind the devices so the kept-node order is
    // (gfl, sm, extras..., grid).
    std::vector<std::size_t> order;
    std::size_t grid_idx = 0;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == "grid") grid_idx = i;
        else if (keep[i]) order.push_back(i);
    }
    order.push_back(grid_idx);

    const std::size_t n = names.size();
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (const auto& b : raw) {
        const cplx y = 1.0 / b.z;
        const auto a = static_cast<Eigen::Index>(b.a), c = static_cast<Eigen::Index>(b.b);
        Y(a, a) += y;
        Y(c, c) += y;
        Y(a, c) -= y;
        Y(c, a) -= y;
    }
    std::vector<Eigen::Index> kept, dropped;
    for (auto i : order) kept.push_back(static_cast<Eigen::Index>(i));
    for (std::size_t i = 0; i < n; ++i)
        if (!keep[i]) dropped.push_back(static_cast<Eigen::Index>(i));

    const auto nk = static_cast<Eigen::Index>(kept.size());
    const auto nd = static_cast<Eigen::Index>(dropped.size());
    Eigen::MatrixXcd Ykk(nk, nk), Ykd(nk, nd), Ydd(nd, nd);
    for (Eigen::Index i = 0; i < nk; ++i) {
        for (Eigen::Index j = 0; j < nk; ++j) Ykk(i, j) = Y(kept[i], kept[j]);
        for (Eigen::Index j = 0; j < nd; ++j) Ykd(i, j) = Y(kept[i], dropped[j]);
    }
    for (Eigen::Index i = 0; i < nd; ++i)
        for (Eigen::Index j = 0; j < nd; ++j) Ydd(i, j) = Y(dropped[i], dropped[j]);
    Eigen::MatrixXcd Yred = Ykk;
    if (nd > 0) {
        Eigen::FullPivLU<Eigen::MatrixXcd> lu(Ydd);
        if (!lu.isInvertible()) throw ValidationError("network has a floating internal node");
        Yred -= Ykd * lu.solve(Ykd.transpose());
    }

    NetworkLayout layout;
    for (auto k : kept) layout.nodes.push_back(names[static_cast<std::size_t>(k)]);
    const double scale = 1e-12 * Yred.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < nk; ++i) {
        for (Eigen::Index j = i + 1; j < nk; ++j) {
            const cplx yij = -Yred(i, j);
            if (std::abs(yij) <= scale) continue;
            const auto zpu = to_per_unit(ComplexImpedance::from_complex(1.0 / yij, UnitSystem::kPhysical), cfg.base);
            BranchInfo b;
            b.from = static_cast<std::size_t>(i);
            b.to = static_cast<std::size_t>(j);
            b.name = "line_" + layout.nodes[b.from] + "_" + layout.nodes[b.to];
            b.r = zpu.r;
            b.l = zpu.x;
            if (!(b.l > 0.0))
                throw ValidationError("branch " + b.name + " has non-positive inductance after reduction");
            if (b.r < -1e-12) throw ValidationError("branch " + b.name + " has negative resistance after reduction");
            b.r = std::max(b.r, 0.0);
            layout.branches.push_back(b);
        }
    }
    if (layout.branches.empty()) throw ValidationError("network has no branches");
    return layout;
}

// ---------------------------------------------------------------------------
// Assembled model

namespace {

struct SmSlot {
    std::string name;
    std::size_t node = 0;
    std::size_t x = 0;  // 7 machine + 3 control states
    std::size_t u_p = 0, u_vref = 0, u_fault = 0;
    SmCircuit circuit;
};

struct GflSlot {
    std::string name;
    std::size_t node = 0;
    std::size_t x = 0, x_pll = 0, x_pw = 0;
    std::size_t u_p = 0, u_q = 0, u_fault = 0;
};

struct BranchSlot {
    BranchInfo info;
    std::size_t x = 0;
};

class BenchmarkModel {
public:
    std::vector<SmSlot> sms;
    std::vector<GflSlot> gfls;
    std::vector<BranchSlot> branches;
    std::size_t grid_node = 0;
    std::size_t grid_x = 0;
    std::size_t u_pl = 0;
    std::size_t n_nodes = 0;
    std::size_t n_states = 0;
    double omega_b = 0.0;
    double g_shunt = 0.0;
    AvrParams avr;
    GovTurbineParams gov;
    GflParams gfl;
    EquGridParams grid;

    template <class T>
    struct Network {
        std::vector<DqPair<T>> v;        // node voltages
        std::vector<DqPair<T>> net_out;  // branch current leaving each node
        std::vector<DqPair<T>> i_sm;     // machine stator currents
    };

    template <class T>
    Network<T> solve_network(std::span<const T> x, std::span<const T> u) const {
        Network<T> net;
        net.v.assign(n_nodes, DqPair<T>{});
        net.net_out.assign(n_nodes, DqPair<T>{});
        for (const auto& b : branches) {
            const T id = x[b.x], iq = x[b.x + 1];
            net.net_out[b.info.from].d += id;
            net.net_out[b.info.from].q += iq;
            net.net_out[b.info.to].d -= id;
            net.net_out[b.info.to].q -= iq;
        }
        for (const auto& g : gfls) net.v[g.node] = {x[g.x + 2], x[g.x + 3]};
        net.v[grid_node] = {T(grid.V), T(0.0)};
        net.i_sm.reserve(sms.size());
        for (const auto& s : sms) {
            const SmState<T> xs = sm_state<T>(x, s.x);
            const DqPair<T> i = sm_stator_current(xs, s.circuit);
            net.i_sm.push_back(i);
            const T g = g_shunt + u[s.u_fault];
            net.v[s.node] = {(i.d - net.net_out[s.node].d) / g, (i.q - net.net_out[s.node].q) / g};
        }
        return net;
    }

    template <class T>
    static SmState<T> sm_state(std::span<const T> x, std::size_t o) {
        return {x[o], x[o + 1], x[o + 2], x[o + 3], x[o + 4], x[o + 5], x[o + 6]};
    }

    template <class T>
    void eval(std::span<const T> x, std::span<const T> u, std::span<T> dx) const {
        const T wf = x[grid_x];
        const Network<T> net = solve_network(x, u);

        for (const auto& b : branches) {
            const DqPair<T> i{x[b.x], x[b.x + 1]};
            const auto di = line_derivatives(i, net.v[b.info.from], net.v[b.info.to], b.info.r, b.info.l, wf, omega_b);
            dx[b.x] = di.d;
            dx[b.x + 1] = di.q;
        }

        for (const auto& g : gfls) {
            const std::size_t o = g.x;
            const GflState<T> xs{x[o], x[o + 1], x[o + 2], x[o + 3], x[o + 4], x[o + 5], x[o + 6], x[o + 7]};
            const PllState<T> xp{x[g.x_pll], x[g.x_pll + 1]};
            PowerLoopState<T> xw{x[g.x_pw], T(0.0)};
            if (gfl.has_power_filter()) xw.x_pmeas = x[g.x_pw + 1];
            GflInputs<T> in;
            in.i_out = net.net_out[g.node];
            in.omega_frame = wf;
            in.p_set = u[g.u_p];
            in.q_set = u[g.u_q];
            in.g_fault = u[g.u_fault];
            const auto r = gfl_derivatives(xs, xp, xw, in, gfl, omega_b);
            const auto& d = r.dxdt;
            dx[o] = d.isd;
            dx[o + 1] = d.isq;
            dx[o + 2] = d.vcd;
            dx[o + 3] = d.vcq;
            dx[o + 4] = d.gamma_currd;
            dx[o + 5] = d.gamma_currq;
            dx[o + 6] = d.vsdfilt;
            dx[o + 7] = d.vsqfilt;
            dx[g.x_pll] = r.pll.dxdt.x_pll_int;
            dx[g.x_pll + 1] = r.pll.dxdt.theta_pll;
            dx[g.x_pw] = r.dpower.x_droop_w;
            if (gfl.has_power_filter()) dx[g.x_pw + 1] = r.dpower.x_pmeas;
        }

        for (std::size_t k = 0; k < sms.size(); ++k) {
            const auto& s = sms[k];
            const SmState<T> xs = sm_state<T>(x, s.x);
            const AvrGovState<T> xc{x[s.x + 7], x[s.x + 8], x[s.x + 9]};
            const DqPair<T>& vt = net.v[s.node];
            const auto ctl = avr_governor_derivatives(xc, magnitude(vt), xs.omega - 1.0, u[s.u_vref], u[s.u_p], avr, gov);
            const auto r = sm_derivatives(xs, vt, wf, ctl.e_fd, ctl.p_m, s.circuit, omega_b);
            dx[s.x] = r.dxdt.theta;
            dx[s.x + 1] = r.dxdt.omega;
            dx[s.x + 2] = r.dxdt.psi_d;
            dx[s.x + 3] = r.dxdt.psi_q;
            dx[s.x + 4] = r.dxdt.psi_fd;
            dx[s.x + 5] = r.dxdt.psi_1d;
            dx[s.x + 6] = r.dxdt.psi_1q;
            dx[s.x + 7] = ctl.dxdt.gamma_avr;
            dx[s.x + 8] = ctl.dxdt.x_gov;
            dx[s.x + 9] = ctl.dxdt.x_turb;
        }

        const DqPair<T>& vg = net.v[grid_node];
        const DqPair<T>& out = net.net_out[grid_node];
        const T p_g = -(vg.d * out.d + vg.q * out.q);
        const auto r = equgrid_derivatives(EquGridState<T>{x[grid_x], x[grid_x + 1]}, p_g, u[u_pl], grid, omega_b);
        dx[grid_x] = r.dxdt.omega_f;
        dx[grid_x + 1] = r.dxdt.theta_f;
    }

    std::vector<std::string> residual_labels() const {
        std::vector<std::string> l;
        for (const auto& s : sms) {
            l.push_back(s.name + ".kcl_d");
            l.push_back(s.name + ".kcl_q");
        }
        return l;
    }

    void residual(std::span<const double> x, std::span<const double> u, std::span<double> g) const {
        const auto net = solve_network(x, u);
        std::size_t k = 0;
        for (std::size_t m = 0; m < sms.size(); ++m) {
            const auto& s = sms[m];
            const double gsh = g_shunt + u[s.u_fault];
            const auto& v = net.v[s.node];
            g[k++] = net.i_sm[m].d - net.net_out[s.node].d - gsh * v.d;
            g[k++] = net.i_sm[m].q - net.net_out[s.node].q - gsh * v.q;
        }
    }

    std::vector<std::string> channel_labels(const std::vector<std::string>& node_names) const {
        std::vector<std::string> l;
        for (const auto& g : gfls)
            for (const char* c : {"Is_d", "Is_q", "Is", "vs", "P", "omega_pll", "Io_d", "Io_q"})
                l.push_back(g.name + "." + c);
        for (const auto& s : sms)
            for (const char* c : {"IL2_d", "IL2_q", "IL2", "vt_d", "vt_q", "vt", "Pe", "Pm", "efd"})
                l.push_back(s.name + "." + c);
        for (const char* c : {"Ig2_d", "Ig2_q", "Ig2", "P_G"}) l.push_back(std::string("grid.") + c);
        for (const auto& b : branches) l.push_back(b.info.name + ".I");
        (void)node_names;
        return l;
    }

    void channels(std::span<const double> x, std::span<const double> u, std::span<double> y) const {
        const auto net = solve_network(x, u);
        const double wf = x[grid_x];
        std::size_t k = 0;
        for (const auto& g : gfls) {
            const std::size_t o = g.x;
            const GflState<double> xs{x[o], x[o + 1], x[o + 2], x[o + 3], x[o + 4], x[o + 5], x[o + 6], x[o + 7]};
            const PllState<double> xp{x[g.x_pll], x[g.x_pll + 1]};
            PowerLoopState<double> xw{x[g.x_pw], 0.0};
            if (gfl.has_power_filter()) xw.x_pmeas = x[g.x_pw + 1];
            GflInputs<double> in{net.net_out[g.node], wf, u[g.u_p], u[g.u_q], u[g.u_fault]};
            const auto r = gfl_derivatives(xs, xp, xw, in, gfl, omega_b);
            y[k++] = xs.isd;
            y[k++] = xs.isq;
            y[k++] = std::hypot(xs.isd, xs.isq);
            y[k++] = std::hypot(xs.vcd, xs.vcq);
            y[k++] = r.p_meas;
            y[k++] = r.pll.omega_est;
            y[k++] = in.i_out.d;
            y[k++] = in.i_out.q;
        }
        for (std::size_t m = 0; m < sms.size(); ++m) {
            const auto& s = sms[m];
            const auto xs = sm_state<double>(x, s.x);
            const AvrGovState<double> xc{x[s.x + 7], x[s.x + 8], x[s.x + 9]};
            const auto& vt = net.v[s.node];
            const auto ctl = avr_governor_derivatives(xc, magnitude(vt), xs.omega - 1.0, u[s.u_vref], u[s.u_p], avr, gov);
            const auto r = sm_derivatives(xs, vt, wf, ctl.e_fd, ctl.p_m, s.circuit, omega_b);
            const auto& i = net.i_sm[m];
            y[k++] = i.d;
            y[k++] = i.q;
            y[k++] = std::hypot(i.d, i.q);
            y[k++] = vt.d;
            y[k++] = vt.q;
            y[k++] = std::hypot(vt.d, vt.q);
            y[k++] = r.p_e;
            y[k++] = ctl.p_m;
            y[k++] = ctl.e_fd;
        }
        const auto& vg = net.v[grid_node];
        const auto& out = net.net_out[grid_node];
        y[k++] = -out.d;
        y[k++] = -out.q;
        y[k++] = std::hypot(out.d, out.q);
        y[k++] = -(vg.d * out.d + vg.q * out.q);
        for (const auto& b : branches) y[k++] = std::hypot(x[b.x], x[b.x + 1]);
    }
};

/// Phasor pre-solve at nominal frequency used to seed the Newton iteration.
struct PhasorSeed {
    std::vector<cplx> v;
    std::vector<cplx> i_branch;
    std::vector<cplx> i_inject;  ///< device current into each node (shunts included)
};

/// Balanced power flow at nominal frequency.  The grid node is the slack;
/// nodes with a voltage target are PV, the rest PQ.
PhasorSeed phasor_seed(const NetworkLayout& layout, std::size_t grid_node, const std::vector<cplx>& s_inject,
                       const std::vector<double>& v_target, double grid_v, const std::vector<cplx>& y_shunt_node) {
    const std::size_t n = layout.nodes.size();
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(N, N);
    for (const auto& b : layout.branches) {
        const cplx y = 1.0 / cplx(b.r, b.l);
        const auto f = static_cast<Eigen::Index>(b.from), t = static_cast<Eigen::Index>(b.to);
        Y(f, f) += y;
        Y(t, t) += y;
        Y(f, t) -= y;
        Y(t, f) -= y;
    }
    for (std::size_t i = 0; i < n; ++i) Y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += y_shunt_node[i];

    std::vector<std::size_t> bus;
    for (std::size_t i = 0; i < n; ++i)
        if (i != grid_node) bus.push_back(i);
    const auto m = static_cast<Eigen::Index>(bus.size());

    auto voltages = [&](const Eigen::VectorXd& z) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Constant(N, cplx(grid_v, 0.0));
        for (Eigen::Index a = 0; a < m; ++a) v(static_cast<Eigen::Index>(bus[static_cast<std::size_t>(a)])) = std::polar(z(m + a), z(a));
        return v;
    };
    auto mismatch = [&](const Eigen::VectorXd& z) {
        const Eigen::VectorXcd v = voltages(z);
        const Eigen::VectorXcd s = v.cwiseProduct((Y * v).conjugate());
        Eigen::VectorXd r(2 * m);
        for (Eigen::Index a = 0; a < m; ++a) {
            const auto k = bus[static_cast<std::size_t>(a)];
            const auto K = static_cast<Eigen::Index>(k);
            r(a) = s(K).real() - s_inject[k].real();
            r(m + a) = v_target[k] > 0.0 ? std::abs(v(K)) - v_target[k] : s(K).imag() - s_inject[k].imag();
        }
        return r;
    };

    Eigen::VectorXd z(2 * m);
    for (Eigen::Index a = 0; a < m; ++a) {
        z(a) = 0.0;
        const double vt = v_target[bus[static_cast<std::size_t>(a)]];
        z(m + a) = vt > 0.0 ? vt : grid_v;
    }
    for (int it = 0; it < 50; ++it) {
        const Eigen::VectorXd r = mismatch(z);
        if (r.lpNorm<Eigen::Infinity>() < 1e-13) break;
        Eigen::MatrixXd J(2 * m, 2 * m);
        for (Eigen::Index j = 0; j < 2 * m; ++j) {
            Eigen::VectorXd zp = z, zm = z;
            zp(j) += 1e-7;
            zm(j) -= 1e-7;
            J.col(j) = (mismatch(zp) - mismatch(zm)) / 2e-7;
        }
        const Eigen::VectorXd dz = J.fullPivLu().solve(-r);
        double alpha = 1.0;
        const double n0 = r.lpNorm<Eigen::Infinity>();
        while (alpha > 1e-3 && !(mismatch(z + alpha * dz).lpNorm<Eigen::Infinity>() < n0)) alpha *= 0.5;
        z += alpha * dz;
    }
    const Eigen::VectorXcd vv = voltages(z);
    const Eigen::VectorXcd iv = Y * vv;
    PhasorSeed seed;
    for (Eigen::Index i = 0; i < N; ++i) {
        seed.v.push_back(vv(i));
        seed.i_inject.push_back(iv(i));
    }
    for (const auto& b : layout.branches) seed.i_branch.push_back((seed.v[b.from] - seed.v[b.to]) / cplx(b.r, b.l));
    return seed;
}

}  // namespace

DynamicSystem assemble_benchmark(const BenchmarkConfig& cfg) {
    const NetworkLayout layout = network_layout(cfg);
    auto model = std::make_shared<BenchmarkModel>();
    model->omega_b = cfg.base.omega_b();
    model->g_shunt = 1.0 / cfg.sm_terminal_shunt_r;
    model->avr = cfg.avr;
    model->gov = cfg.gov;
    model->gfl = cfg.gfl;
    model->grid = cfg.grid;
    model->n_nodes = layout.nodes.size();

    auto node_of = [&](const std::string& n) {
        for (std::size_t i = 0; i < layout.nodes.size(); ++i)
            if (layout.nodes[i] == n) return i;
        throw ValidationError("internal: missing node " + n);
    };

    std::vector<StateLabel> labels;
    std::vector<std::string> inputs;
    std::vector<double> u0;
    auto add_input = [&](std::string name, double v) {
        inputs.push_back(std::move(name));
        u0.push_back(v);
        return inputs.size() - 1;
    };

    // Device lists in the documented order.
    struct Dev {
        DeviceKind kind;
        std::string name;
        double p;
    };
    std::vector<Dev> sm_list, gfl_list;
    if (cfg.has_sm()) sm_list.push_back({DeviceKind::kSm, "sm", *cfg.p_sm});
    if (cfg.has_gfl()) gfl_list.push_back({DeviceKind::kGfl, "gfl", *cfg.p_inv});
    for (const auto& e : cfg.extra_devices)
        (e.kind == DeviceKind::kSm ? sm_list : gfl_list).push_back({e.kind, e.name, e.setpoint});

    const SmCircuit circuit = SmCircuit::from_params(cfg.sm, cfg.base.omega_b());
    for (const auto& d : sm_list) {
        SmSlot s;
        s.name = d.name;
        s.node = node_of(d.name);
        s.x = labels.size();
        s.circuit = circuit;
        for (auto n : SmState<double>::kNames) labels.push_back({d.name, std::string(n)});
        for (auto n : AvrGovState<double>::kNames) labels.push_back({d.name, std::string(n)});
        s.u_p = add_input(d.name + ".P_set", d.p);
        s.u_vref = add_input(d.name + ".vg_ref", cfg.avr.vg_ref);
        s.u_fault = add_input(d.name + ".g_fault", 0.0);
        model->sms.push_back(s);
    }
    for (const auto& d : gfl_list) {
        GflSlot g;
        g.name = d.name;
        g.node = node_of(d.name);
        g.x = labels.size();
        for (auto n : GflState<double>::kNames) labels.push_back({d.name, std::string(n)});
        g.x_pll = labels.size();
        for (auto n : PllState<double>::kNames) labels.push_back({d.name, std::string(n)});
        g.x_pw = labels.size();
        labels.push_back({d.name, "x_droop_w"});
        if (cfg.gfl.has_power_filter()) labels.push_back({d.name, "x_pmeas"});
        g.u_p = add_input(d.name + ".P_set", d.p);
        g.u_q = add_input(d.name + ".Q_set", d.name == "gfl" ? cfg.q_inv : 0.0);
        g.u_fault = add_input(d.name + ".g_fault", 0.0);
        model->gfls.push_back(g);
    }
    for (const auto& b : layout.branches) {
        BranchSlot s;
        s.info = b;
        s.x = labels.size();
        labels.push_back({b.name, "i_line_d"});
        labels.push_back({b.name, "i_line_q"});
        model->branches.push_back(s);
    }
    model->grid_node = node_of("grid");
    model->grid_x = labels.size();
    for (auto n : EquGridState<double>::kNames) labels.push_back({"grid", std::string(n)});
    model->u_pl = add_input("grid.P_l", cfg.grid.Pl);
    model->n_states = labels.size();

    std::shared_ptr<const BenchmarkModel> m = model;
    DynamicSystem sys(
        labels, inputs,
        [m](std::span<const double> x, std::span<const double> u, std::span<double> dx) { m->eval<double>(x, u, dx); },
        [m](std::span<const cplx> x, std::span<const cplx> u, std::span<cplx> dx) { m->eval<cplx>(x, u, dx); });
    sys.set_residual(m->residual_labels(),
                     [m](std::span<const double> x, std::span<const double> u, std::span<double> g) {
                         m->residual(x, u, g);
                     });
    sys.set_channels(m->channel_labels(layout.nodes),
                     [m](std::span<const double> x, std::span<const double> u, std::span<double> y) {
                         m->channels(x, u, y);
                     });
    Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u0.data(), static_cast<Eigen::Index>(u0.size()));
    sys.set_nominal_inputs(uv);

    // Flat start refined by a phasor pass at nominal frequency.
    std::vector<cplx> s_inj(layout.nodes.size(), 0.0);
    std::vector<cplx> y_node(layout.nodes.size(), 0.0);
    for (const auto& d : sm_list) s_inj[node_of(d.name)] += d.p;
    for (const auto& d : gfl_list) s_inj[node_of(d.name)] += d.p;
    for (const auto& s : model->sms) y_node[s.node] += model->g_shunt;
    for (const auto& g : model->gfls) {
        y_node[g.node] += cplx(0.0, cfg.gfl.Cf);
        s_inj[g.node] += cplx(0.0, g.name == "gfl" ? cfg.q_inv : 0.0);
    }
    // Machine terminals are voltage controlled; the proportional AVR leaves a
    // small offset that Newton removes.
    std::vector<double> v_target(layout.nodes.size(), 0.0);
    for (const auto& s : model->sms) v_target[s.node] = cfg.avr.vg_ref - 2.0 / cfg.avr.Ke;
    const PhasorSeed seed = phasor_seed(layout, model->grid_node, s_inj, v_target, cfg.grid.V, y_node);

    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(model->n_states));
    for (std::size_t k = 0; k < model->branches.size(); ++k) {
        x0(static_cast<Eigen::Index>(model->branches[k].x)) = seed.i_branch[k].real();
        x0(static_cast<Eigen::Index>(model->branches[k].x + 1)) = seed.i_branch[k].imag();
    }
    for (std::size_t k = 0; k < model->gfls.size(); ++k) {
        const auto& g = model->gfls[k];
        const cplx v = seed.v[g.node];
        const double ang = std::arg(v);
        const double vm = std::abs(v);
        const double id = gfl_list[k].p / std::max(vm, cfg.gfl.v_min);
        const double q = g.name == "gfl" ? cfg.q_inv : 0.0;
        const cplx is = std::polar(1.0, ang) * cplx(id, -q / std::max(vm, cfg.gfl.v_min));
        const auto o = static_cast<Eigen::Index>(g.x);
        x0(o) = is.real();
        x0(o + 1) = is.imag();
        x0(o + 2) = v.real();
        x0(o + 3) = v.imag();
        x0(o + 4) = cfg.gfl.Rf * id;
        x0(o + 5) = 0.0;
        x0(o + 6) = vm;
        x0(o + 7) = 0.0;
        x0(static_cast<Eigen::Index>(g.x_pll + 1)) = ang;
    }
    for (std::size_t k = 0; k < model->sms.size(); ++k) {
        const auto& s = model->sms[k];
        const auto& c = s.circuit;
        const cplx v = seed.v[s.node];
        const cplx i = seed.i_inject[s.node] / static_cast<double>(std::count_if(
                           model->sms.begin(), model->sms.end(), [&](const SmSlot& o) { return o.node == s.node; }));
        const cplx eq = v + cplx(c.Ra, c.Laq + c.Ll) * i;
        const double delta = std::arg(eq);
        const cplx to_rotor = std::polar(1.0, -(delta - std::numbers::pi / 2));
        const cplx vr = v * to_rotor, ir = i * to_rotor;
        const double Ld = c.Lad + c.Ll, Lq = c.Laq + c.Ll;
        const double i_fd = (vr.imag() + c.Ra * ir.imag() + Ld * ir.real()) / c.Lad;
        const auto o = static_cast<Eigen::Index>(s.x);
        x0(o) = delta;
        x0(o + 1) = 1.0;
        x0(o + 2) = -Ld * ir.real() + c.Lad * i_fd;
        x0(o + 3) = -Lq * ir.imag();
        x0(o + 4) = -c.Lad * ir.real() + (c.Lad + c.Lfd) * i_fd;
        x0(o + 5) = -c.Lad * ir.real() + c.Lad * i_fd;
        x0(o + 6) = -c.Laq * ir.imag();
        const double efd = c.Lad * i_fd;
        x0(o + 7) = cfg.avr.vg_ref - efd / cfg.avr.Ke;
        x0(o + 8) = sm_list[k].p;
        x0(o + 9) = sm_list[k].p;
    }
    x0(static_cast<Eigen::Index>(model->grid_x)) = 1.0;
    sys.set_initial_state(x0);

    EquilibriumPolicy pol;
    pol.frozen_states = {model->grid_x, model->grid_x + 1};
    pol.dropped_equations = {model->grid_x + 1};
    pol.free_inputs = {model->u_pl};
    sys.set_equilibrium_policy(pol);
    return sys;
}

}  // namespace cmodes

#pragma once

// Per-unit EMT models of the benchmark devices in a rotating dq frame.
//
// Every derivative function is a pure template over the scalar type so that
// the same code evaluates with double (simulation, Newton) and with
// std::complex<double> (complex-step differentiation).  Time is in seconds,
// everything else in per unit of the common system base.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <string_view>

#include "cmodes/errors.hpp"

namespace cmodes {

namespace detail {
inline double real_part(double v) { return v; }
inline double real_part(const std::complex<double>& v) { return v.real(); }
}  // namespace detail

struct PerUnitBase {
    double s_base = 40e6;  ///< VA
    double v_base = 20e3;  ///< line-line V
    double f_base = 50.0;  ///< Hz

    double omega_b() const { return 2.0 * std::numbers::pi * f_base; }
    double z_base() const { return v_base * v_base / s_base; }
    /// Phase current base in A.
    double i_base() const { return s_base / (std::sqrt(3.0) * v_base); }
    void validate() const;
};

template <class T>
struct DqPair {
    T d{};
    T q{};
};

template <class T>
T magnitude(const DqPair<T>& v) {
    using std::sqrt;
    return sqrt(v.d * v.d + v.q * v.q);
}

/// Rotates a vector by +angle (frame with angle `angle` -> reference frame).
template <class T>
DqPair<T> rotate(const DqPair<T>& v, const T& angle) {
    using std::cos;
    using std::sin;
    const T c = cos(angle);
    const T s = sin(angle);
    return {v.d * c - v.q * s, v.d * s + v.q * c};
}

// ---------------------------------------------------------------------------
// Parameter records

struct SmParams {
    double H = 1.438;
    double Kd = 0.0;
    double Ra = 0.0025;
    double Xd = 1.8;
    double Xq = 1.7;
    double Xd_p = 0.3;
    double Xd_pp = 0.25;
    double Xq_pp = 0.25;
    double Td0_p = 8.0;
    double Td0_pp = 0.03;
    double Tq0_pp = 0.05;
    double Xl = 0.2;

    void validate() const;
};

struct AvrParams {
    double Ke = 500.0;
    double Te = 0.05;
    double vg_ref = 1.0;

    void validate() const;
};

struct GovTurbineParams {
    double Rg = 0.02;
    double Tg = 0.5;
    double Tr = 10.0;
    double Fh = 0.1;

    void validate() const;
};

struct GflParams {
    double Rf = 0.015;
    double Lf = 0.1;
    double Cf = 0.11;
    double Kp = 0.62;
    double Ki = 650.0;
    double tau_f = 0.3e-3;
    double tau_p = 0.0;
    double tau_w = 0.1;
    double Rp = 0.04;
    double Kp_pll = 0.3183;
    double Ki_pll = 9.82;
    /// Floor on the voltage used to turn power references into currents.
    double v_min = 0.2;

    bool has_power_filter() const { return tau_p > 0.0; }
    void validate() const;
};

struct EquGridParams {
    double He = 1.438;
    double Du = 0.0;
    double V = 1.0;
    double Pl = 0.0;

    void validate() const;
};

/// Rotor circuit constants of the flux-linkage machine model, derived from the
/// standard reactance / time-constant data set.
struct SmCircuit {
    double Ra = 0.0;
    double Lad = 0.0, Laq = 0.0, Ll = 0.0;
    double Lfd = 0.0, L1d = 0.0, L1q = 0.0;
    double Rfd = 0.0, R1d = 0.0, R1q = 0.0;
    double H = 0.0, Kd = 0.0;
    /// Inverse of the d-axis inductance matrix mapping (i_d, i_fd, i_1d) to (psi_d, psi_fd, psi_1d).
    std::array<std::array<double, 3>, 3> inv_d{};
    /// Inverse of the q-axis inductance matrix mapping (i_q, i_1q) to (psi_q, psi_1q).
    std::array<std::array<double, 2>, 2> inv_q{};

    static SmCircuit from_params(const SmParams& p, double omega_b);
};

// ---------------------------------------------------------------------------
// State slices

template <class T>
struct SmState {
    static constexpr std::size_t kSize = 7;
    static constexpr std::array<std::string_view, kSize> kNames{
        "theta_sm", "omega_sm", "psi_d", "psi_q", "psi_fd", "psi_1d", "psi_1q"};
    T theta{}, omega{}, psi_d{}, psi_q{}, psi_fd{}, psi_1d{}, psi_1q{};
};

template <class T>
struct AvrGovState {
    static constexpr std::size_t kSize = 3;
    static constexpr std::array<std::string_view, kSize> kNames{"gamma_avr", "x_gov", "x_turb"};
    T gamma_avr{}, x_gov{}, x_turb{};
};

template <class T>
struct GflState {
    static constexpr std::size_t kSize = 8;
    static constexpr std::array<std::string_view, kSize> kNames{
        "isd", "isq", "vcd", "vcq", "gamma_currd", "gamma_currq", "vsdfilt", "vsqfilt"};
    T isd{}, isq{}, vcd{}, vcq{}, gamma_currd{}, gamma_currq{}, vsdfilt{}, vsqfilt{};
};

template <class T>
struct PllState {
    static constexpr std::size_t kSize = 2;
    static constexpr std::array<std::string_view, kSize> kNames{"x_pll_int", "theta_pll"};
    T x_pll_int{}, theta_pll{};
};

/// Droop frequency filter plus the optional power-reference lag.  x_pmeas is
/// only a state when tau_p > 0.
template <class T>
struct PowerLoopState {
    T x_droop_w{};
    T x_pmeas{};
};

template <class T>
struct EquGridState {
    static constexpr std::size_t kSize = 2;
    static constexpr std::array<std::string_view, kSize> kNames{"omega_f", "theta_f"};
    T omega_f{}, theta_f{};
};

// ---------------------------------------------------------------------------
// Synchronous machine

/// Stator current of the machine in the network frame (generator convention).
template <class T>
DqPair<T> sm_stator_current(const SmState<T>& x, const SmCircuit& c, DqPair<T>* rotor_frame = nullptr) {
    const auto& Md = c.inv_d;
    const auto& Mq = c.inv_q;
    const T i_d = Md[0][0] * x.psi_d + Md[0][1] * x.psi_fd + Md[0][2] * x.psi_1d;
    const T i_q = Mq[0][0] * x.psi_q + Mq[0][1] * x.psi_1q;
    if (rotor_frame) *rotor_frame = {i_d, i_q};
    // The rotor q-axis sits at angle theta in the network frame.
    return rotate<T>({i_d, i_q}, x.theta - T(std::numbers::pi / 2));
}

template <class T>
struct SmResult {
    SmState<T> dxdt;
    DqPair<T> i_stator;  ///< network frame
    T p_e{};
    T t_e{};
};

/// Flux-linkage machine (stator, field, one d and one q damper) with swing equation.
/// `v_term` is the terminal voltage in the network frame rotating at `omega_frame`.
template <class T>
SmResult<T> sm_derivatives(const SmState<T>& x, const DqPair<T>& v_term, const T& omega_frame,
                           const T& e_fd, const T& p_m, const SmCircuit& c, double omega_b) {
    const T to_rotor = -(x.theta - T(std::numbers::pi / 2));
    const DqPair<T> v = rotate(v_term, to_rotor);

    const auto& Md = c.inv_d;
    const auto& Mq = c.inv_q;
    const T i_d = Md[0][0] * x.psi_d + Md[0][1] * x.psi_fd + Md[0][2] * x.psi_1d;
    const T i_fd = Md[1][0] * x.psi_d + Md[1][1] * x.psi_fd + Md[1][2] * x.psi_1d;
    const T i_1d = Md[2][0] * x.psi_d + Md[2][1] * x.psi_fd + Md[2][2] * x.psi_1d;
    const T i_q = Mq[0][0] * x.psi_q + Mq[0][1] * x.psi_1q;
    const T i_1q = Mq[1][0] * x.psi_q + Mq[1][1] * x.psi_1q;

    SmResult<T> r;
    r.dxdt.psi_d = omega_b * (v.d + c.Ra * i_d + x.omega * x.psi_q);
    r.dxdt.psi_q = omega_b * (v.q + c.Ra * i_q - x.omega * x.psi_d);
    // E_fd is expressed so that psi_d = E_fd on open circuit.
    r.dxdt.psi_fd = omega_b * (c.Rfd / c.Lad * e_fd - c.Rfd * i_fd);
    r.dxdt.psi_1d = -omega_b * c.R1d * i_1d;
    r.dxdt.psi_1q = -omega_b * c.R1q * i_1q;

    r.t_e = x.psi_d * i_q - x.psi_q * i_d;
    r.p_e = r.t_e * x.omega;
    const T slip = x.omega - omega_frame;
    r.dxdt.omega = (p_m - r.p_e - c.Kd * slip) / (2.0 * c.H);
    r.dxdt.theta = omega_b * slip;
    r.i_stator = rotate<T>({i_d, i_q}, x.theta - T(std::numbers::pi / 2));
    return r;
}

template <class T>
struct AvrGovResult {
    AvrGovState<T> dxdt;
    T e_fd{};
    T p_m{};
    /// Droop term -(omega - 1)/Rg entering the governor.
    T governor_droop{};
};

/// First-order static AVR and droop / governor / reheat-turbine chain.
/// `delta_omega` is the machine speed deviation from nominal.
template <class T>
AvrGovResult<T> avr_governor_derivatives(const AvrGovState<T>& x, const T& v_mag, const T& delta_omega,
                                         const T& vg_ref, const T& p_ref, const AvrParams& avr,
                                         const GovTurbineParams& gov) {
    AvrGovResult<T> r;
    r.dxdt.gamma_avr = (v_mag - x.gamma_avr) / avr.Te;
    r.e_fd = avr.Ke * (vg_ref - x.gamma_avr);
    r.governor_droop = -delta_omega / gov.Rg;
    r.dxdt.x_gov = (p_ref + r.governor_droop - x.x_gov) / gov.Tg;
    // (1 + s Fh Tr) / (1 + s Tr) = Fh + (1 - Fh) / (1 + s Tr)
    r.dxdt.x_turb = (x.x_gov - x.x_turb) / gov.Tr;
    r.p_m = gov.Fh * x.x_gov + (1.0 - gov.Fh) * x.x_turb;
    return r;
}

// ---------------------------------------------------------------------------
// Grid-following inverter

template <class T>
struct PllResult {
    PllState<T> dxdt;
    T delta_omega{};  ///< estimated frequency deviation from nominal, pu
    T omega_est{};    ///< estimated frequency, pu
};

/// PI on the q-axis voltage seen in the PLL frame.  theta_pll is measured
/// relative to the network frame rotating at `omega_frame`.
template <class T>
PllResult<T> pll_derivatives(const PllState<T>& x, const T& vs_q, const T& omega_frame, const GflParams& p,
                             double omega_b) {
    PllResult<T> r;
    r.dxdt.x_pll_int = p.Ki_pll * vs_q;
    r.delta_omega = p.Kp_pll * vs_q + x.x_pll_int;
    r.omega_est = 1.0 + r.delta_omega;
    r.dxdt.theta_pll = omega_b * (r.omega_est - omega_frame);
    return r;
}

template <class T>
struct GflInputs {
    DqPair<T> i_out{};  ///< current leaving the capacitor node into the network, network frame
    T omega_frame{1.0};
    T p_set{};
    T q_set{};
    T g_fault{};  ///< shunt fault conductance at the capacitor node
};

template <class T>
struct GflResult {
    GflState<T> dxdt;
    PllResult<T> pll;
    PowerLoopState<T> dpower;
    DqPair<T> v_mod;     ///< converter voltage, network frame
    DqPair<T> v_pll;     ///< capacitor voltage in the PLL frame
    DqPair<T> i_pll;     ///< filter current in the PLL frame
    DqPair<T> i_ref;     ///< current references, PLL frame
    T p_ref{};           ///< power reference after droop
    T p_meas{};          ///< v_s . i_s
};

/// Average-model GFL converter: LC filter, PI current control with decoupling
/// and filtered voltage feed-forward, droop power loop, PLL.
template <class T>
GflResult<T> gfl_derivatives(const GflState<T>& x, const PllState<T>& pll, const PowerLoopState<T>& pw,
                             const GflInputs<T>& in, const GflParams& p, double omega_b) {
    GflResult<T> r;
    const T back = -pll.theta_pll;
    r.v_pll = rotate<T>({x.vcd, x.vcq}, back);
    r.i_pll = rotate<T>({x.isd, x.isq}, back);

    r.pll = pll_derivatives(pll, r.v_pll.q, in.omega_frame, p, omega_b);

    r.dpower.x_droop_w = (r.pll.delta_omega - pw.x_droop_w) / p.tau_w;
    r.p_ref = in.p_set - pw.x_droop_w / p.Rp;
    T p_cmd = r.p_ref;
    if (p.has_power_filter()) {
        r.dpower.x_pmeas = (r.p_ref - pw.x_pmeas) / p.tau_p;
        p_cmd = pw.x_pmeas;
    }

    T v_div = x.vsdfilt;
    if (detail::real_part(v_div) < p.v_min) v_div = T(p.v_min);
    r.i_ref = {p_cmd / v_div, -in.q_set / v_div};

    const T e_d = r.i_ref.d - r.i_pll.d;
    const T e_q = r.i_ref.q - r.i_pll.q;
    r.dxdt.gamma_currd = p.Ki * e_d;
    r.dxdt.gamma_currq = p.Ki * e_q;

    const T w = r.pll.omega_est;
    const DqPair<T> vm_ref{p.Kp * e_d + x.gamma_currd - w * p.Lf * r.i_pll.q + x.vsdfilt,
                           p.Kp * e_q + x.gamma_currq + w * p.Lf * r.i_pll.d + x.vsqfilt};
    r.dxdt.vsdfilt = (r.v_pll.d - x.vsdfilt) / p.tau_f;
    r.dxdt.vsqfilt = (r.v_pll.q - x.vsqfilt) / p.tau_f;
    r.v_mod = rotate(vm_ref, pll.theta_pll);

    const T wf = in.omega_frame;
    const double kl = omega_b / p.Lf;
    r.dxdt.isd = kl * (r.v_mod.d - x.vcd - p.Rf * x.isd + wf * p.Lf * x.isq);
    r.dxdt.isq = kl * (r.v_mod.q - x.vcq - p.Rf * x.isq - wf * p.Lf * x.isd);

    const double kc = omega_b / p.Cf;
    const T net_d = x.isd - in.i_out.d - in.g_fault * x.vcd;
    const T net_q = x.isq - in.i_out.q - in.g_fault * x.vcq;
    r.dxdt.vcd = kc * (net_d + wf * p.Cf * x.vcq);
    r.dxdt.vcq = kc * (net_q - wf * p.Cf * x.vcd);

    r.p_meas = r.v_pll.d * r.i_pll.d + r.v_pll.q * r.i_pll.q;
    return r;
}

// ---------------------------------------------------------------------------
// Network elements

/// RL branch in a frame rotating at `omega` (pu):
/// (L/omega_b) di/dt = v_from - v_to - R i + omega L J i.
template <class T>
DqPair<T> line_derivatives(const DqPair<T>& i, const DqPair<T>& v_from, const DqPair<T>& v_to, double R, double L,
                           const T& omega, double omega_b) {
    if (!(L > 0.0)) throw ValidationError("line inductance must be positive (got " + std::to_string(L) + ")");
    const double k = omega_b / L;
    return {k * (v_from.d - v_to.d - R * i.d + omega * L * i.q),
            k * (v_from.q - v_to.q - R * i.q - omega * L * i.d)};
}

template <class T>
struct EquGridResult {
    EquGridState<T> dxdt;
    DqPair<T> v_source;  ///< internal voltage in the frame that rotates with omega_f
};

/// Equivalent grid: ideal source of magnitude V plus an aggregate swing equation.
/// p_g is the power delivered by the network into the equivalent-grid node.
template <class T>
EquGridResult<T> equgrid_derivatives(const EquGridState<T>& x, const T& p_g, const T& p_l, const EquGridParams& p,
                                     double omega_b) {
    EquGridResult<T> r;
    const T dw = x.omega_f - 1.0;
    r.dxdt.omega_f = (p_g - p_l - p.Du * dw) / (2.0 * p.He);
    r.dxdt.theta_f = omega_b * dw;
    r.v_source = {T(p.V), T(0.0)};
    return r;
}

}  // namespace cmodes

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "cmodes/models.hpp"
#include "cmodes/timedomain.hpp"
#include "helpers.hpp"

using namespace cmodes;

namespace {
const double kWb = 2.0 * std::numbers::pi * 50.0;
}

TEST_CASE("swing equation at balance has zero mechanical derivatives") {
    const auto c = SmCircuit::from_params(SmParams{}, kWb);
    SmState<double> x;
    x.theta = 0.3;
    x.omega = 1.0;
    x.psi_d = 0.9;
    x.psi_q = -0.2;
    x.psi_fd = 1.1;
    x.psi_1d = 0.9;
    x.psi_1q = -0.2;
    // Find P_e first, then feed it back as P_m.
    const auto probe = sm_derivatives<double>(x, {0.95, 0.1}, 1.0, 1.2, 0.0, c, kWb);
    const auto r = sm_derivatives<double>(x, {0.95, 0.1}, 1.0, 1.2, probe.p_e, c, kWb);
    CHECK(r.dxdt.omega == 0.0);
    CHECK(r.dxdt.theta == 0.0);
}

TEST_CASE("swing acceleration for 0.1 pu imbalance") {
    SmParams p;
    p.H = 1.438;
    p.Kd = 0.0;
    const auto c = SmCircuit::from_params(p, kWb);
    SmState<double> x;
    x.omega = 1.0;  // zero fluxes: P_e = 0
    const auto r = sm_derivatives<double>(x, {0.0, 0.0}, 1.0, 0.0, 0.1, c, kWb);
    CHECK(r.p_e == 0.0);
    CHECK(r.dxdt.omega == doctest::Approx(0.034770).epsilon(1e-5));
}

TEST_CASE("rotor angle rate for 0.01 pu slip") {
    const auto c = SmCircuit::from_params(SmParams{}, kWb);
    SmState<double> x;
    x.omega = 1.01;
    const auto r = sm_derivatives<double>(x, {0.0, 0.0}, 1.0, 0.0, 0.0, c, kWb);
    CHECK(r.dxdt.theta == doctest::Approx(3.14159).epsilon(1e-6));
}

TEST_CASE("machine circuit reproduces reactances") {
    SmParams p;
    const auto c = SmCircuit::from_params(p, kWb);
    CHECK(c.Lad + c.Ll == doctest::Approx(p.Xd));
    CHECK(c.Laq + c.Ll == doctest::Approx(p.Xq));
    // Generator convention: psi_d = -X'' i_d + ..., so the (0,0) entry is -1/X''.
    CHECK(-1.0 / c.inv_d[0][0] == doctest::Approx(p.Xd_pp).epsilon(1e-9));
    CHECK(-1.0 / c.inv_q[0][0] == doctest::Approx(p.Xq_pp).epsilon(1e-9));
}

TEST_CASE("avr and governor arithmetic") {
    AvrParams avr;
    GovTurbineParams gov;
    AvrGovState<double> x;
    x.gamma_avr = 1.0;
    x.x_gov = 0.3;
    x.x_turb = 0.3;
    SUBCASE("measured voltage at the setpoint") {
        const auto r = avr_governor_derivatives<double>(x, 1.0, 0.0, 1.0, 0.3, avr, gov);
        CHECK(r.dxdt.gamma_avr == 0.0);
        CHECK(r.e_fd == 0.0);
        CHECK(r.dxdt.x_gov == 0.0);
        CHECK(r.dxdt.x_turb == 0.0);
        CHECK(r.p_m == doctest::Approx(0.3));
    }
    SUBCASE("droop input") {
        const auto r = avr_governor_derivatives<double>(x, 1.0, 0.01, 1.0, 0.3, avr, gov);
        CHECK(r.governor_droop == doctest::Approx(-0.5));
    }
}

TEST_CASE("voltage transducer step reaches 63.2 percent after one time constant") {
    AvrParams avr;
    GovTurbineParams gov;
    DynamicSystem sys({{"avr", "gamma_avr"}}, {"v"}, [&](std::span<const double> x, std::span<const double> u,
                                                         std::span<double> d) {
        AvrGovState<double> s;
        s.gamma_avr = x[0];
        d[0] = avr_governor_derivatives<double>(s, u[0], 0.0, 1.0, 0.0, avr, gov).dxdt.gamma_avr;
    });
    sys.set_initial_state(Eigen::VectorXd::Zero(1));
    sys.set_nominal_inputs(Eigen::VectorXd::Zero(1));
    Scenario sc;
    sc.t_end = avr.Te;
    sc.max_step = 1e-5;
    sc.events = {{0.0, "v", 1.0}};
    const auto tr = simulate(sys, testing::at(sys, Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), sc);
    CHECK(tr.final_state(0) == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-6));
}

TEST_CASE("current controller integrators") {
    GflParams p;
    GflState<double> x;
    x.vcd = 1.0;
    x.vsdfilt = 1.0;
    PllState<double> pll;
    PowerLoopState<double> pw;
    GflInputs<double> in;
    SUBCASE("current error of 0.01 pu") {
        in.p_set = 0.01;  // i_ref.d = 0.01 with v = 1
        const auto r = gfl_derivatives(x, pll, pw, in, p, kWb);
        CHECK(r.dxdt.gamma_currd == doctest::Approx(6.5));
        CHECK(r.dxdt.gamma_currq == 0.0);
    }
    SUBCASE("tracking current leaves integrators at rest") {
        in.p_set = 0.4;
        x.isd = 0.4;
        const auto r = gfl_derivatives(x, pll, pw, in, p, kWb);
        CHECK(r.dxdt.gamma_currd == 0.0);
        CHECK(r.dxdt.gamma_currq == 0.0);
    }
    SUBCASE("settled droop correction") {
        in.p_set = 0.0;
        pw.x_droop_w = 0.01;
        const auto r = gfl_derivatives(x, pll, pw, in, p, kWb);
        CHECK(r.p_ref == doctest::Approx(-0.25));
    }
}

TEST_CASE("zero gains and zero inputs leave controller states at rest") {
    GflParams p;
    p.Ki = p.Kp = p.Ki_pll = p.Kp_pll = 0.0;
    const auto r = gfl_derivatives(GflState<double>{}, PllState<double>{}, PowerLoopState<double>{},
                                   GflInputs<double>{}, p, kWb);
    CHECK(r.dxdt.gamma_currd == 0.0);
    CHECK(r.dxdt.gamma_currq == 0.0);
    CHECK(r.dxdt.vsdfilt == 0.0);
    CHECK(r.dxdt.vsqfilt == 0.0);
    CHECK(r.pll.dxdt.x_pll_int == 0.0);
    CHECK(r.pll.dxdt.theta_pll == 0.0);
    CHECK(r.dpower.x_droop_w == 0.0);
}

TEST_CASE("power filter state exists only for positive tau_p") {
    GflParams p;
    p.tau_p = 0.0;
    CHECK_FALSE(p.has_power_filter());
    PowerLoopState<double> pw;
    pw.x_pmeas = 123.0;  // ignored without the filter
    GflState<double> x;
    x.vsdfilt = 1.0;
    GflInputs<double> in;
    in.p_set = 0.2;
    const auto r = gfl_derivatives(x, PllState<double>{}, pw, in, p, kWb);
    CHECK(r.i_ref.d == doctest::Approx(0.2));
    CHECK(std::isfinite(r.dxdt.isd));
    p.tau_p = 0.01;
    CHECK(p.has_power_filter());
}

TEST_CASE("locked pll") {
    GflParams p;
    const auto r = pll_derivatives<double>(PllState<double>{}, 0.0, 1.0, p, kWb);
    CHECK(r.dxdt.x_pll_int == 0.0);
    CHECK(r.dxdt.theta_pll == 0.0);
    CHECK(r.omega_est == 1.0);
    const auto s = pll_derivatives<double>(PllState<double>{}, 0.1, 1.0, p, kWb);
    CHECK(s.dxdt.x_pll_int == doctest::Approx(0.982));
}

TEST_CASE("pll frequency estimate ramps under constant q voltage") {
    GflParams p;
    const double vq = 1e-3;
    DynamicSystem sys({{"gfl", "x_pll_int"}, {"gfl", "theta_pll"}}, {},
                      [&](std::span<const double> x, std::span<const double>, std::span<double> d) {
                          const auto r = pll_derivatives<double>({x[0], x[1]}, vq, 1.0, p, kWb);
                          d[0] = r.dxdt.x_pll_int;
                          d[1] = r.dxdt.theta_pll;
                      });
    sys.set_initial_state(Eigen::VectorXd::Zero(2));
    sys.set_nominal_inputs(Eigen::VectorXd::Zero(0));
    Scenario sc;
    sc.t_end = 0.5;
    sc.max_step = 1e-3;
    const auto tr = simulate(sys, testing::at(sys, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(0)), sc);
    const double t = 0.5;
    const double est = p.Kp_pll * vq + tr.final_state(0);
    CHECK(est == doctest::Approx(p.Kp_pll * vq + p.Ki_pll * vq * t).epsilon(1e-9));
    // Integrated angle of the ramp: w_b (Kp v t + Ki v t^2 / 2).
    CHECK(tr.final_state(1) == doctest::Approx(kWb * (p.Kp_pll * vq * t + 0.5 * p.Ki_pll * vq * t * t)).epsilon(1e-9));
}

TEST_CASE("line branch derivatives") {
    SUBCASE("equal voltages and no current") {
        const auto d = line_derivatives<double>({0, 0}, {1, 0.2}, {1, 0.2}, 0.01, 0.1, 1.0, kWb);
        CHECK(d.d == 0.0);
        CHECK(d.q == 0.0);
    }
    SUBCASE("cross-coupling sign") {
        const double L = 0.1;
        const auto d = line_derivatives<double>({0, 1}, {0, 0}, {0, 0}, 0.0, L, 1.0, kWb);
        CHECK(d.d * L / kWb == doctest::Approx(0.1));
        CHECK(d.q == 0.0);
    }
    SUBCASE("d/q mirror symmetry") {
        const DqPair<double> i{0.3, -0.7}, vf{1.0, 0.2}, vt{0.9, -0.1};
        const auto a = line_derivatives<double>(i, vf, vt, 0.02, 0.15, 1.01, kWb);
        const auto b = line_derivatives<double>({i.q, i.d}, {vf.q, vf.d}, {vt.q, vt.d}, 0.02, 0.15, -1.01, kWb);
        CHECK(b.d == doctest::Approx(a.q));
        CHECK(b.q == doctest::Approx(a.d));
    }
    SUBCASE("non-positive inductance") {
        CHECK_THROWS_AS(line_derivatives<double>({0, 0}, {1, 0}, {0, 0}, 0.1, 0.0, 1.0, kWb), ValidationError);
    }
}

TEST_CASE("isolated RL branch settles to the phasor current") {
    const double R = 0.05, L = 0.2;
    DynamicSystem sys({{"line", "i_line_d"}, {"line", "i_line_q"}}, {"v"},
                      [&](std::span<const double> x, std::span<const double> u, std::span<double> d) {
                          const auto r = line_derivatives<double>({x[0], x[1]}, {u[0], 0.0}, {0, 0}, R, L, 1.0, kWb);
                          d[0] = r.d;
                          d[1] = r.q;
                      });
    sys.set_initial_state(Eigen::VectorXd::Zero(2));
    sys.set_nominal_inputs(Eigen::VectorXd::Zero(1));
    Scenario sc;
    sc.t_end = 0.5;  // L/(R w_b) = 12.7 ms
    sc.max_step = 1e-4;
    sc.events = {{0.0, "v", 1.0}};
    const auto tr = simulate(sys, testing::at(sys, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1)), sc);
    const std::complex<double> i = 1.0 / std::complex<double>(R, L);
    CHECK(tr.final_state(0) == doctest::Approx(i.real()).epsilon(1e-6));
    CHECK(tr.final_state(1) == doctest::Approx(i.imag()).epsilon(1e-6));
}

TEST_CASE("equivalent grid swing") {
    EquGridParams p;
    EquGridState<double> x{1.0, 0.0};
    auto r = equgrid_derivatives<double>(x, 0.3, 0.3, p, kWb);
    CHECK(r.dxdt.omega_f == 0.0);
    CHECK(r.dxdt.theta_f == 0.0);
    r = equgrid_derivatives<double>(x, 0.4, 0.3, p, kWb);
    CHECK(r.dxdt.omega_f == doctest::Approx(0.034770).epsilon(1e-5));
    p.Du = 5.0;
    x.omega_f = 1.01;
    r = equgrid_derivatives<double>(x, 0.3, 0.3, p, kWb);
    CHECK(r.dxdt.omega_f < 0.0);
}

TEST_CASE("derivative functions are deterministic") {
    const auto c = SmCircuit::from_params(SmParams{}, kWb);
    SmState<double> x{0.4, 1.001, 0.8, -0.3, 1.0, 0.8, -0.3};
    const auto a = sm_derivatives<double>(x, {0.9, 0.3}, 1.0, 1.7, 0.5, c, kWb);
    const auto b = sm_derivatives<double>(x, {0.9, 0.3}, 1.0, 1.7, 0.5, c, kWb);
    CHECK(testing::bit_equal(a.dxdt.psi_d, b.dxdt.psi_d));
    CHECK(testing::bit_equal(a.dxdt.omega, b.dxdt.omega));
    CHECK(testing::bit_equal(a.dxdt.psi_1q, b.dxdt.psi_1q));
}

TEST_CASE("parameter invariants are enforced") {
    SmParams sm;
    sm.Xd_pp = 0.1;
    sm.Xl = 0.2;  // Xd_pp must exceed Xl
    CHECK_THROWS_AS(sm.validate(), ValidationError);
    GovTurbineParams g;
    g.Rg = 0.0;
    CHECK_THROWS_AS(g.validate(), ValidationError);
    GflParams f;
    f.tau_p = -1.0;
    CHECK_THROWS_AS(f.validate(), ValidationError);
    EquGridParams e;
    e.He = 0.0;
    CHECK_THROWS_AS(e.validate(), ValidationError);
    PerUnitBase b;
    CHECK(b.omega_b() == doctest::Approx(2 * std::numbers::pi * 50));
    b.s_base = 0.0;
    CHECK_THROWS_AS(b.validate(), ValidationError);
}

#include <doctest.h>

#include "cmodes/config.hpp"
#include "cmodes/equilibrium.hpp"
#include "cmodes/timedomain.hpp"

using namespace cmodes;

namespace {

BenchmarkConfig at_power(double p) {
    auto c = nominal_config();
    c.p_inv = p;
    c.p_sm = p;
    return c;
}

double drift_over(const DynamicSystem& sys, const OperatingPoint& op, double t_end) {
    Scenario sc;
    sc.t_end = t_end;
    sc.max_step = 50e-6;
    const auto tr = simulate(sys, op, sc);
    double worst = 0.0;
    for (const auto& ch : tr.data)
        for (double v : ch) worst = std::max(worst, std::abs(v - ch.front()));
    return worst;
}

}  // namespace

TEST_CASE("operating points at both generation levels") {
    for (double p : {0.2, 0.9}) {
        CAPTURE(p);
        const auto sys = assemble_benchmark(at_power(p));
        const auto op = solve_operating_point(sys, sys.nominal_inputs());
        CHECK(op.residual_norm < 1e-10);
        CHECK(sys.derivatives(op.x, op.u).lpNorm<Eigen::Infinity>() < 1e-10);
        CHECK(op.state("grid.omega_f") == 1.0);
        CHECK(op.state("sm.omega_sm") == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("power balance against summed branch losses") {
    const auto cfg = nominal_config();
    const auto sys = assemble_benchmark(cfg);
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    const auto y = sys.channels(op.x, op.u);
    auto ch = [&](const char* n) { return y(static_cast<Eigen::Index>(sys.channel_index(n))); };

    double losses = 0.0;
    for (const auto& b : network_layout(cfg).branches) {
        const double id = op.state(b.name + ".i_line_d"), iq = op.state(b.name + ".i_line_q");
        losses += b.r * (id * id + iq * iq);
    }
    const double vt = ch("sm.vt");
    losses += vt * vt / cfg.sm_terminal_shunt_r;
    const double ism = ch("sm.IL2");
    losses += cfg.sm.Ra * ism * ism;

    const double p_g = ch("grid.P_G");
    CHECK(p_g == doctest::Approx(*cfg.p_inv + *cfg.p_sm - losses).epsilon(1e-8));
    CHECK(std::abs(p_g - op.input("grid.P_l")) < 1e-8);
    CHECK(ch("sm.Pm") == doctest::Approx(*cfg.p_sm).epsilon(1e-10));
    CHECK(ch("gfl.P") == doctest::Approx(*cfg.p_inv).epsilon(1e-9));
}

TEST_CASE("zero setpoints give a frequency-flat point") {
    // Filter capacitor and terminal shunt still draw current, so branch
    // currents are small but not zero.
    const auto cfg = at_power(0.0);
    const auto sys = assemble_benchmark(cfg);
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    CHECK(op.residual_norm < 1e-10);
    CHECK(op.state("sm.omega_sm") == doctest::Approx(1.0));
    CHECK(std::abs(op.state("gfl.x_pll_int")) < 1e-10);
    CHECK(std::abs(op.state("gfl.x_droop_w")) < 1e-10);
    for (const auto& b : network_layout(cfg).branches)
        CHECK(std::hypot(op.state(b.name + ".i_line_d"), op.state(b.name + ".i_line_q")) < 0.2);
}

TEST_CASE("initial guess quality") {
    const auto cfg = nominal_config();
    const auto sys = assemble_benchmark(cfg);
    const Eigen::VectorXd g = initial_guess(cfg);
    REQUIRE(g.size() == static_cast<Eigen::Index>(sys.num_states()));
    CHECK(sys.derivatives(g, sys.nominal_inputs()).lpNorm<Eigen::Infinity>() < 1.0);
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    CHECK(op.iterations <= 20);
}

TEST_CASE("continuation reaches the high-generation point") {
    const auto sys = assemble_benchmark(at_power(0.9));
    const auto direct = solve_operating_point(sys, sys.nominal_inputs());
    // Seeded from the low-generation guess, 20 iterations are too few for a
    // direct solve but enough for each continuation stage.
    const Eigen::VectorXd seed = assemble_benchmark(at_power(0.2)).initial_state();
    NewtonOptions opt;
    opt.max_iterations = 20;
    const auto op = solve_operating_point(sys, sys.nominal_inputs(), opt, seed);
    CHECK(op.used_homotopy);
    CHECK(op.residual_norm < 1e-10);
    CHECK((op.x - direct.x).lpNorm<Eigen::Infinity>() < 1e-8);
    NewtonOptions off = opt;
    off.homotopy = false;
    CHECK_THROWS_AS(solve_operating_point(sys, sys.nominal_inputs(), off, seed), NumericalError);
}

TEST_CASE("excessive transfer is reported as infeasible") {
    auto cfg = nominal_config();
    cfg.zcc = {400.0, {}};
    cfg.p_inv = 3.0;
    cfg.p_sm = 3.0;
    CHECK_THROWS_AS(solve_operating_point(cfg), NumericalError);
}

TEST_CASE("equilibrium does not drift") {
    for (double p : {0.2, 0.9}) {
        CAPTURE(p);
        const auto sys = assemble_benchmark(at_power(p));
        const auto op = solve_operating_point(sys, sys.nominal_inputs());
        CHECK(drift_over(sys, op, 0.2) < 1e-6);
    }
}

TEST_CASE("star and triangle give the same boundary quantities") {
    auto s = nominal_config();
    auto t = s;
    const auto z = s.triangle_impedances();
    t.topology = Topology::kTriangle;
    t.z1p = {std::nullopt, z.z1p};
    t.z2p = {std::nullopt, z.z2p};
    t.z3p = {std::nullopt, z.z3p};
    const auto a = assemble_benchmark(s), b = assemble_benchmark(t);
    const auto oa = solve_operating_point(a, a.nominal_inputs());
    const auto ob = solve_operating_point(b, b.nominal_inputs());
    const auto ya = a.channels(oa.x, oa.u), yb = b.channels(ob.x, ob.u);
    for (const char* n : {"grid.P_G", "sm.vt", "gfl.vs", "gfl.Is", "sm.IL2", "grid.Ig2"}) {
        CAPTURE(n);
        CHECK(std::abs(ya(static_cast<Eigen::Index>(a.channel_index(n))) -
                       yb(static_cast<Eigen::Index>(b.channel_index(n)))) < 1e-8);
    }
}

TEST_CASE("operating point serialization") {
    const auto op = solve_operating_point(nominal_config());
    const auto j = op.to_json();
    CHECK(j.contains("states"));
    CHECK(j.contains("residual_norm"));
    CHECK_THROWS_AS(op.state("sm.nope"), ValidationError);
}

#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "cmodes/config.hpp"
#include "cmodes/equilibrium.hpp"
#include "cmodes/linearization.hpp"
#include "cmodes/modal.hpp"
#include "cmodes/network.hpp"

using namespace cmodes;
using cd = std::complex<double>;

namespace {

StarTriple star(cd a, cd b, cd c) {
    return {ComplexImpedance::from_complex(a, UnitSystem::kPhysical), ComplexImpedance::from_complex(b, UnitSystem::kPhysical),
            ComplexImpedance::from_complex(c, UnitSystem::kPhysical)};
}

TriangleTriple tri(cd a, cd b, cd c) {
    return {ComplexImpedance::from_complex(a, UnitSystem::kPhysical), ComplexImpedance::from_complex(b, UnitSystem::kPhysical),
            ComplexImpedance::from_complex(c, UnitSystem::kPhysical)};
}

double rel(cd a, cd b) { return std::abs(a - b) / std::abs(b); }

// Three-terminal short-circuit admittance matrix (terminals inverter, machine, grid).
Eigen::Matrix3cd terminal_y_star(const StarTriple& s) {
    // Star node eliminated.
    const cd y1 = 1.0 / s.z1.z(), y2 = 1.0 / s.z2.z(), y3 = 1.0 / s.zcc.z();
    const cd sum = y1 + y2 + y3;
    const cd y[3] = {y1, y2, y3};
    Eigen::Matrix3cd Y;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) Y(i, j) = (i == j ? y[i] : 0.0) - y[i] * y[j] / sum;
    return Y;
}

Eigen::Matrix3cd terminal_y_triangle(const TriangleTriple& t) {
    const cd y12 = 1.0 / t.z3p.z(), y13 = 1.0 / t.z1p.z(), y23 = 1.0 / t.z2p.z();
    Eigen::Matrix3cd Y;
    Y << y12 + y13, -y12, -y13, -y12, y12 + y23, -y23, -y13, -y23, y13 + y23;
    return Y;
}

std::vector<cd> spectrum(const BenchmarkConfig& cfg) {
    const auto sys = assemble_benchmark(cfg);
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    std::vector<cd> ev;
    for (const auto& m : eigen_decompose(linearize(sys, op))) ev.push_back(m.lambda);
    return ev;
}

}  // namespace

TEST_CASE("symmetric star maps to tripled triangle") {
    const auto t = star_to_triangle(star(1.0, 1.0, 1.0));
    CHECK(t.z1p.z() == cd(3.0));
    CHECK(t.z2p.z() == cd(3.0));
    CHECK(t.z3p.z() == cd(3.0));
    const auto s = triangle_to_star(tri(3.0, 3.0, 3.0));
    CHECK(s.z1.z() == cd(1.0));
    CHECK(s.z2.z() == cd(1.0));
    CHECK(s.zcc.z() == cd(1.0));
}

TEST_CASE("asymmetric conversion against the admittance oracle") {
    const auto s = star(2.0, 1.0, 1.0);
    const auto t = star_to_triangle(s);
    // z1p inverter-grid, z2p machine-grid, z3p inverter-machine
    CHECK(t.z1p.z().real() == doctest::Approx(5.0));
    CHECK(t.z2p.z().real() == doctest::Approx(2.5));
    CHECK(t.z3p.z().real() == doctest::Approx(5.0));
    CHECK((terminal_y_star(s) - terminal_y_triangle(t)).norm() < 1e-14);
    const auto back = triangle_to_star(t);
    CHECK(back.z1.z().real() == doctest::Approx(2.0));
    CHECK(back.z2.z().real() == doctest::Approx(1.0));
    CHECK(back.zcc.z().real() == doctest::Approx(1.0));
}

TEST_CASE("purely reactive impedances stay reactive") {
    const auto t = star_to_triangle(star({0, 1.0}, {0, 2.0}, {0, 0.5}));
    for (const auto& z : {t.z1p, t.z2p, t.z3p}) {
        CHECK(std::abs(z.r) < 1e-15);
        CHECK(z.x > 0.0);
    }
}

TEST_CASE("random star/triangle round trips") {
    std::mt19937 rng(42);
    std::uniform_real_distribution<double> u(0.01, 10.0);
    double worst = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const auto s = star({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)});
        const auto b = triangle_to_star(star_to_triangle(s));
        worst = std::max({worst, rel(b.z1.z(), s.z1.z()), rel(b.z2.z(), s.z2.z()), rel(b.zcc.z(), s.zcc.z())});
        const auto t = tri({u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)});
        const auto c = star_to_triangle(triangle_to_star(t));
        worst = std::max({worst, rel(c.z1p.z(), t.z1p.z()), rel(c.z2p.z(), t.z2p.z()), rel(c.z3p.z(), t.z3p.z())});
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("star with more branches reduces to the complete mesh") {
    const std::vector<cd> z = {{1, 2}, {0.5, 1}, {2, 1}, {1, 1}};
    const auto mesh = star_to_mesh(z);
    REQUIRE(mesh.size() == 6);
    cd ysum = 0.0;
    for (auto zi : z) ysum += 1.0 / zi;
    std::size_t k = 0;
    for (std::size_t i = 0; i < z.size(); ++i)
        for (std::size_t j = i + 1; j < z.size(); ++j, ++k) CHECK(rel(mesh[k], z[i] * z[j] * ysum) < 1e-14);
    // Three branches agree with the closed-form conversion.
    const auto m3 = star_to_mesh({z[0], z[1], z[2]});
    const auto t = star_to_triangle(star(z[0], z[1], z[2]));
    CHECK(rel(m3[0], t.z3p.z()) < 1e-14);
    CHECK(rel(m3[1], t.z1p.z()) < 1e-14);
    CHECK(rel(m3[2], t.z2p.z()) < 1e-14);
}

TEST_CASE("line length to impedance") {
    LineData line;
    const auto per_km = line.per_km();
    PerUnitBase unity;
    unity.s_base = 1.0;
    unity.v_base = 1.0;
    const auto z = impedance_from_length(20.0, per_km, unity);
    CHECK(z.r == doctest::Approx(1.0));
    CHECK(z.x == doctest::Approx(1.04));
    PerUnitBase b;
    const auto z1 = impedance_from_length(7.0, per_km, b);
    const auto z2 = impedance_from_length(14.0, per_km, b);
    CHECK(z2.r == doctest::Approx(2.0 * z1.r));
    CHECK(z2.x == doctest::Approx(2.0 * z1.x));
    CHECK(z1.unit_system == UnitSystem::kPerUnit);
    CHECK(z1.r == doctest::Approx(7.0 * 0.05 / b.z_base()));
    LineData mag;
    mag.z_is_resistance = false;
    CHECK(mag.per_km().magnitude() == doctest::Approx(0.05));
}

TEST_CASE("nominal state layout") {
    const auto sys = assemble_benchmark(nominal_config());
    // SM 7 + AVR 1 + gov/turbine 2 + GFL 8 + PLL 2 + droop 1 + 3 branches x 2 + grid 2
    CHECK(sys.num_states() == 29);
    std::set<std::string> labels;
    for (const auto& s : sys.states()) labels.insert(s.str());
    CHECK(labels.size() == sys.num_states());
    for (const char* s : {"gfl.gamma_currd", "gfl.gamma_currq", "gfl.vsdfilt", "gfl.vsqfilt", "sm.psi_d", "sm.psi_q",
                          "grid.omega_f", "grid.theta_f"})
        CHECK(labels.count(s) == 1);
    // Power filter adds one state.
    auto cfg = nominal_config();
    cfg.gfl.tau_p = 0.01;
    CHECK(assemble_benchmark(cfg).num_states() == 30);
}

TEST_CASE("star and triangle assemblies share the spectrum") {
    auto s = nominal_config();
    auto t = s;
    const auto tri_z = s.triangle_impedances();
    t.topology = Topology::kTriangle;
    t.z1p = {std::nullopt, tri_z.z1p};
    t.z2p = {std::nullopt, tri_z.z2p};
    t.z3p = {std::nullopt, tri_z.z3p};
    const auto a = spectrum(s), b = spectrum(t);
    REQUIRE(a.size() == b.size());
    double worst = 0.0;
    for (const auto& l : a) {
        double best = 1e300;
        for (const auto& m : b) best = std::min(best, std::abs(l - m) / std::max(std::abs(l), 1.0));
        worst = std::max(worst, best);
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("machine against the grid alone matches the two-mass estimate") {
    auto cfg = nominal_config();
    cfg.p_inv.reset();
    const auto sys = assemble_benchmark(cfg);
    CHECK_FALSE(sys.has_state("gfl", "isd"));
    const auto op = solve_operating_point(sys, sys.nominal_inputs());
    const auto modes = eigen_decompose(linearize(sys, op));

    const auto layout = network_layout(cfg);
    REQUIRE(layout.branches.size() == 1);
    const double x_line = layout.branches[0].l;
    const auto y = sys.channels(op.x, op.u);
    const cd v(y(sys.channel_index("sm.vt_d")), y(sys.channel_index("sm.vt_q")));
    const cd i(y(sys.channel_index("sm.IL2_d")), y(sys.channel_index("sm.IL2_q")));
    const cd e = v + cd(0, cfg.sm.Xd_p) * i;
    const cd vg = v - cd(layout.branches[0].r, x_line) * i;
    const double delta = std::arg(e) - std::arg(vg);
    const double ks = std::abs(e) * std::abs(vg) * std::cos(delta) / (cfg.sm.Xd_p + x_line);
    const double wn = std::sqrt(cfg.base.omega_b() * ks * (1.0 / (2 * cfg.sm.H) + 1.0 / (2 * cfg.grid.He)));
    const double f_est = wn / (2 * std::numbers::pi);

    double best = 1e300, f_mode = 0.0;
    for (const auto& m : modes)
        if (m.freq_hz > 0.5 && m.freq_hz < 10.0 && std::abs(m.freq_hz - f_est) < best) {
            best = std::abs(m.freq_hz - f_est);
            f_mode = m.freq_hz;
        }
    CHECK(f_mode == doctest::Approx(f_est).epsilon(0.10));
}

TEST_CASE("resolved config reports every branch") {
    const auto j = resolved_config(nominal_config());
    CHECK(j["resolved"]["branches"].size() == 3);
    CHECK(j["resolved"]["z_base_ohm"].get<double>() == doctest::Approx(10.0));
}

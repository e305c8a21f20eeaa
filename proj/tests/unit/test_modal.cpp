#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "cmodes/config.hpp"
#include "cmodes/errors.hpp"
#include "cmodes/linearization.hpp"
#include "cmodes/modal.hpp"

using namespace cmodes;

namespace {

struct Nominal {
    DynamicSystem sys = assemble_benchmark(nominal_config());
    OperatingPoint op = solve_operating_point(sys, sys.nominal_inputs());
    LinearModel lin = linearize(sys, op);
};

const Nominal& nominal() {
    static const Nominal n;
    return n;
}

std::vector<StateLabel> labels(std::initializer_list<std::pair<const char*, const char*>> l) {
    std::vector<StateLabel> s;
    for (auto [d, n] : l) s.push_back({d, n});
    return s;
}

}  // namespace

TEST_CASE("small decompositions") {
    SUBCASE("diagonal") {
        Eigen::MatrixXd A(2, 2);
        A << -1, 0, 0, -2;
        const auto m = eigen_decompose(A);
        REQUIRE(m.size() == 2);
        // Equal (zero) frequency: ordered by decreasing real part.
        CHECK(m[0].lambda == cplx(-1, 0));
        CHECK(m[1].lambda == cplx(-2, 0));
        for (const auto& x : m) CHECK(x.phi.norm() == doctest::Approx(1.0));
        const auto P = participation_factors(m);
        CHECK((P - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    }
    SUBCASE("undamped oscillator") {
        const double w = 314.0;
        Eigen::MatrixXd A(2, 2);
        A << 0, w, -w, 0;
        const auto m = eigen_decompose(A);
        REQUIRE(m.size() == 1);
        CHECK(m[0].conjugate_pair);
        CHECK(std::abs(m[0].lambda - cplx(0, w)) < 1e-10);
        CHECK(m[0].damping == doctest::Approx(0.0));
        CHECK(m[0].freq_hz == doctest::Approx(w / (2 * std::numbers::pi)));
    }
    SUBCASE("companion of (s+1)(s^2+2s+5)") {
        // s^3 + 3s^2 + 7s + 5
        Eigen::MatrixXd A(3, 3);
        A << 0, 1, 0, 0, 0, 1, -5, -7, -3;
        const auto m = eigen_decompose(A);
        REQUIRE(m.size() == 2);
        CHECK(std::abs(m[0].lambda - cplx(-1, 2)) < 1e-10);
        CHECK(std::abs(m[1].lambda - cplx(-1, 0)) < 1e-10);
    }
    SUBCASE("symmetric swap") {
        Eigen::MatrixXd A(2, 2);
        A << 0, 1, 1, 0;
        const auto P = participation_factors(eigen_decompose(A));
        CHECK((P.array() - 0.5).abs().maxCoeff() < 1e-12);
    }
    SUBCASE("defective matrix") {
        Eigen::MatrixXd A(2, 2);
        A << -1, 1, 0, -1;
        CHECK_THROWS_AS(eigen_decompose(A), NumericalError);
    }
    SUBCASE("non-finite") {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
        A(0, 1) = NAN;
        CHECK_THROWS_AS(eigen_decompose(A), ValidationError);
    }
}

TEST_CASE("frequency and damping of published eigenvalues") {
    auto a = mode_frequency_damping({-1345, 3927});
    CHECK(a.freq_hz == doctest::Approx(625).epsilon(0.002));
    CHECK(std::round(a.damping * 100) == 32);
    auto b = mode_frequency_damping({-1712, 3462});
    CHECK(b.freq_hz == doctest::Approx(551).epsilon(0.002));
    CHECK(std::round(b.damping * 100) == 44);
    auto c = mode_frequency_damping({-5, 0});
    CHECK(c.freq_hz == 0.0);
    CHECK(c.damping == 1.0);
    CHECK(mode_frequency_damping({0, 0}).damping == 1.0);
    // sign of the imaginary part is irrelevant
    CHECK(mode_frequency_damping({-1, -3}).freq_hz == mode_frequency_damping({-1, 3}).freq_hz);
}

TEST_CASE("decomposition invariants on random and benchmark matrices") {
    std::mt19937 rng(7);
    std::normal_distribution<double> g;
    std::vector<Eigen::MatrixXd> mats;
    for (int k = 0; k < 5; ++k) {
        Eigen::MatrixXd A(8, 8);
        for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng);
        mats.push_back(A);
    }
    mats.push_back(nominal().lin.A);
    for (const auto& A : mats) {
        const auto d = full_decomposition(A);
        const auto n = d.values.size();
        const Eigen::MatrixXcd I = d.left * d.right;
        CHECK((I - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-8);
        const double an = A.cwiseAbs().rowwise().sum().maxCoeff();
        for (Eigen::Index j = 0; j < n; ++j)
            CHECK((A.cast<cplx>() * d.right.col(j) - d.values(j) * d.right.col(j)).norm() < 1e-8 * an);
        for (const auto& m : eigen_decompose(A)) {
            const auto p = participation(m);
            CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(p.minCoeff() >= 0.0);
            CHECK(std::abs(cplx(m.psi.transpose() * m.phi) - 1.0) < 1e-8);
            CHECK(m.damping == doctest::Approx(-m.lambda.real() / std::abs(m.lambda)));
        }
    }
}

TEST_CASE("participation is invariant under state scaling") {
    // Diagonal similarity (unit change) leaves p_ki unchanged.
    const Eigen::MatrixXd& A = nominal().lin.A;
    Eigen::VectorXd s(A.rows());
    for (Eigen::Index i = 0; i < s.size(); ++i) s(i) = 1.0 + 0.37 * static_cast<double>(i % 5);
    const Eigen::MatrixXd B = s.asDiagonal() * A * s.cwiseInverse().asDiagonal();
    const auto ma = eigen_decompose(A), mb = eigen_decompose(B);
    REQUIRE(ma.size() == mb.size());
    for (std::size_t i = 0; i < ma.size(); ++i) {
        CHECK(std::abs(ma[i].lambda - mb[i].lambda) < 1e-7 * std::abs(ma[i].lambda) + 1e-9);
        CHECK((participation(ma[i]) - participation(mb[i])).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("extended mode shape") {
    const cplx gd(0.3, -0.2), gq(-0.1, 0.7);
    CHECK(extended_mode_shape(gd, gq, 1.0, 0.0) == gd);
    const double r = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(extended_mode_shape(gd, gq, r, r) - (gd + gq) * r) < 1e-15);
    CHECK(std::abs(extended_mode_shape(gd, gq, 2.0, 0.0) - gd) < 1e-15);
    CHECK_THROWS_AS(extended_mode_shape(gd, gq, 0.0, 0.0), ValidationError);
}

TEST_CASE("extended shape matches the magnitude derivative along the eigenvector") {
    const auto& n = nominal();
    const Eigen::MatrixXd C = channel_jacobian(n.sys, n.op);
    const auto modes = eigen_decompose(n.lin.A);
    const auto is = static_cast<Eigen::Index>(n.sys.channel_index("gfl.Is"));
    auto mag = [&](const Eigen::VectorXd& x) { return n.sys.channels(x, n.op.u)(is); };
    for (std::size_t k = 0; k < 4; ++k) {
        const auto& m = modes[k];
        const cplx shape = channel_mode_shape(n.sys, n.op, C, m, "gfl.Is_d", "gfl.Is_q");
        double prev_err = 0.0;
        for (double eps : {1e-3, 1e-4}) {
            const Eigen::VectorXd vr = m.phi.real(), vi = m.phi.imag();
            const double dr = (mag(n.op.x + eps * vr) - mag(n.op.x - eps * vr)) / (2 * eps);
            const double di = (mag(n.op.x + eps * vi) - mag(n.op.x - eps * vi)) / (2 * eps);
            const double err = std::abs(cplx(dr, di) - shape);
            CAPTURE(eps);
            CHECK(err < 1e-6 * std::max(1.0, std::abs(shape)));
            // central differences: error falls with eps^2 until roundoff
            if (prev_err > 1e-12) CHECK(err < prev_err);
            prev_err = err;
        }
    }
}

TEST_CASE("sensitivity quadrants") {
    SUBCASE("zero derivative") {
        Eigen::MatrixXd A(2, 2);
        A << -1, 5, -5, -1;
        const auto m = eigen_decompose(A);
        const auto s = eigenvalue_sensitivity(Eigen::MatrixXd::Zero(2, 2), m[0]);
        CHECK(s.value == cplx(0, 0));
        CHECK(s.verdict == Stability::kIndeterminate);
    }
    SUBCASE("published values") {
        const cplx a(-0.07, 0.29), b(0.14, 0.2), c(0.047, 0.44);
        CHECK(std::arg(a) * 180 / std::numbers::pi == doctest::Approx(104).epsilon(0.01));
        CHECK(quadrant_of(a) == Quadrant::kII);
        CHECK(quadrant_classification(a) == Stability::kDestabilizing);
        CHECK(std::arg(b) * 180 / std::numbers::pi == doctest::Approx(55).epsilon(0.01));
        CHECK(quadrant_of(b) == Quadrant::kI);
        CHECK(quadrant_of(c) == Quadrant::kI);
        CHECK(std::arg(c) * 180 / std::numbers::pi == doctest::Approx(84).epsilon(0.01));
        CHECK(quadrant_classification(c) == Stability::kStabilizing);
        CHECK(quadrant_classification({1, 0}) == Stability::kIndeterminate);
        CHECK(quadrant_classification({1, 1e-3}) == Stability::kStabilizing);
        CHECK(quadrant_classification({1, -1}) == Stability::kStabilizing);
        CHECK(quadrant_classification({-1, -1}) == Stability::kDestabilizing);
        CHECK(quadrant_classification({0, 1}) == Stability::kIndeterminate);
        CHECK(quadrant_classification({-1, 0}) == Stability::kIndeterminate);
    }
    SUBCASE("sensitivity of a diagonal entry") {
        // d/dp of diag(p, -2): d(lambda_1)/dp = 1 exactly
        Eigen::MatrixXd A(2, 2), dA = Eigen::MatrixXd::Zero(2, 2);
        A << -1, 0.3, 0, -2;
        dA(0, 0) = 1.0;
        for (const auto& m : eigen_decompose(A)) {
            const auto s = eigenvalue_sensitivity(dA, m);
            CHECK(std::abs(s.value - (m.lambda == cplx(-1, 0) ? 1.0 : 0.0)) < 1e-12);
        }
    }
    SUBCASE("damping derivative agrees with a perturbed eigenvalue") {
        const cplx l(-300, 2000), dl(4, -15);
        const double h = 1e-6;
        const double fd = (mode_frequency_damping(l + h * dl).damping - mode_frequency_damping(l - h * dl).damping) / (2 * h);
        CHECK(damping_derivative(l, dl) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("coupling classification") {
    const auto s = labels({{"sm", "psi_d"}, {"sm", "psi_q"}, {"gfl", "gamma_currd"}, {"gfl", "vsdfilt"},
                           {"grid", "omega_f"}, {"line_gfl_sm", "i_line_d"}, {"line_sm_grid", "i_line_d"}});
    Eigen::VectorXd p(7);
    p << 0, 0, 0.6, 0.4, 0, 0, 0;
    CHECK(classify_coupling(s, p) == CouplingClass::kLocalInverter);
    p << 0, 0, 0.5, 0.3, 0, 0.2, 0;
    CHECK(classify_coupling(s, p) == CouplingClass::kLocalInverter);
    p << 0.26, 0.18, 0.3, 0.2, 0.06, 0, 0;
    CHECK(classify_coupling(s, p) == CouplingClass::kCoupling);
    p << 0.5, 0.5, 0, 0, 0, 0, 0;
    CHECK(classify_coupling(s, p) == CouplingClass::kLocalSm);
    p << 0, 0, 0.02, 0, 0, 0, 0.98;
    CHECK(classify_coupling(s, p) == CouplingClass::kGrid);
    p << 0.04, 0, 0.9, 0, 0.06, 0, 0;
    CHECK(classify_coupling(s, p) == CouplingClass::kCoupling);
    CHECK(classify_coupling(s, p, 0.1) == CouplingClass::kLocalInverter);
    CHECK(device_group({"line_sm_grid", "i_line_q"}) == "grid");
    CHECK(device_group({"line_gfl_sm", "i_line_q"}) == "network");
    CHECK(device_group({"sm", "x_gov"}) == "sm");
    CHECK(device_group({"gfl", "theta_pll"}) == "gfl");
    p << 0.2, 0.1, 0.3, 0.2, 0.06, 0.04, 0.1;
    CHECK(flux_participation(s, p) == doctest::Approx(0.3));
}

TEST_CASE("nominal coupling modes involve inverter, machine flux and grid states") {
    const auto& n = nominal();
    const auto reports = analyze_modes(n.sys, n.lin);
    int coupling_hf = 0;
    for (const auto& r : reports) {
        if (r.mode.freq_hz < 100.0 || r.coupling != CouplingClass::kCoupling) continue;
        ++coupling_hf;
        auto part = [&](const char* d, const char* s) {
            for (std::size_t k = 0; k < n.lin.states.size(); ++k)
                if (n.lin.states[k].device == d && n.lin.states[k].name == s) return r.participation(static_cast<Eigen::Index>(k));
            return 0.0;
        };
        CAPTURE(r.mode.freq_hz);
        CHECK(part("gfl", "gamma_currd") + part("gfl", "gamma_currq") + part("gfl", "vsdfilt") + part("gfl", "vsqfilt") > 0.0);
        CHECK(part("sm", "psi_d") + part("sm", "psi_q") > 0.01);
        CHECK(r.groups.at("grid") > 0.01);
        CHECK(r.extended_shapes.count("gfl.Is"));
        CHECK(r.extended_shapes.count("sm.IL2"));
        CHECK(r.extended_shapes.count("grid.Ig2"));
    }
    CHECK(coupling_hf >= 4);
}

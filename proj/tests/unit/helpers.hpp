#pragma once

#include <cstring>
#include <span>

#include <Eigen/Dense>

#include "cmodes/dynamic_system.hpp"
#include "cmodes/equilibrium.hpp"

namespace testing {

// dx/dt = A x + B u with generic labels.
inline cmodes::DynamicSystem linear_system(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B = {}) {
    const auto n = A.rows();
    const Eigen::MatrixXd Bm = B.size() ? B : Eigen::MatrixXd::Zero(n, 0);
    std::vector<cmodes::StateLabel> s;
    for (Eigen::Index i = 0; i < n; ++i) s.push_back({"lin", "x" + std::to_string(i)});
    std::vector<std::string> in;
    for (Eigen::Index j = 0; j < Bm.cols(); ++j) in.push_back("u" + std::to_string(j));
    cmodes::DynamicSystem sys(s, in, [A, Bm](std::span<const double> x, std::span<const double> u, std::span<double> dx) {
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
        Eigen::Map<const Eigen::VectorXd> uv(u.data(), static_cast<Eigen::Index>(u.size()));
        Eigen::Map<Eigen::VectorXd> d(dx.data(), static_cast<Eigen::Index>(dx.size()));
        d = A * xv;
        if (Bm.cols()) d += Bm * uv;
    });
    sys.set_initial_state(Eigen::VectorXd::Zero(n));
    sys.set_nominal_inputs(Eigen::VectorXd::Zero(Bm.cols()));
    return sys;
}

inline cmodes::OperatingPoint at(const cmodes::DynamicSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
    cmodes::OperatingPoint op;
    op.x = x;
    op.u = u;
    op.state_labels = sys.states();
    op.input_labels = sys.inputs();
    return op;
}

inline bool bit_equal(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

}  // namespace testing

#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmodes/dynamic_system.hpp"
#include "cmodes/equilibrium.hpp"

namespace cmodes {

struct LinearModel {
    Eigen::MatrixXd A;  ///< n x n, 1/s
    Eigen::MatrixXd B;  ///< n x m
    std::vector<StateLabel> states;
    std::vector<std::string> inputs;
    OperatingPoint op;
    /// ||A_h - A_{h/2}||_inf / ||A||_inf (central differences only, else 0).
    double richardson_error = 0.0;

    Eigen::Index num_states() const { return A.rows(); }
};

enum class DiffMethod { kCentral, kComplexStep };

struct LinearizeOptions {
    DiffMethod method = DiffMethod::kCentral;
    double abs_step = 1e-6;
    double rel_step = 1e-6;
    bool richardson = true;
};

LinearModel linearize(const DynamicSystem& sys, const OperatingPoint& op, const LinearizeOptions& opt = {});

/// Jacobian of f with respect to x (and u) at a point; used by the integrator too.
Eigen::MatrixXd state_jacobian(const DynamicSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                               const LinearizeOptions& opt = {});

/// Output Jacobian C = d(channels)/dx at the operating point.
Eigen::MatrixXd channel_jacobian(const DynamicSystem& sys, const OperatingPoint& op, double step = 1e-7);

struct ParameterJacobianOptions {
    bool resolve = true;  ///< re-solve the operating point at p0 +- dp
    LinearizeOptions linearize;
    NewtonOptions newton;
};

using SystemFactory = std::function<DynamicSystem(double)>;

/// Central difference (A(p0+dp) - A(p0-dp)) / (2 dp).  Without re-solve the
/// perturbed models are linearized at `op0`.
Eigen::MatrixXd parameter_jacobian(const SystemFactory& factory, double p0, double dp, const OperatingPoint& op0,
                                   const ParameterJacobianOptions& opt = {});

/// Factory over a dotted config path, e.g. "gfl.Ki".
SystemFactory config_factory(const BenchmarkConfig& cfg, const std::string& path);

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M, const std::vector<std::string>& rows,
                      const std::vector<std::string>& cols);
void write_linear_model_csv(const LinearModel& m, const std::string& dir);

}  // namespace cmodes

#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cmodes/dynamic_system.hpp"
#include "cmodes/network.hpp"

namespace cmodes {

struct OperatingPoint {
    Eigen::VectorXd x;
    Eigen::VectorXd u;
    double residual_norm = 0.0;  ///< max |f_i| over the retained equations, pu/s
    int iterations = 0;
    bool used_homotopy = false;
    std::vector<StateLabel> state_labels;
    std::vector<std::string> input_labels;

    double state(const std::string& dotted) const;
    double input(const std::string& name) const;
    nlohmann::json to_json() const;
};

struct NewtonOptions {
    double tolerance = 1e-10;
    int max_iterations = 200;
    int jacobian_reuse = 5;
    double fd_step = 1e-7;
    bool homotopy = true;
    double homotopy_start = 0.2;  ///< pu, per device setpoint
    double homotopy_step = 0.1;
};

/// Damped Newton on f(x, u) = 0 honoring the system's EquilibriumPolicy.
/// `u` holds the setpoints; free inputs in it are only the starting guess.
/// Throws NumericalError on non-convergence and InfeasibleError when the
/// iteration drifts to device angles beyond 90 degrees from the grid.
OperatingPoint solve_operating_point(const DynamicSystem& sys, const Eigen::VectorXd& u,
                                     const NewtonOptions& opt = {},
                                     const std::optional<Eigen::VectorXd>& x_guess = std::nullopt);

/// Convenience: assemble the benchmark and solve at its configured setpoints.
OperatingPoint solve_operating_point(const BenchmarkConfig& cfg, const NewtonOptions& opt = {});

/// Flat-start guess of the assembled benchmark.
Eigen::VectorXd initial_guess(const BenchmarkConfig& cfg);

/// Largest absolute angle (rad) between any device angle state and the grid.
double max_device_angle(const DynamicSystem& sys, const Eigen::VectorXd& x);

}  // namespace cmodes

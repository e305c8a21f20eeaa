#pragma once

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace cmodes {

struct StateLabel {
    std::string device;
    std::string name;

    std::string str() const { return device + "." + name; }
    bool operator==(const StateLabel&) const = default;
};

/// How the steady-state solver treats this system: which states are held at
/// fixed values, which derivative rows are redundant, and which inputs absorb
/// the slack.  Counts of removed unknowns and added unknowns must match.
struct EquilibriumPolicy {
    std::vector<std::size_t> frozen_states;
    std::vector<std::size_t> dropped_equations;
    std::vector<std::size_t> free_inputs;
};

/// Labeled ODE  dx/dt = f(x, u)  with eliminated algebraic network variables.
/// The algebraic part is exposed through `residual` (current balance at the
/// eliminated nodes, identically zero by construction) and `channels`.
class DynamicSystem {
public:
    template <class T>
    using Eval = std::function<void(std::span<const T> x, std::span<const T> u, std::span<T> dxdt)>;
    using RealEval = Eval<double>;
    using ComplexEval = Eval<std::complex<double>>;
    using OutputEval = std::function<void(std::span<const double> x, std::span<const double> u, std::span<double> y)>;

    DynamicSystem(std::vector<StateLabel> states, std::vector<std::string> inputs, RealEval f,
                  ComplexEval f_complex = {});

    std::size_t num_states() const { return states_.size(); }
    std::size_t num_inputs() const { return inputs_.size(); }
    const std::vector<StateLabel>& states() const { return states_; }
    const std::vector<std::string>& inputs() const { return inputs_; }

    Eigen::VectorXd derivatives(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    void derivatives(std::span<const double> x, std::span<const double> u, std::span<double> dxdt) const;
    bool supports_complex_step() const { return static_cast<bool>(f_complex_); }
    Eigen::VectorXcd derivatives(const Eigen::VectorXcd& x, const Eigen::VectorXcd& u) const;

    /// Algebraic residual g(x, u); empty when the system has none.
    Eigen::VectorXd residual(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    const std::vector<std::string>& residual_labels() const { return residual_labels_; }
    void set_residual(std::vector<std::string> labels, OutputEval g);

    /// Derived output channels (currents, voltages, powers, magnitudes).
    Eigen::VectorXd channels(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
    const std::vector<std::string>& channel_labels() const { return channel_labels_; }
    void set_channels(std::vector<std::string> labels, OutputEval y);
    std::size_t channel_index(const std::string& name) const;

    std::size_t state_index(const std::string& device, const std::string& name) const;
    std::size_t state_index(const std::string& dotted) const;
    std::size_t input_index(const std::string& name) const;
    bool has_state(const std::string& device, const std::string& name) const;

    /// Flat-start guess and nominal inputs supplied by the assembler.
    const Eigen::VectorXd& initial_state() const { return x0_; }
    const Eigen::VectorXd& nominal_inputs() const { return u0_; }
    void set_initial_state(Eigen::VectorXd x0);
    void set_nominal_inputs(Eigen::VectorXd u0);

    const EquilibriumPolicy& equilibrium_policy() const { return policy_; }
    void set_equilibrium_policy(EquilibriumPolicy p);

private:
    std::vector<StateLabel> states_;
    std::vector<std::string> inputs_;
    RealEval f_;
    ComplexEval f_complex_;
    std::vector<std::string> residual_labels_;
    OutputEval g_;
    std::vector<std::string> channel_labels_;
    OutputEval y_;
    Eigen::VectorXd x0_;
    Eigen::VectorXd u0_;
    EquilibriumPolicy policy_;
};

}  // namespace cmodes

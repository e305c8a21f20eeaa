#include "cmodes/dynamic_system.hpp"

#include <algorithm>
#include <set>

#include "cmodes/errors.hpp"

namespace cmodes {

DynamicSystem::DynamicSystem(std::vector<StateLabel> states, std::vector<std::string> inputs, RealEval f,
                             ComplexEval f_complex)
    : states_(std::move(states)),
      inputs_(std::move(inputs)),
      f_(std::move(f)),
      f_complex_(std::move(f_complex)),
      x0_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states_.size()))),
      u0_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inputs_.size()))) {
    if (!f_) throw ValidationError("dynamic system needs a derivative evaluator");
    std::set<std::string> seen;
    for (const auto& s : states_) {
        if (!seen.insert(s.str()).second) throw ValidationError("duplicate state label " + s.str());
    }
}

void DynamicSystem::derivatives(std::span<const double> x, std::span<const double> u, std::span<double> dxdt) const {
    f_(x, u, dxdt);
}

Eigen::VectorXd DynamicSystem::derivatives(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    if (static_cast<std::size_t>(x.size()) != num_states() || static_cast<std::size_t>(u.size()) != num_inputs())
        throw ValidationError("state/input dimension mismatch");
    Eigen::VectorXd dx(x.size());
    f_({x.data(), num_states()}, {u.data(), num_inputs()}, {dx.data(), num_states()});
    return dx;
}

Eigen::VectorXcd DynamicSystem::derivatives(const Eigen::VectorXcd& x, const Eigen::VectorXcd& u) const {
    if (!f_complex_) throw ValidationError("system has no complex-step evaluator");
    Eigen::VectorXcd dx(x.size());
    f_complex_({x.data(), num_states()}, {u.data(), num_inputs()}, {dx.data(), num_states()});
    return dx;
}

Eigen::VectorXd DynamicSystem::residual(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd g(static_cast<Eigen::Index>(residual_labels_.size()));
    if (g_) g_({x.data(), num_states()}, {u.data(), num_inputs()}, {g.data(), residual_labels_.size()});
    return g;
}

void DynamicSystem::set_residual(std::vector<std::string> labels, OutputEval g) {
    residual_labels_ = std::move(labels);
    g_ = std::move(g);
}

Eigen::VectorXd DynamicSystem::channels(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd y(static_cast<Eigen::Index>(channel_labels_.size()));
    if (y_) y_({x.data(), num_states()}, {u.data(), num_inputs()}, {y.data(), channel_labels_.size()});
    return y;
}

void DynamicSystem::set_channels(std::vector<std::string> labels, OutputEval y) {
    channel_labels_ = std::move(labels);
    y_ = std::move(y);
}

std::size_t DynamicSystem::channel_index(const std::string& name) const {
    auto it = std::find(channel_labels_.begin(), channel_labels_.end(), name);
    if (it == channel_labels_.end()) throw ValidationError("unknown channel '" + name + "'");
    return static_cast<std::size_t>(it - channel_labels_.begin());
}

std::size_t DynamicSystem::state_index(const std::string& device, const std::string& name) const {
    for (std::size_t i = 0; i < states_.size(); ++i)
        if (states_[i].device == device && states_[i].name == name) return i;
    throw ValidationError("unknown state '" + device + "." + name + "'");
}

std::size_t DynamicSystem::state_index(const std::string& dotted) const {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) throw ValidationError("state label must be device.name, got '" + dotted + "'");
    return state_index(dotted.substr(0, dot), dotted.substr(dot + 1));
}

bool DynamicSystem::has_state(const std::string& device, const std::string& name) const {
    return std::any_of(states_.begin(), states_.end(),
                       [&](const StateLabel& s) { return s.device == device && s.name == name; });
}

std::size_t DynamicSystem::input_index(const std::string& name) const {
    auto it = std::find(inputs_.begin(), inputs_.end(), name);
    if (it == inputs_.end()) throw ValidationError("unknown input '" + name + "'");
    return static_cast<std::size_t>(it - inputs_.begin());
}

void DynamicSystem::set_initial_state(Eigen::VectorXd x0) {
    if (static_cast<std::size_t>(x0.size()) != num_states()) throw ValidationError("initial state size mismatch");
    x0_ = std::move(x0);
}

void DynamicSystem::set_nominal_inputs(Eigen::VectorXd u0) {
    if (static_cast<std::size_t>(u0.size()) != num_inputs()) throw ValidationError("input vector size mismatch");
    u0_ = std::move(u0);
}

void DynamicSystem::set_equilibrium_policy(EquilibriumPolicy p) {
    // unknowns = n - frozen + free ; equations = n - dropped
    if (p.frozen_states.size() != p.free_inputs.size() + p.dropped_equations.size())
        throw ValidationError("equilibrium policy leaves a non-square system");
    policy_ = std::move(p);
}

}  // namespace cmodes

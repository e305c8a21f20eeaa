#include "cmodes/equilibrium.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "cmodes/errors.hpp"

namespace cmodes {

double OperatingPoint::state(const std::string& dotted) const {
    for (std::size_t i = 0; i < state_labels.size(); ++i)
        if (state_labels[i].str() == dotted) return x(static_cast<Eigen::Index>(i));
    throw ValidationError("unknown state '" + dotted + "'");
}

double OperatingPoint::input(const std::string& name) const {
    for (std::size_t i = 0; i < input_labels.size(); ++i)
        if (input_labels[i] == name) return u(static_cast<Eigen::Index>(i));
    throw ValidationError("unknown input '" + name + "'");
}

nlohmann::json OperatingPoint::to_json() const {
    nlohmann::json j;
    nlohmann::json xs = nlohmann::json::object();
    for (std::size_t i = 0; i < state_labels.size(); ++i) xs[state_labels[i].str()] = x(static_cast<Eigen::Index>(i));
    nlohmann::json us = nlohmann::json::object();
    for (std::size_t i = 0; i < input_labels.size(); ++i) us[input_labels[i]] = u(static_cast<Eigen::Index>(i));
    j["states"] = xs;
    j["inputs"] = us;
    j["residual_norm"] = residual_norm;
    j["iterations"] = iterations;
    j["used_homotopy"] = used_homotopy;
    return j;
}

double max_device_angle(const DynamicSystem& sys, const Eigen::VectorXd& x) {
    double ref = 0.0;
    if (sys.has_state("grid", "theta_f")) ref = x(static_cast<Eigen::Index>(sys.state_index("grid", "theta_f")));
    double worst = 0.0;
    for (std::size_t i = 0; i < sys.num_states(); ++i) {
        const auto& n = sys.states()[i].name;
        if (n != "theta_sm" && n != "theta_pll") continue;
        double d = std::remainder(x(static_cast<Eigen::Index>(i)) - ref, 2.0 * std::numbers::pi);
        worst = std::max(worst, std::abs(d));
    }
    return worst;
}

namespace {

class Reduced {
public:
    Reduced(const DynamicSystem& sys, Eigen::VectorXd x, Eigen::VectorXd u)
        : sys_(sys), x_(std::move(x)), u_(std::move(u)) {
        const auto& pol = sys.equilibrium_policy();
        std::set<std::size_t> frozen(pol.frozen_states.begin(), pol.frozen_states.end());
        std::set<std::size_t> dropped(pol.dropped_equations.begin(), pol.dropped_equations.end());
        for (std::size_t i = 0; i < sys.num_states(); ++i) {
            if (!frozen.count(i)) free_x_.push_back(i);
            if (!dropped.count(i)) rows_.push_back(i);
        }
        free_u_ = pol.free_inputs;
        if (free_x_.size() + free_u_.size() != rows_.size())
            throw ValidationError("equilibrium policy leaves a non-square system");
    }

    Eigen::Index size() const { return static_cast<Eigen::Index>(rows_.size()); }

    Eigen::VectorXd pack() const {
        Eigen::VectorXd z(size());
        Eigen::Index k = 0;
        for (auto i : free_x_) z(k++) = x_(static_cast<Eigen::Index>(i));
        for (auto i : free_u_) z(k++) = u_(static_cast<Eigen::Index>(i));
        return z;
    }

    void unpack(const Eigen::VectorXd& z, Eigen::VectorXd& x, Eigen::VectorXd& u) const {
        x = x_;
        u = u_;
        Eigen::Index k = 0;
        for (auto i : free_x_) x(static_cast<Eigen::Index>(i)) = z(k++);
        for (auto i : free_u_) u(static_cast<Eigen::Index>(i)) = z(k++);
    }

    Eigen::VectorXd eval(const Eigen::VectorXd& z) const {
        Eigen::VectorXd x, u;
        unpack(z, x, u);
        const Eigen::VectorXd f = sys_.derivatives(x, u);
        Eigen::VectorXd r(size());
        for (Eigen::Index k = 0; k < size(); ++k) r(k) = f(static_cast<Eigen::Index>(rows_[static_cast<std::size_t>(k)]));
        return r;
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& z, double rel) const {
        const Eigen::Index n = size();
        Eigen::MatrixXd J(n, n);
        Eigen::VectorXd zp = z;
        for (Eigen::Index j = 0; j < n; ++j) {
            const double h = rel * std::max(1.0, std::abs(z(j)));
            zp(j) = z(j) + h;
            const Eigen::VectorXd fp = eval(zp);
            zp(j) = z(j) - h;
            const Eigen::VectorXd fm = eval(zp);
            zp(j) = z(j);
            J.col(j) = (fp - fm) / (2.0 * h);
        }
        return J;
    }

    /// Largest angle change in a step (theta_* unknowns).
    double max_angle_step(const Eigen::VectorXd& dz) const {
        double m = 0.0;
        for (std::size_t k = 0; k < free_x_.size(); ++k)
            if (sys_.states()[free_x_[k]].name.rfind("theta", 0) == 0)
                m = std::max(m, std::abs(dz(static_cast<Eigen::Index>(k))));
        return m;
    }

    std::string row_label(Eigen::Index k) const { return sys_.states()[rows_[static_cast<std::size_t>(k)]].str(); }

private:
    const DynamicSystem& sys_;
    Eigen::VectorXd x_, u_;
    std::vector<std::size_t> free_x_, rows_, free_u_;
};

constexpr double kMaxAngleStep = 0.2;  // rad

OperatingPoint newton(const DynamicSystem& sys, const Eigen::VectorXd& x0, const Eigen::VectorXd& u,
                      const NewtonOptions& opt) {
    Reduced red(sys, x0, u);
    Eigen::VectorXd z = red.pack();
    Eigen::VectorXd r = red.eval(z);
    double norm = r.lpNorm<Eigen::Infinity>();
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    int age = opt.jacobian_reuse;
    int it = 0;
    for (; it < opt.max_iterations && !(norm < opt.tolerance); ++it) {
        if (!std::isfinite(norm)) break;
        bool fresh = false;
        if (age >= opt.jacobian_reuse) {
            lu.compute(red.jacobian(z, opt.fd_step));
            age = 0;
            fresh = true;
        }
        for (;;) {
            // Natural monotonicity test: the simplified Newton correction must
            // shrink.  Unlike |f| it is insensitive to the stiff rows.
            const Eigen::VectorXd dz = lu.solve(-r);
            const double dz_norm = dz.norm();
            // Full steps in the angles leave the region where the linear model
            // holds on stiff networks.
            double alpha = std::min(1.0, kMaxAngleStep / std::max(red.max_angle_step(dz), 1e-300));
            bool accepted = false;
            while (alpha > 1e-4) {
                const Eigen::VectorXd zt = z + alpha * dz;
                const Eigen::VectorXd rt = red.eval(zt);
                const double nt = rt.lpNorm<Eigen::Infinity>();
                if (std::isfinite(nt)) {
                    const double dzt = lu.solve(-rt).norm();
                    if (dzt < (1.0 - 0.25 * alpha) * dz_norm || nt < opt.tolerance) {
                        z = zt;
                        r = rt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if (accepted) break;
            if (fresh) {
                // No descent possible even with a fresh Jacobian (roundoff floor
                // or a genuinely singular point).
                it = opt.max_iterations;
                break;
            }
            lu.compute(red.jacobian(z, opt.fd_step));
            age = 0;
            fresh = true;
        }
        ++age;
    }

    OperatingPoint op;
    red.unpack(z, op.x, op.u);
    op.iterations = std::min(it, opt.max_iterations);
    op.residual_norm = sys.derivatives(op.x, op.u).lpNorm<Eigen::Infinity>();
    op.state_labels = sys.states();
    op.input_labels = sys.inputs();
    if (!(op.residual_norm < opt.tolerance)) {
        if (max_device_angle(sys, op.x) > std::numbers::pi / 2)
            throw InfeasibleError("operating point infeasible: device angle exceeds 90 degrees");
        Eigen::Index worst = 0;
        if (std::isfinite(norm)) r.cwiseAbs().maxCoeff(&worst);
        throw NumericalError("equilibrium did not converge (residual " + std::to_string(op.residual_norm) +
                             ", largest at " + red.row_label(worst) + ")");
    }
    return op;
}

}  // namespace

OperatingPoint solve_operating_point(const DynamicSystem& sys, const Eigen::VectorXd& u, const NewtonOptions& opt,
                                     const std::optional<Eigen::VectorXd>& x_guess) {
    if (static_cast<std::size_t>(u.size()) != sys.num_inputs()) throw ValidationError("input vector size mismatch");
    const Eigen::VectorXd x0 = x_guess ? *x_guess : sys.initial_state();
    try {
        return newton(sys, x0, u, opt);
    } catch (const NumericalError&) {
        if (!opt.homotopy) throw;
    }

    std::vector<Eigen::Index> psets;
    double top = 0.0;
    for (std::size_t i = 0; i < sys.num_inputs(); ++i) {
        const auto& n = sys.inputs()[i];
        if (n.size() > 6 && n.compare(n.size() - 6, 6, ".P_set") == 0) {
            psets.push_back(static_cast<Eigen::Index>(i));
            top = std::max(top, std::abs(u(static_cast<Eigen::Index>(i))));
        }
    }
    if (psets.empty() || top <= opt.homotopy_start) return newton(sys, x0, u, opt);

    NewtonOptions inner = opt;
    inner.homotopy = false;
    Eigen::VectorXd x = x0;
    Eigen::VectorXd uk = u;
    int total = 0;
    for (double level = opt.homotopy_start;; level += opt.homotopy_step) {
        const bool last = level >= top - 1e-12;
        for (auto i : psets) {
            const double t = u(i);
            uk(i) = last ? t : std::copysign(std::min(std::abs(t), level), t);
        }
        OperatingPoint op = newton(sys, x, uk, inner);
        total += op.iterations;
        x = op.x;
        // Carry the slack input forward as the next guess.
        for (auto i : sys.equilibrium_policy().free_inputs) uk(static_cast<Eigen::Index>(i)) = op.u(static_cast<Eigen::Index>(i));
        if (last) {
            op.iterations = total;
            op.used_homotopy = true;
            return op;
        }
    }
}

OperatingPoint solve_operating_point(const BenchmarkConfig& cfg, const NewtonOptions& opt) {
    const DynamicSystem sys = assemble_benchmark(cfg);
    return solve_operating_point(sys, sys.nominal_inputs(), opt);
}

Eigen::VectorXd initial_guess(const BenchmarkConfig& cfg) { return assemble_benchmark(cfg).initial_state(); }

}  // namespace cmodes

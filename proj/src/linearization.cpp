#include "cmodes/linearization.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <fmt/format.h>

#include "cmodes/config.hpp"
#include "cmodes/errors.hpp"

namespace cmodes {

namespace {

double step_for(double v, const LinearizeOptions& opt) { return std::max(opt.abs_step, opt.rel_step * std::abs(v)); }

// Columns of d f / d z where z is x (kind 0) or u (kind 1).
Eigen::MatrixXd jac_central(const DynamicSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, int kind,
                            const LinearizeOptions& opt, double scale) {
    const Eigen::Index n = x.size();
    const Eigen::Index m = kind == 0 ? x.size() : u.size();
    Eigen::MatrixXd J(n, m);
    Eigen::VectorXd xp = x, up = u;
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::VectorXd& z = kind == 0 ? xp : up;
        const double z0 = z(j);
        const double h = scale * step_for(z0, opt);
        z(j) = z0 + h;
        const Eigen::VectorXd fp = sys.derivatives(xp, up);
        z(j) = z0 - h;
        const Eigen::VectorXd fm = sys.derivatives(xp, up);
        z(j) = z0;
        J.col(j) = (fp - fm) / (2.0 * h);
    }
    return J;
}

Eigen::MatrixXd jac_complex(const DynamicSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u, int kind) {
    if (!sys.supports_complex_step()) throw ValidationError("complex-step differentiation not available for this system");
    const Eigen::Index n = x.size();
    const Eigen::Index m = kind == 0 ? x.size() : u.size();
    constexpr double h = 1e-30;
    Eigen::MatrixXd J(n, m);
    Eigen::VectorXcd xc = x.cast<std::complex<double>>(), uc = u.cast<std::complex<double>>();
    for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::VectorXcd& z = kind == 0 ? xc : uc;
        z(j) += std::complex<double>(0.0, h);
        J.col(j) = sys.derivatives(xc, uc).imag() / h;
        z(j) = z(j).real();
    }
    return J;
}

void check_finite(const Eigen::MatrixXd& M, const std::vector<StateLabel>& rows, const char* what) {
    for (Eigen::Index j = 0; j < M.cols(); ++j)
        for (Eigen::Index i = 0; i < M.rows(); ++i)
            if (!std::isfinite(M(i, j)))
                throw NumericalError(fmt::format("non-finite {} entry ({}, {}) in row {}", what, i, j,
                                                 rows[static_cast<std::size_t>(i)].str()));
}

}  // namespace

Eigen::MatrixXd state_jacobian(const DynamicSystem& sys, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                               const LinearizeOptions& opt) {
    return opt.method == DiffMethod::kComplexStep ? jac_complex(sys, x, u, 0) : jac_central(sys, x, u, 0, opt, 1.0);
}

LinearModel linearize(const DynamicSystem& sys, const OperatingPoint& op, const LinearizeOptions& opt) {
    if (static_cast<std::size_t>(op.x.size()) != sys.num_states() ||
        static_cast<std::size_t>(op.u.size()) != sys.num_inputs())
        throw ValidationError("operating point does not match the system dimensions");
    LinearModel m;
    m.states = sys.states();
    m.inputs = sys.inputs();
    m.op = op;
    if (opt.method == DiffMethod::kComplexStep) {
        m.A = jac_complex(sys, op.x, op.u, 0);
        m.B = jac_complex(sys, op.x, op.u, 1);
    } else {
        m.A = jac_central(sys, op.x, op.u, 0, opt, 1.0);
        m.B = jac_central(sys, op.x, op.u, 1, opt, 1.0);
        if (opt.richardson) {
            const Eigen::MatrixXd A2 = jac_central(sys, op.x, op.u, 0, opt, 0.5);
            const double scale = m.A.cwiseAbs().rowwise().sum().maxCoeff();
            m.richardson_error = scale > 0 ? (m.A - A2).cwiseAbs().rowwise().sum().maxCoeff() / scale : 0.0;
        }
    }
    check_finite(m.A, m.states, "A");
    check_finite(m.B, m.states, "B");
    return m;
}

Eigen::MatrixXd channel_jacobian(const DynamicSystem& sys, const OperatingPoint& op, double step) {
    const Eigen::Index n = op.x.size();
    const auto ny = static_cast<Eigen::Index>(sys.channel_labels().size());
    Eigen::MatrixXd C(ny, n);
    Eigen::VectorXd xp = op.x;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double h = std::max(step, step * std::abs(op.x(j)));
        xp(j) = op.x(j) + h;
        const Eigen::VectorXd yp = sys.channels(xp, op.u);
        xp(j) = op.x(j) - h;
        const Eigen::VectorXd ym = sys.channels(xp, op.u);
        xp(j) = op.x(j);
        C.col(j) = (yp - ym) / (2.0 * h);
    }
    return C;
}

Eigen::MatrixXd parameter_jacobian(const SystemFactory& factory, double p0, double dp, const OperatingPoint& op0,
                                   const ParameterJacobianOptions& opt) {
    if (!(dp > 0.0)) throw ValidationError("parameter step must be positive");
    auto at = [&](double p) {
        const DynamicSystem sys = factory(p);
        OperatingPoint op = op0;
        if (opt.resolve) {
            try {
                op = solve_operating_point(sys, op0.u, opt.newton, op0.x);
            } catch (const NumericalError& e) {
                throw NumericalError(fmt::format("re-solve failed at p = {:.9g}: {}", p, e.what()));
            }
        }
        LinearizeOptions lo = opt.linearize;
        lo.richardson = false;
        return linearize(sys, op, lo).A;
    };
    return (at(p0 + dp) - at(p0 - dp)) / (2.0 * dp);
}

SystemFactory config_factory(const BenchmarkConfig& cfg, const std::string& path) {
    (void)get_parameter(cfg, path);
    return [cfg, path](double p) { return assemble_benchmark(with_parameter(cfg, path, p)); };
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M, const std::vector<std::string>& rows,
                      const std::vector<std::string>& cols) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "state";
    for (const auto& c : cols) out << ',' << c;
    out << '\n';
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        out << rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < M.cols(); ++j) out << ',' << fmt::format("{:.9g}", M(i, j));
        out << '\n';
    }
}

void write_linear_model_csv(const LinearModel& m, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> s;
    for (const auto& l : m.states) s.push_back(l.str());
    write_matrix_csv((std::filesystem::path(dir) / "A.csv").string(), m.A, s, s);
    write_matrix_csv((std::filesystem::path(dir) / "B.csv").string(), m.B, s, m.inputs);
}

}  // namespace cmodes

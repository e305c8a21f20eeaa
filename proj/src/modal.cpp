#include "cmodes/modal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cmodes/errors.hpp"
#include "cmodes/models.hpp"

namespace cmodes {

EigenDecomposition full_decomposition(const Eigen::MatrixXd& A) {
    if (A.rows() != A.cols()) throw ValidationError("state matrix must be square");
    if (!A.allFinite()) throw ValidationError("state matrix has non-finite entries");
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, true);
    if (es.info() != Eigen::Success) {
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
        const auto s = svd.singularValues();
        throw NumericalError(fmt::format("eigensolver did not converge (condition estimate {:.3e})",
                                         s(0) / std::max(s(s.size() - 1), 1e-300)));
    }
    EigenDecomposition d;
    d.values = es.eigenvalues();
    d.right = es.eigenvectors();
    for (Eigen::Index j = 0; j < d.right.cols(); ++j) d.right.col(j).normalize();
    const Eigen::FullPivLU<Eigen::MatrixXcd> lu(d.right);
    if (!lu.isInvertible() || lu.rcond() < 1e-14)
        throw NumericalError("state matrix is (nearly) defective; perturb a parameter slightly and retry");
    d.left = lu.inverse();
    const double a_norm = A.cwiseAbs().rowwise().sum().maxCoeff();
    for (Eigen::Index j = 0; j < d.values.size(); ++j) {
        const double res = (A.cast<cplx>() * d.right.col(j) - d.values(j) * d.right.col(j)).norm();
        if (res > 1e-8 * std::max(a_norm, 1.0))
            throw NumericalError(fmt::format("eigenpair {} residual {:.3e} too large", j, res));
    }
    return d;
}

FreqDamping mode_frequency_damping(cplx lambda) {
    const double mag = std::abs(lambda);
    return {std::abs(lambda.imag()) / (2.0 * std::numbers::pi), mag == 0.0 ? 1.0 : -lambda.real() / mag};
}

std::vector<Mode> eigen_decompose(const Eigen::MatrixXd& A) {
    const EigenDecomposition d = full_decomposition(A);
    std::vector<Mode> modes;
    for (Eigen::Index j = 0; j < d.values.size(); ++j) {
        const cplx l = d.values(j);
        const bool real = std::abs(l.imag()) <= 1e-12 * std::max(1.0, std::abs(l));
        if (!real && l.imag() < 0) continue;
        Mode m;
        m.lambda = real ? cplx(l.real(), 0.0) : l;
        const auto fd = mode_frequency_damping(m.lambda);
        m.freq_hz = fd.freq_hz;
        m.damping = fd.damping;
        m.phi = d.right.col(j);
        m.psi = d.left.row(j).transpose();
        m.conjugate_pair = !real;
        m.index = j;
        modes.push_back(std::move(m));
    }
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
        if (a.freq_hz != b.freq_hz) return a.freq_hz > b.freq_hz;
        return a.lambda.real() > b.lambda.real();
    });
    return modes;
}

Eigen::VectorXd participation(const Mode& mode, ParticipationNorm norm) {
    Eigen::VectorXd p = mode.phi.cwiseProduct(mode.psi).cwiseAbs();
    const double s = norm == ParticipationNorm::kSumToOne ? p.sum() : p.maxCoeff();
    if (!(s > 0.0)) throw NumericalError("mode has zero participation; eigenvectors are degenerate");
    return p / s;
}

Eigen::MatrixXd participation_factors(const std::vector<Mode>& modes, ParticipationNorm norm) {
    if (modes.empty()) return {};
    Eigen::MatrixXd P(modes.front().phi.size(), static_cast<Eigen::Index>(modes.size()));
    for (std::size_t i = 0; i < modes.size(); ++i) P.col(static_cast<Eigen::Index>(i)) = participation(modes[i], norm);
    return P;
}

cplx extended_mode_shape(cplx gamma_d, cplx gamma_q, double id0, double iq0) {
    const double im0 = std::hypot(id0, iq0);
    if (!(im0 > 0.0)) throw ValidationError("extended mode shape undefined for a zero operating current");
    return (id0 / im0) * gamma_d + (iq0 / im0) * gamma_q;
}

cplx channel_mode_shape(const DynamicSystem& sys, const OperatingPoint& op, const Eigen::MatrixXd& C,
                        const Mode& mode, const std::string& d_name, const std::string& q_name) {
    const auto id = static_cast<Eigen::Index>(sys.channel_index(d_name));
    const auto iq = static_cast<Eigen::Index>(sys.channel_index(q_name));
    const Eigen::VectorXd y0 = sys.channels(op.x, op.u);
    const cplx gd = C.row(id).cast<cplx>().dot(mode.phi);
    const cplx gq = C.row(iq).cast<cplx>().dot(mode.phi);
    // Eigen's dot conjugates the first argument; C is real so this is a plain product.
    return extended_mode_shape(gd, gq, y0(id), y0(iq));
}

Quadrant quadrant_of(cplx s, double tol_deg) {
    if (s == cplx(0.0, 0.0)) return Quadrant::kBoundary;
    const double a = std::arg(s) * 180.0 / std::numbers::pi;
    for (double b : {-180.0, -90.0, 0.0, 90.0, 180.0})
        if (std::abs(a - b) <= tol_deg) return Quadrant::kBoundary;
    if (a > 0 && a < 90) return Quadrant::kI;
    if (a > 90) return Quadrant::kII;
    if (a < -90) return Quadrant::kIII;
    return Quadrant::kIV;
}

Stability quadrant_classification(cplx s) {
    switch (quadrant_of(s)) {
        case Quadrant::kI:
        case Quadrant::kIV: return Stability::kStabilizing;
        case Quadrant::kII:
        case Quadrant::kIII: return Stability::kDestabilizing;
        default: return Stability::kIndeterminate;
    }
}

Sensitivity eigenvalue_sensitivity(const Eigen::MatrixXd& dA_dp, const Mode& mode) {
    const cplx den = mode.psi.transpose() * mode.phi;
    Sensitivity s;
    s.near_defective = std::abs(den) < 1e-8;
    if (std::abs(den) == 0.0) throw NumericalError("left and right eigenvectors are orthogonal (defective mode)");
    s.value = cplx(mode.psi.transpose() * (dA_dp.cast<cplx>() * mode.phi)) / den;
    s.magnitude = std::abs(s.value);
    s.angle_deg = std::arg(s.value) * 180.0 / std::numbers::pi;
    s.quadrant = quadrant_of(s.value);
    s.verdict = quadrant_classification(s.value);
    return s;
}

double damping_derivative(cplx lambda, cplx dlambda) {
    const double mag = std::abs(lambda);
    if (mag == 0.0) return 0.0;
    const double w = std::abs(lambda.imag());
    const double dw = lambda.imag() >= 0 ? dlambda.imag() : -dlambda.imag();
    return -w * (w * dlambda.real() - lambda.real() * dw) / (mag * mag * mag);
}

std::string to_string(Quadrant q) {
    switch (q) {
        case Quadrant::kI: return "I";
        case Quadrant::kII: return "II";
        case Quadrant::kIII: return "III";
        case Quadrant::kIV: return "IV";
        default: return "boundary";
    }
}

std::string to_string(Stability s) {
    switch (s) {
        case Stability::kStabilizing: return "stabilizing";
        case Stability::kDestabilizing: return "destabilizing";
        default: return "indeterminate";
    }
}

std::string to_string(CouplingClass c) {
    switch (c) {
        case CouplingClass::kCoupling: return "coupling";
        case CouplingClass::kLocalInverter: return "local-inverter";
        case CouplingClass::kLocalSm: return "local-SM";
        case CouplingClass::kGrid: return "grid";
        default: return "network";
    }
}

std::string device_group(const StateLabel& s) {
    if (s.device == "grid") return "grid";
    if (s.device.rfind("line_", 0) == 0) {
        // Branches feeding the equivalent grid carry its current.
        const std::string suffix = "_grid";
        const bool to_grid = s.device.size() > suffix.size() &&
                             s.device.compare(s.device.size() - suffix.size(), suffix.size(), suffix) == 0;
        return to_grid ? "grid" : "network";
    }
    for (auto n : SmState<double>::kNames)
        if (s.name == n) return "sm";
    for (auto n : AvrGovState<double>::kNames)
        if (s.name == n) return "sm";
    return "gfl";
}

std::map<std::string, double> group_participation(const std::vector<StateLabel>& states, const Eigen::VectorXd& p) {
    std::map<std::string, double> g{{"sm", 0.0}, {"gfl", 0.0}, {"grid", 0.0}, {"network", 0.0}};
    for (std::size_t k = 0; k < states.size(); ++k) g[device_group(states[k])] += p(static_cast<Eigen::Index>(k));
    return g;
}

CouplingClass classify_coupling(const std::vector<StateLabel>& states, const Eigen::VectorXd& p, double threshold) {
    const auto g = group_participation(states, p);
    int above = 0;
    for (const char* k : {"sm", "gfl", "grid"})
        if (g.at(k) > threshold) ++above;
    if (above >= 2) return CouplingClass::kCoupling;
    std::string best = "network";
    double v = -1.0;
    for (const auto& [k, x] : g)
        if (x > v) {
            v = x;
            best = k;
        }
    if (best == "sm") return CouplingClass::kLocalSm;
    if (best == "gfl") return CouplingClass::kLocalInverter;
    if (best == "grid") return CouplingClass::kGrid;
    return CouplingClass::kNetwork;
}

double flux_participation(const std::vector<StateLabel>& states, const Eigen::VectorXd& p) {
    double s = 0.0;
    for (std::size_t k = 0; k < states.size(); ++k)
        if (states[k].name == "psi_d" || states[k].name == "psi_q") s += p(static_cast<Eigen::Index>(k));
    return s;
}

std::vector<ModeReport> analyze_modes(const DynamicSystem& sys, const LinearModel& m, const ModalOptions& opt) {
    const auto modes = eigen_decompose(m.A);
    Eigen::MatrixXd C;
    std::vector<std::pair<std::string, std::string>> mags;  // magnitude name, device prefix
    if (opt.extended_shapes) {
        const auto& ch = sys.channel_labels();
        for (const auto& c : ch) {
            if (c.size() < 3 || c.compare(c.size() - 2, 2, "_d") != 0) continue;
            const std::string base = c.substr(0, c.size() - 2);
            if (std::find(ch.begin(), ch.end(), base + "_q") != ch.end() &&
                std::find(ch.begin(), ch.end(), base) != ch.end())
                mags.emplace_back(base, base);
        }
        if (!mags.empty()) C = channel_jacobian(sys, m.op);
    }
    const Eigen::VectorXd y0 = mags.empty() ? Eigen::VectorXd() : sys.channels(m.op.x, m.op.u);
    std::vector<ModeReport> out;
    for (const auto& mode : modes) {
        ModeReport r;
        r.mode = mode;
        r.participation = participation(mode);
        r.groups = group_participation(m.states, r.participation);
        r.coupling = classify_coupling(m.states, r.participation, opt.coupling_threshold);
        for (const auto& [name, base] : mags) {
            if (y0(static_cast<Eigen::Index>(sys.channel_index(base))) <= 1e-9) continue;
            r.extended_shapes[name] = channel_mode_shape(sys, m.op, C, mode, base + "_d", base + "_q");
        }
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace cmodes

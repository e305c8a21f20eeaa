#pragma once

#include <complex>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmodes/linearization.hpp"

namespace cmodes {

using cplx = std::complex<double>;

struct Mode {
    cplx lambda;
    double freq_hz = 0.0;
    double damping = 1.0;  ///< fraction
    Eigen::VectorXcd phi;  ///< right eigenvector, unit 2-norm
    Eigen::VectorXcd psi;  ///< left eigenvector (row of Phi^-1), psi^T phi = 1
    bool conjugate_pair = false;  ///< stands for itself and its conjugate
    Eigen::Index index = 0;       ///< column in the full decomposition
};

/// Full decomposition: A Phi = Phi diag(values), Psi = Phi^-1.
struct EigenDecomposition {
    Eigen::VectorXcd values;
    Eigen::MatrixXcd right;
    Eigen::MatrixXcd left;
};

EigenDecomposition full_decomposition(const Eigen::MatrixXd& A);

/// Modes with Im(lambda) >= 0, conjugate pairs stored once.  Sorted by
/// decreasing frequency, then by decreasing real part.
std::vector<Mode> eigen_decompose(const Eigen::MatrixXd& A);
inline std::vector<Mode> eigen_decompose(const LinearModel& m) { return eigen_decompose(m.A); }

struct FreqDamping {
    double freq_hz;
    double damping;
};
FreqDamping mode_frequency_damping(cplx lambda);

enum class ParticipationNorm { kSumToOne, kMaxToOne };

/// p(k, i) for state k in mode i.
Eigen::MatrixXd participation_factors(const std::vector<Mode>& modes,
                                      ParticipationNorm norm = ParticipationNorm::kSumToOne);
Eigen::VectorXd participation(const Mode& mode, ParticipationNorm norm = ParticipationNorm::kSumToOne);

/// (Id0/Im0) gamma_d + (Iq0/Im0) gamma_q.
cplx extended_mode_shape(cplx gamma_d, cplx gamma_q, double id0, double iq0);

/// Extended shape of a magnitude channel whose d and q parts are the
/// channels `d_name` and `q_name`, using the output Jacobian C.
cplx channel_mode_shape(const DynamicSystem& sys, const OperatingPoint& op, const Eigen::MatrixXd& C,
                        const Mode& mode, const std::string& d_name, const std::string& q_name);

enum class Quadrant { kI, kII, kIII, kIV, kBoundary };
enum class Stability { kStabilizing, kDestabilizing, kIndeterminate };

struct Sensitivity {
    cplx value;
    double magnitude = 0.0;
    double angle_deg = 0.0;
    Quadrant quadrant = Quadrant::kBoundary;
    Stability verdict = Stability::kIndeterminate;
    bool near_defective = false;
};

Quadrant quadrant_of(cplx s, double tol_deg = 1e-9);
Stability quadrant_classification(cplx s);
Sensitivity eigenvalue_sensitivity(const Eigen::MatrixXd& dA_dp, const Mode& mode);
/// First-order change of the damping ratio implied by d(lambda)/dp.
double damping_derivative(cplx lambda, cplx dlambda);

std::string to_string(Quadrant q);
std::string to_string(Stability s);

enum class CouplingClass { kCoupling, kLocalInverter, kLocalSm, kGrid, kNetwork };
std::string to_string(CouplingClass c);

/// Device group of a state: "sm", "gfl", "grid" (including branches into the
/// grid node), or "network" for the remaining branches.
std::string device_group(const StateLabel& s);

std::map<std::string, double> group_participation(const std::vector<StateLabel>& states, const Eigen::VectorXd& p);

/// Coupling iff at least two of {sm, gfl, grid} exceed `threshold`.
CouplingClass classify_coupling(const std::vector<StateLabel>& states, const Eigen::VectorXd& p,
                                double threshold = 0.05);

struct ModeReport {
    Mode mode;
    Eigen::VectorXd participation;
    std::map<std::string, cplx> extended_shapes;
    std::map<std::string, Sensitivity> sensitivities;
    CouplingClass coupling = CouplingClass::kNetwork;
    std::map<std::string, double> groups;
};

struct ModalOptions {
    double coupling_threshold = 0.05;
    bool extended_shapes = true;
};

/// Decomposition plus participation, coupling class, and (for the benchmark's
/// current magnitudes) extended mode shapes.
std::vector<ModeReport> analyze_modes(const DynamicSystem& sys, const LinearModel& m, const ModalOptions& opt = {});

/// Relative share of the SM flux states psi_d, psi_q (and rotor fluxes) in a mode.
double flux_participation(const std::vector<StateLabel>& states, const Eigen::VectorXd& p);

}  // namespace cmodes

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cmodes/config.hpp"
#include "cmodes/modal.hpp"

namespace cmodes {

enum class Conservation { kNone, kTotalGeneration };

struct SweepSpec {
    std::string parameter;  ///< dotted config path, e.g. "lines.lcc_km"
    std::vector<double> values;
    Conservation conservation = Conservation::kNone;
    double p_total = 1.0;  ///< with kTotalGeneration: P_sm = p_total - P_inv
    double mac_threshold = 0.7;
    /// Extra evaluation points inserted between consecutive grid values; they
    /// only serve the mode linking and are not reported.
    int tracking_substeps = 0;
    /// Also compute d(lambda)/dp at every reported point.
    bool sensitivities = false;
    LinearizeOptions linearize;
    NewtonOptions newton;

    void validate() const;
};

struct SweepPoint {
    double value = 0.0;
    bool ok = false;
    std::string error;
    OperatingPoint op;
    std::vector<Mode> modes;
    Eigen::MatrixXd participation;  ///< states x modes
    std::vector<CouplingClass> coupling;
    std::vector<double> flux;                   ///< psi_d + psi_q share per mode
    std::vector<std::optional<Sensitivity>> sensitivity;  ///< per mode, when requested
};

/// One tracked mode: entries (point index, mode index) in sweep order.
struct Trajectory {
    std::vector<std::size_t> point;
    std::vector<std::size_t> mode;
    std::vector<double> mac;  ///< MAC of each link (first entry is 1)
};

struct SweepResult {
    SweepSpec spec;
    std::string context;
    std::vector<StateLabel> states;
    std::vector<SweepPoint> points;
    std::vector<Trajectory> trajectories;

    const Mode& mode_at(const Trajectory& t, std::size_t k) const { return points[t.point[k]].modes[t.mode[k]]; }
    std::vector<double> parameter_values(const Trajectory& t) const;
    std::vector<double> damping(const Trajectory& t) const;
    std::vector<double> frequency(const Trajectory& t) const;
    std::vector<double> flux(const Trajectory& t) const;
};

double mac(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b);

struct ModeLink {
    std::size_t prev;
    std::size_t next;
    double mac;
};

/// Greedy MAC assignment; ties broken by eigenvalue distance.
std::vector<ModeLink> track_modes(const std::vector<Mode>& prev, const std::vector<Mode>& next,
                                  double threshold = 0.7);

SweepResult run_sweep(const BenchmarkConfig& cfg, const SweepSpec& spec);

/// Total generation held at `p_total`: P_sm = p_total - P_inv at every point.
SweepResult penetration_sweep(const BenchmarkConfig& cfg, const std::vector<double>& p_inv_grid,
                              double p_total = 1.0, const SweepSpec& base = {});

/// Least-squares slope of y over x.
double ls_slope(const std::vector<double>& x, const std::vector<double>& y);

enum class Tendency { kStructural, kNonStructural, kNeutral };
std::string to_string(Tendency t);

struct TendencyVerdict {
    std::size_t trajectory = 0;   ///< index in the first context
    cplx lambda_start;            ///< first-context eigenvalue at the first point
    std::vector<std::optional<double>> slopes;  ///< per context; empty when untracked
    std::vector<int> signs;       ///< -1, 0 (neutral / missing), +1
    Tendency verdict = Tendency::kNeutral;
    bool weak = false;
};

struct TendencyOptions {
    double slope_tolerance = 1e-4;  ///< damping change over the whole grid below which a trend is flat
    double match_mac = 0.5;        ///< cross-context trajectory matching
    double min_frequency_hz = 0.0; ///< only classify modes above this frequency
};

/// Damping-trend sign per context; structural iff all non-neutral signs agree.
std::vector<TendencyVerdict> classify_tendency(const std::vector<SweepResult>& contexts,
                                               const TendencyOptions& opt = {});

/// Apply a context string such as "P=0.9,lcc=5" or "setpoints.P_inv=0.9" to a config.
BenchmarkConfig apply_context(const BenchmarkConfig& cfg, const std::string& context);

}  // namespace cmodes

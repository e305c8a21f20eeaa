#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cmodes/dynamic_system.hpp"
#include "cmodes/equilibrium.hpp"
#include "cmodes/modal.hpp"

namespace cmodes {

struct InputEvent {
    double time = 0.0;
    std::string input;
    double value = 0.0;
};

struct Scenario {
    std::optional<Eigen::VectorXd> x0;  ///< default: the operating point's state
    std::vector<InputEvent> events;     ///< time-ordered
    double t_end = 1.0;
    double max_step = 10e-6;
    double min_step = 1e-9;
    double sample_dt = 0.0;             ///< resampling grid; 0 = max_step
    /// State labels ("gfl.isd") or channel names ("gfl.Is"); empty = all states.
    std::vector<std::string> outputs;

    void validate() const;
};

struct Trace {
    std::vector<double> time;
    std::vector<std::string> names;
    std::vector<std::vector<double>> data;  ///< one vector per channel
    Eigen::VectorXd final_state;

    const std::vector<double>& channel(const std::string& name) const;
    std::size_t size() const { return time.size(); }
};

/// Implicit trapezoidal rule with a chord-Newton corrector, fixed step with
/// halving on corrector failure.
Trace simulate(const DynamicSystem& sys, const OperatingPoint& op, const Scenario& scenario);

/// Pointwise sqrt(d^2 + q^2).
std::vector<double> channel_magnitude(const std::vector<double>& d, const std::vector<double>& q);

struct RingdownFit {
    double freq_hz = 0.0;
    double damping = 0.0;
    double amplitude = 0.0;
    double sigma = 0.0;  ///< 1/s
    double omega = 0.0;  ///< rad/s
    double phase = 0.0;
    double rms_residual = 0.0;
};

struct FitOptions {
    int detrend_degree = 1;    ///< polynomial baseline fitted jointly with the cosine
    double min_peak_ratio = 8.0;  ///< spectral peak over median magnitude
};

/// Fits y(t) ~ poly(t) + A e^{sigma t} cos(omega t + phi) on [t0, t1].
/// Throws NumericalError("no oscillation detected") when the spectrum has no peak.
RingdownFit estimate_mode_from_trace(const std::vector<double>& t, const std::vector<double>& y, double t0,
                                     double t1, const FitOptions& opt = {});
RingdownFit estimate_mode_from_trace(const Trace& trace, const std::string& channel, double t0, double t1,
                                     const FitOptions& opt = {});

/// Pearson correlation of two equally sampled signals.
double correlation(const std::vector<double>& a, const std::vector<double>& b);

/// Modal coordinate Re(psi^T (x(t) - x_ref)) of a trace that records every
/// state in system order.  In the linear regime it is a single damped cosine.
std::vector<double> modal_coordinate(const Trace& trace, const std::vector<StateLabel>& states, const Mode& mode,
                                     const Eigen::VectorXd& x_ref);

/// Zero-phase FFT band-pass keeping |f| in [f_lo, f_hi].
std::vector<double> bandpass(const std::vector<double>& y, double dt, double f_lo, double f_hi);

/// Samples of `y` with t in [t0, t1].
std::vector<double> window(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1);

struct ModalRingdown {
    Trace trace;             ///< every state plus the requested channels
    OperatingPoint after;    ///< equilibrium for the post-step inputs
    std::vector<double> z;   ///< modal coordinate on trace.time
    RingdownFit fit;
    double t0 = 0.0, t1 = 0.0;  ///< fit window
};

struct RingdownOptions {
    double delay = 0.5e-3;  ///< skip after the step
    double cycles = 5.0;    ///< window length in periods of the predicted mode
    double max_step = 10e-6;
    std::vector<std::string> channels;
    FitOptions fit;
};

/// Setpoint step from `op`, then a damped-cosine fit of the target mode's
/// modal coordinate measured from the post-step equilibrium.
ModalRingdown modal_ringdown(const DynamicSystem& sys, const OperatingPoint& op, const Mode& mode,
                             const InputEvent& step, const RingdownOptions& opt = {});

void write_trace_csv(const Trace& trace, const std::string& path);

}  // namespace cmodes

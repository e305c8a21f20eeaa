#include "cmodes/timedomain.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <unsupported/Eigen/FFT>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "cmodes/errors.hpp"
#include "cmodes/linearization.hpp"

namespace cmodes {

void Scenario::validate() const {
    if (!(t_end > 0.0)) throw ValidationError("scenario: t_end must be positive");
    if (!(max_step > 0.0) || !(min_step > 0.0) || min_step > max_step)
        throw ValidationError("scenario: invalid step bounds");
    if (sample_dt < 0.0) throw ValidationError("scenario: negative sample_dt");
    for (std::size_t i = 1; i < events.size(); ++i)
        if (events[i].time < events[i - 1].time) throw ValidationError("scenario: events must be time-ordered");
    for (const auto& e : events)
        if (e.time < 0.0) throw ValidationError("scenario: negative event time");
}

const std::vector<double>& Trace::channel(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return data[i];
    throw ValidationError("trace has no channel '" + name + "'");
}

namespace {

struct OutputMap {
    std::vector<int> state;    // >= 0: state index
    std::vector<int> channel;  // >= 0: channel index
    bool need_channels = false;
};

OutputMap map_outputs(const DynamicSystem& sys, std::vector<std::string>& names) {
    OutputMap m;
    if (names.empty())
        for (const auto& s : sys.states()) names.push_back(s.str());
    for (const auto& n : names) {
        int s = -1, c = -1;
        const auto& ch = sys.channel_labels();
        auto it = std::find(ch.begin(), ch.end(), n);
        if (it != ch.end()) {
            c = static_cast<int>(it - ch.begin());
            m.need_channels = true;
        } else {
            s = static_cast<int>(sys.state_index(n));
        }
        m.state.push_back(s);
        m.channel.push_back(c);
    }
    return m;
}

}  // namespace

Trace simulate(const DynamicSystem& sys, const OperatingPoint& op, const Scenario& sc) {
    sc.validate();
    Eigen::VectorXd x = sc.x0 ? *sc.x0 : op.x;
    Eigen::VectorXd u = op.u;
    if (static_cast<std::size_t>(x.size()) != sys.num_states()) throw ValidationError("scenario: initial state size");
    if (!x.allFinite()) throw ValidationError("scenario: initial state is not finite");
    std::vector<std::pair<double, std::size_t>> events;
    for (const auto& e : sc.events) events.emplace_back(e.time, sys.input_index(e.input));

    Trace tr;
    tr.names = sc.outputs;
    const OutputMap om = map_outputs(sys, tr.names);
    tr.data.assign(tr.names.size(), {});

    std::vector<double> raw_t;
    std::vector<std::vector<double>> raw(tr.names.size());
    auto record = [&](double t) {
        raw_t.push_back(t);
        Eigen::VectorXd y;
        if (om.need_channels) y = sys.channels(x, u);
        for (std::size_t k = 0; k < tr.names.size(); ++k)
            raw[k].push_back(om.state[k] >= 0 ? x(om.state[k]) : y(om.channel[k]));
    };

    const Eigen::Index n = x.size();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    LinearizeOptions lo;
    lo.richardson = false;
    double h_jac = -1.0;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    auto refresh = [&](double h) {
        lu.compute(I - 0.5 * h * state_jacobian(sys, x, u, lo));
        h_jac = h;
    };

    std::size_t next_event = 0;
    double t = 0.0;
    double h = sc.max_step;
    // Apply events scheduled at t = 0 before the first sample.
    while (next_event < events.size() && events[next_event].first <= 0.0) {
        u(static_cast<Eigen::Index>(events[next_event].second)) = sc.events[next_event].value;
        ++next_event;
    }
    record(0.0);
    Eigen::VectorXd f0 = sys.derivatives(x, u);
    int steps_since_jac = 0;
    while (t < sc.t_end - 1e-15) {
        double t_stop = sc.t_end;
        if (next_event < events.size()) t_stop = std::min(t_stop, events[next_event].first);
        double step = std::min(h, t_stop - t);
        bool done = false;
        while (!done) {
            if (step != h_jac || steps_since_jac > 2000) {
                refresh(step);
                steps_since_jac = 0;
            }
            Eigen::VectorXd xn = x + step * f0;
            Eigen::VectorXd fn;
            bool conv = false;
            for (int it = 0; it < 10; ++it) {
                fn = sys.derivatives(xn, u);
                const Eigen::VectorXd g = xn - x - 0.5 * step * (f0 + fn);
                const Eigen::VectorXd dx = lu.solve(-g);
                xn += dx;
                if (!dx.allFinite()) break;
                if (dx.lpNorm<Eigen::Infinity>() <= 1e-12 * (1.0 + xn.lpNorm<Eigen::Infinity>())) {
                    conv = true;
                    fn = sys.derivatives(xn, u);
                    break;
                }
            }
            if (conv) {
                x = xn;
                f0 = fn;
                t += step;
                if (std::abs(t - t_stop) < 1e-14) t = t_stop;
                ++steps_since_jac;
                done = true;
            } else if (h_jac == step && steps_since_jac > 0) {
                steps_since_jac = 2001;  // retry with a fresh Jacobian first
            } else {
                step *= 0.5;
                if (step < sc.min_step)
                    throw NumericalError(fmt::format("integration failed at t = {:.9g} s (step below floor)", t));
            }
        }
        while (next_event < events.size() && events[next_event].first <= t + 1e-15) {
            u(static_cast<Eigen::Index>(events[next_event].second)) = sc.events[next_event].value;
            ++next_event;
            f0 = sys.derivatives(x, u);
        }
        record(t);
    }
    tr.final_state = x;

    // Linear resampling onto the uniform grid.
    const double dt = sc.sample_dt > 0.0 ? sc.sample_dt : sc.max_step;
    const auto ns = static_cast<std::size_t>(std::floor(sc.t_end / dt + 1e-9)) + 1;
    std::size_t j = 0;
    for (std::size_t i = 0; i < ns; ++i) {
        const double ti = std::min(static_cast<double>(i) * dt, sc.t_end);
        while (j + 1 < raw_t.size() && raw_t[j + 1] < ti) ++j;
        tr.time.push_back(ti);
        const std::size_t k1 = std::min(j + 1, raw_t.size() - 1);
        const double span = raw_t[k1] - raw_t[j];
        const double w = span > 0.0 ? std::clamp((ti - raw_t[j]) / span, 0.0, 1.0) : 0.0;
        for (std::size_t c = 0; c < raw.size(); ++c) tr.data[c].push_back((1.0 - w) * raw[c][j] + w * raw[c][k1]);
    }
    for (const auto& col : tr.data)
        for (double v : col)
            if (!std::isfinite(v)) throw NumericalError("simulation produced non-finite samples");
    return tr;
}

std::vector<double> channel_magnitude(const std::vector<double>& d, const std::vector<double>& q) {
    if (d.size() != q.size()) throw ValidationError("d and q channels differ in length");
    std::vector<double> m(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m[i] = std::hypot(d[i], q[i]);
    return m;
}

namespace {

// Variable projection: for fixed (sigma, omega) the baseline and the cosine
// coefficients are linear.
struct VarPro {
    const Eigen::VectorXd& t;
    const Eigen::VectorXd& y;
    int degree;

    Eigen::MatrixXd basis(double sigma, double omega) const {
        Eigen::MatrixXd M(t.size(), degree + 3);
        for (Eigen::Index i = 0; i < t.size(); ++i) {
            double p = 1.0;
            for (int d = 0; d <= degree; ++d, p *= t(i)) M(i, d) = p;
            const double e = std::exp(sigma * t(i));
            M(i, degree + 1) = e * std::cos(omega * t(i));
            M(i, degree + 2) = e * std::sin(omega * t(i));
        }
        return M;
    }
    Eigen::VectorXd coeffs(double sigma, double omega) const {
        return basis(sigma, omega).colPivHouseholderQr().solve(y);
    }
    Eigen::VectorXd residual(double sigma, double omega) const {
        const Eigen::MatrixXd M = basis(sigma, omega);
        return M * M.colPivHouseholderQr().solve(y) - y;
    }
};

struct VarProFunctor : Eigen::DenseFunctor<double> {
    const VarPro& vp;
    VarProFunctor(const VarPro& v, int m) : Eigen::DenseFunctor<double>(2, m), vp(v) {}
    int operator()(const Eigen::VectorXd& p, Eigen::VectorXd& r) const {
        r = vp.residual(p(0), p(1));
        return 0;
    }
    int df(const Eigen::VectorXd& p, Eigen::MatrixXd& J) const {
        for (int k = 0; k < 2; ++k) {
            const double h = 1e-7 * std::max(1.0, std::abs(p(k)));
            Eigen::VectorXd pp = p, pm = p;
            pp(k) += h;
            pm(k) -= h;
            J.col(k) = (vp.residual(pp(0), pp(1)) - vp.residual(pm(0), pm(1))) / (2.0 * h);
        }
        return 0;
    }
};

}  // namespace

RingdownFit estimate_mode_from_trace(const std::vector<double>& tv, const std::vector<double>& yv, double t0,
                                     double t1, const FitOptions& opt) {
    if (tv.size() != yv.size()) throw ValidationError("time and sample vectors differ in length");
    std::vector<double> ts, ys;
    for (std::size_t i = 0; i < tv.size(); ++i)
        if (tv[i] >= t0 - 1e-12 && tv[i] <= t1 + 1e-12) {
            ts.push_back(tv[i] - t0);
            ys.push_back(yv[i]);
        }
    if (ts.size() < 16) throw ValidationError("fit window holds too few samples");
    const auto m = static_cast<Eigen::Index>(ts.size());
    const Eigen::VectorXd t = Eigen::Map<Eigen::VectorXd>(ts.data(), m);
    const Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(ys.data(), m);
    const double dt = (ts.back() - ts.front()) / static_cast<double>(m - 1);

    // Spectral seed on the baseline-removed signal.
    Eigen::MatrixXd P(m, opt.detrend_degree + 1);
    for (Eigen::Index i = 0; i < m; ++i) {
        double p = 1.0;
        for (int d = 0; d <= opt.detrend_degree; ++d, p *= t(i)) P(i, d) = p;
    }
    const Eigen::VectorXd detr = y - P * P.colPivHouseholderQr().solve(y);
    const double scale = y.cwiseAbs().maxCoeff();
    if (!(detr.cwiseAbs().maxCoeff() > 1e-12 * std::max(scale, 1e-300)))
        throw NumericalError("no oscillation detected");
    std::size_t nfft = 1;
    while (nfft < 8 * static_cast<std::size_t>(m)) nfft <<= 1;
    std::vector<double> buf(nfft, 0.0);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(m - 1));
        buf[static_cast<std::size_t>(i)] = detr(i) * w;
    }
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, buf);
    const std::size_t half = nfft / 2;
    std::vector<double> mag(half);
    for (std::size_t k = 0; k < half; ++k) mag[k] = std::abs(spec[k]);
    // Skip the bins inside the window's main lobe around DC.
    const std::size_t k_min = std::max<std::size_t>(2, 2 * nfft / static_cast<std::size_t>(m));
    std::size_t k_pk = k_min;
    for (std::size_t k = k_min; k < half; ++k)
        if (mag[k] > mag[k_pk]) k_pk = k;
    std::vector<double> sorted(mag.begin() + static_cast<std::ptrdiff_t>(k_min), mag.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    if (!(mag[k_pk] > opt.min_peak_ratio * median) || k_pk + 1 >= half) throw NumericalError("no oscillation detected");
    const double omega0 = 2.0 * std::numbers::pi * static_cast<double>(k_pk) / (static_cast<double>(nfft) * dt);

    const VarPro vp{t, y, opt.detrend_degree};
    Eigen::VectorXd best;
    double best_cost = std::numeric_limits<double>::infinity();
    for (double zeta0 : {0.01, 0.05, 0.15, 0.3, 0.5}) {
        Eigen::VectorXd p(2);
        p << -zeta0 * omega0 / std::sqrt(1.0 - zeta0 * zeta0), omega0;
        VarProFunctor fn(vp, static_cast<int>(m));
        Eigen::LevenbergMarquardt<VarProFunctor> lm(fn);
        lm.setXtol(1e-14);
        lm.setFtol(1e-14);
        lm.setMaxfev(2000);
        lm.minimize(p);
        if (!p.allFinite() || p(1) <= 0.0) continue;
        const double cost = vp.residual(p(0), p(1)).squaredNorm();
        if (cost < best_cost) {
            best_cost = cost;
            best = p;
        }
    }
    if (best.size() == 0) throw NumericalError("ringdown fit failed to converge");
    RingdownFit f;
    f.sigma = best(0);
    f.omega = best(1);
    const Eigen::VectorXd c = vp.coeffs(f.sigma, f.omega);
    const double a = c(opt.detrend_degree + 1), b = c(opt.detrend_degree + 2);
    f.amplitude = std::hypot(a, b);
    f.phase = std::atan2(-b, a);
    f.freq_hz = f.omega / (2.0 * std::numbers::pi);
    f.damping = -f.sigma / std::hypot(f.sigma, f.omega);
    f.rms_residual = std::sqrt(best_cost / static_cast<double>(m));
    return f;
}

RingdownFit estimate_mode_from_trace(const Trace& trace, const std::string& channel, double t0, double t1,
                                     const FitOptions& opt) {
    return estimate_mode_from_trace(trace.time, trace.channel(channel), t0, t1, opt);
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw ValidationError("correlation needs equal-length signals");
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

std::vector<double> modal_coordinate(const Trace& trace, const std::vector<StateLabel>& states, const Mode& mode,
                                     const Eigen::VectorXd& x_ref) {
    if (static_cast<std::size_t>(x_ref.size()) != states.size() || mode.psi.size() != x_ref.size())
        throw ValidationError("modal coordinate: dimension mismatch");
    std::vector<const std::vector<double>*> cols;
    for (const auto& s : states) cols.push_back(&trace.channel(s.str()));
    std::vector<double> z(trace.size());
    for (std::size_t i = 0; i < trace.size(); ++i) {
        cplx acc = 0.0;
        for (std::size_t k = 0; k < states.size(); ++k)
            acc += mode.psi(static_cast<Eigen::Index>(k)) * ((*cols[k])[i] - x_ref(static_cast<Eigen::Index>(k)));
        z[i] = acc.real();
    }
    return z;
}

std::vector<double> bandpass(const std::vector<double>& y, double dt, double f_lo, double f_hi) {
    if (y.empty()) return {};
    if (!(dt > 0.0) || !(f_hi > f_lo)) throw ValidationError("bandpass: invalid band");
    std::size_t n = 1;
    while (n < 2 * y.size()) n <<= 1;
    // Mirror-extend to limit edge effects.
    std::vector<double> buf(n, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) buf[i] = y[i];
    for (std::size_t i = y.size(); i < n; ++i) buf[i] = y[std::min(2 * y.size() - 1 - i, y.size() - 1)];
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, buf);
    for (std::size_t k = 0; k < n; ++k) {
        const double f = static_cast<double>(std::min(k, n - k)) / (static_cast<double>(n) * dt);
        if (f < f_lo || f > f_hi) spec[k] = 0.0;
    }
    std::vector<double> out;
    fft.inv(out, spec);
    out.resize(y.size());
    return out;
}

std::vector<double> window(const std::vector<double>& t, const std::vector<double>& y, double t0, double t1) {
    std::vector<double> w;
    for (std::size_t i = 0; i < t.size(); ++i)
        if (t[i] >= t0 - 1e-12 && t[i] <= t1 + 1e-12) w.push_back(y[i]);
    return w;
}

ModalRingdown modal_ringdown(const DynamicSystem& sys, const OperatingPoint& op, const Mode& mode,
                             const InputEvent& step, const RingdownOptions& opt) {
    if (!(mode.freq_hz > 0.0)) throw ValidationError("modal ringdown needs an oscillatory mode");
    if (!(opt.cycles > 0.0) || opt.delay < 0.0) throw ValidationError("modal ringdown: invalid window");
    ModalRingdown r;
    Eigen::VectorXd u = op.u;
    u(static_cast<Eigen::Index>(sys.input_index(step.input))) = step.value;
    r.after = solve_operating_point(sys, u, {}, op.x);

    r.t0 = step.time + opt.delay;
    r.t1 = r.t0 + opt.cycles / mode.freq_hz;
    Scenario sc;
    sc.events = {step};
    sc.t_end = r.t1;
    sc.max_step = opt.max_step;
    for (const auto& s : sys.states()) sc.outputs.push_back(s.str());
    for (const auto& c : opt.channels) sc.outputs.push_back(c);
    r.trace = simulate(sys, op, sc);
    r.z = modal_coordinate(r.trace, sys.states(), mode, r.after.x);
    r.fit = estimate_mode_from_trace(r.trace.time, r.z, r.t0, r.t1, opt.fit);
    return r;
}

void write_trace_csv(const Trace& trace, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << "time";
    for (const auto& n : trace.names) out << ',' << n;
    out << '\n';
    for (std::size_t i = 0; i < trace.time.size(); ++i) {
        out << fmt::format("{:.9g}", trace.time[i]);
        for (const auto& c : trace.data) out << ',' << fmt::format("{:.9g}", c[i]);
        out << '\n';
    }
}

}  // namespace cmodes

#include "cmodes/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "cmodes/errors.hpp"

namespace cmodes {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (v == 0.0) return "0";  // no "-0"
    return fmt::format("{:.9g}", v);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + path.string());
    f << text;
    if (!f) throw ValidationError("write failed: " + path.string());
}

bool passes(const ModeReport& r, const ModeFilter& f) {
    if (r.mode.freq_hz < f.min_freq_hz) return false;
    if (r.mode.damping > f.max_damping) return false;
    if (f.coupling_only && r.coupling != CouplingClass::kCoupling) return false;
    return true;
}

namespace {

double group(const ModeReport& r, const char* g) {
    auto it = r.groups.find(g);
    return it == r.groups.end() ? 0.0 : it->second;
}

std::string esc(const std::string& s) {
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
                          "#17becf", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22"};

std::string color(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string group_color(const std::string& g) {
    if (g == "sm") return "#d62728";
    if (g == "gfl") return "#1f77b4";
    if (g == "grid") return "#2ca02c";
    return "#7f7f7f";
}

struct Svg {
    double w, h;
    std::string body;

    Svg(double w_, double h_) : w(w_), h(h_) {}
    void line(double x1, double y1, double x2, double y2, const std::string& stroke, double width = 1.0,
              const std::string& extra = "") {
        body += fmt::format(R"(<line x1="{:.2f}" y1="{:.2f}" x2="{:.2f}" y2="{:.2f}" stroke="{}" stroke-width="{}"{}/>)",
                            x1, y1, x2, y2, stroke, width, extra);
        body += '\n';
    }
    void text(double x, double y, const std::string& s, const std::string& anchor = "start", int size = 11) {
        body += fmt::format(R"(<text x="{:.2f}" y="{:.2f}" font-size="{}" text-anchor="{}">{}</text>)", x, y, size,
                            anchor, esc(s));
        body += '\n';
    }
    void rect(double x, double y, double rw, double rh, const std::string& fill) {
        body += fmt::format(R"(<rect x="{:.2f}" y="{:.2f}" width="{:.2f}" height="{:.2f}" fill="{}"/>)", x, y, rw, rh,
                            fill);
        body += '\n';
    }
    void circle(double x, double y, double r, const std::string& stroke, bool filled) {
        body += fmt::format(R"(<circle cx="{:.2f}" cy="{:.2f}" r="{}" stroke="{}" fill="{}"/>)", x, y, r, stroke,
                            filled ? stroke : "white");
        body += '\n';
    }
    void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& stroke) {
        if (pts.empty()) return;
        body += R"(<polyline fill="none" stroke=")" + stroke + R"(" points=")";
        for (const auto& [x, y] : pts) body += fmt::format("{:.2f},{:.2f} ", x, y);
        body += "\"/>\n";
    }
    std::string str() const {
        return fmt::format(
                   R"(<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}" font-family="sans-serif">)",
                   w, h, w, h) +
               "\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" + body + "</svg>\n";
    }
};

// Axis box with linear scaling.
struct Frame {
    double x0, y0, x1, y1;  // data range
    double left = 70, top = 30, pw = 600, ph = 430;

    double px(double x) const { return left + (x - x0) / (x1 - x0) * pw; }
    double py(double y) const { return top + (y1 - y) / (y1 - y0) * ph; }

    void draw(Svg& s, const std::string& xlabel, const std::string& ylabel) const {
        s.line(left, top + ph, left + pw, top + ph, "black");
        s.line(left, top, left, top + ph, "black");
        for (int i = 0; i <= 4; ++i) {
            const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
            s.text(px(xv), top + ph + 15, fmt::format("{:.4g}", xv), "middle", 10);
            s.text(left - 5, py(yv) + 4, fmt::format("{:.4g}", yv), "end", 10);
            s.line(px(xv), top, px(xv), top + ph, "#eeeeee");
            s.line(left, py(yv), left + pw, py(yv), "#eeeeee");
        }
        s.text(left + pw / 2, top + ph + 32, xlabel, "middle");
        s.text(14, top + ph / 2, ylabel, "middle");
    }
};

void pad_range(double& lo, double& hi) {
    if (!(hi > lo)) {
        const double d = std::max(std::abs(lo) * 0.1, 1.0);
        lo -= d;
        hi += d;
        return;
    }
    const double d = 0.05 * (hi - lo);
    lo -= d;
    hi += d;
}

}  // namespace

std::string modes_csv(const std::vector<ModeReport>& reports, const ModeFilter& f) {
    std::string out = "index,re,im,freq_hz,damping,coupling,p_sm,p_gfl,p_grid,p_network\n";
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (!passes(r, f)) continue;
        out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", i, num(r.mode.lambda.real()), num(r.mode.lambda.imag()),
                           num(r.mode.freq_hz), num(r.mode.damping), to_string(r.coupling), num(group(r, "sm")),
                           num(group(r, "gfl")), num(group(r, "grid")), num(group(r, "network")));
    }
    return out;
}

std::string participation_csv(const std::vector<StateLabel>& states, const ModeReport& r) {
    std::string out = "state,group,participation\n";
    for (std::size_t k = 0; k < states.size(); ++k)
        out += fmt::format("{},{},{}\n", states[k].str(), device_group(states[k]),
                           num(r.participation(static_cast<Eigen::Index>(k))));
    return out;
}

std::string shapes_csv(const ModeReport& r) {
    std::string out = "channel,magnitude,angle_deg\n";
    for (const auto& [name, g] : r.extended_shapes)
        out += fmt::format("{},{},{}\n", name, num(std::abs(g)), num(std::arg(g) * 180.0 / std::numbers::pi));
    return out;
}

std::string participation_svg(const std::vector<StateLabel>& states, const ModeReport& r, std::size_t top) {
    std::vector<std::size_t> idx(states.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return r.participation(static_cast<Eigen::Index>(a)) > r.participation(static_cast<Eigen::Index>(b));
    });
    idx.resize(std::min(top, idx.size()));
    const double row = 18, left = 170, width = 360;
    Svg s(left + width + 80, 50 + row * static_cast<double>(idx.size()) + 20);
    s.text(10, 20,
           fmt::format("mode {:.5g} {:+.5g}j  f = {:.4g} Hz  zeta = {:.3g}%  ({})", r.mode.lambda.real(),
                       r.mode.lambda.imag(), r.mode.freq_hz, 100.0 * r.mode.damping, to_string(r.coupling)),
           "start", 12);
    double pmax = 0.0;
    for (auto k : idx) pmax = std::max(pmax, r.participation(static_cast<Eigen::Index>(k)));
    if (!(pmax > 0.0)) pmax = 1.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto k = idx[i];
        const double p = r.participation(static_cast<Eigen::Index>(k));
        const double y = 40 + row * static_cast<double>(i);
        s.text(left - 6, y + 12, states[k].str(), "end", 11);
        s.rect(left, y + 2, width * p / pmax, row - 4, group_color(device_group(states[k])));
        s.text(left + width * p / pmax + 4, y + 12, fmt::format("{:.3f}", p), "start", 10);
    }
    return s.str();
}

std::string compass_svg(const std::map<std::string, cplx>& shapes, const std::string& title) {
    const double c = 200, rad = 150;
    Svg s(2 * c + 160, 2 * c);
    s.text(10, 20, title, "start", 12);
    s.circle(c, c, rad, "#cccccc", false);
    s.line(c - rad, c, c + rad, c, "#cccccc");
    s.line(c, c - rad, c, c + rad, "#cccccc");
    double m = 0.0;
    for (const auto& [_, g] : shapes) m = std::max(m, std::abs(g));
    if (!(m > 0.0)) m = 1.0;
    std::size_t i = 0;
    for (const auto& [name, g] : shapes) {
        const double x = c + rad * g.real() / m, y = c - rad * g.imag() / m;
        s.line(c, c, x, y, color(i), 2.0);
        s.circle(x, y, 3, color(i), true);
        s.text(2 * c, 40 + 16 * static_cast<double>(i),
               fmt::format("{}  |{:.3g}|  {:.0f} deg", name, std::abs(g), std::arg(g) * 180.0 / std::numbers::pi));
        s.rect(2 * c - 14, 31 + 16 * static_cast<double>(i), 10, 10, color(i));
        ++i;
    }
    return s.str();
}

std::string root_locus_svg(const SweepResult& sweep, double min_freq_hz) {
    double xr0 = 1e300, xr1 = -1e300, yi0 = 1e300, yi1 = -1e300;
    std::vector<std::size_t> shown;
    for (std::size_t t = 0; t < sweep.trajectories.size(); ++t) {
        const auto& tr = sweep.trajectories[t];
        if (sweep.mode_at(tr, 0).freq_hz < min_freq_hz) continue;
        shown.push_back(t);
        for (std::size_t k = 0; k < tr.point.size(); ++k) {
            const cplx l = sweep.mode_at(tr, k).lambda;
            xr0 = std::min(xr0, l.real());
            xr1 = std::max(xr1, l.real());
            yi0 = std::min(yi0, l.imag());
            yi1 = std::max(yi1, l.imag());
        }
    }
    if (shown.empty()) xr0 = xr1 = yi0 = yi1 = 0.0;
    pad_range(xr0, xr1);
    pad_range(yi0, yi1);
    Svg s(720, 520);
    Frame f{xr0, yi0, xr1, yi1};
    f.pw = 600;
    f.ph = 430;
    f.draw(s, "Re (1/s)", "Im");
    s.text(f.left, 18, fmt::format("root locus: {} {}", sweep.spec.parameter, sweep.context), "start", 12);
    for (std::size_t i = 0; i < shown.size(); ++i) {
        const auto& tr = sweep.trajectories[shown[i]];
        std::vector<std::pair<double, double>> pts;
        for (std::size_t k = 0; k < tr.point.size(); ++k) {
            const cplx l = sweep.mode_at(tr, k).lambda;
            pts.emplace_back(f.px(l.real()), f.py(l.imag()));
        }
        s.polyline(pts, color(i));
        for (std::size_t k = 0; k < pts.size(); ++k)
            s.circle(pts[k].first, pts[k].second, 3, color(i), k + 1 == pts.size());
    }
    return s.str();
}

std::string trace_svg(const Trace& tr, const std::vector<std::string>& channels) {
    const double panel = 160;
    Svg s(720, 30 + panel * static_cast<double>(channels.size()) + 20);
    for (std::size_t c = 0; c < channels.size(); ++c) {
        const auto& y = tr.channel(channels[c]);
        double lo = 1e300, hi = -1e300;
        for (double v : y) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (y.empty()) lo = hi = 0.0;
        pad_range(lo, hi);
        Frame f{tr.time.empty() ? 0.0 : tr.time.front(), lo, tr.time.empty() ? 1.0 : tr.time.back(), hi};
        f.top = 20 + panel * static_cast<double>(c);
        f.pw = 600;
        f.ph = panel - 50;
        f.draw(s, c + 1 == channels.size() ? "t (s)" : "", "");
        s.text(f.left + 5, f.top + 12, channels[c]);
        std::vector<std::pair<double, double>> pts;
        // Thin to at most ~2000 vertices.
        const std::size_t stride = std::max<std::size_t>(1, y.size() / 2000);
        for (std::size_t i = 0; i < y.size(); i += stride) pts.emplace_back(f.px(tr.time[i]), f.py(y[i]));
        s.polyline(pts, color(c));
    }
    return s.str();
}

std::string flux_table_csv(const SweepResult& sweep, double min_freq_hz) {
    std::string out = "mode,freq_hz_start";
    for (const auto& p : sweep.points) out += "," + num(p.value);
    out += "\n";
    for (std::size_t t = 0; t < sweep.trajectories.size(); ++t) {
        const auto& tr = sweep.trajectories[t];
        const auto& m0 = sweep.mode_at(tr, 0);
        if (m0.freq_hz < min_freq_hz) continue;
        bool coupling = false;
        for (std::size_t k = 0; k < tr.point.size(); ++k)
            coupling |= sweep.points[tr.point[k]].coupling[tr.mode[k]] == CouplingClass::kCoupling;
        if (!coupling) continue;
        std::vector<std::string> cells(sweep.points.size(), "");
        for (std::size_t k = 0; k < tr.point.size(); ++k)
            cells[tr.point[k]] = num(sweep.points[tr.point[k]].flux[tr.mode[k]]);
        out += fmt::format("{},{}", t, num(m0.freq_hz));
        for (const auto& c : cells) out += "," + c;
        out += "\n";
    }
    return out;
}

std::string trajectory_csv(const SweepResult& sweep) {
    std::string out =
        "mode,point,value,re,im,freq_hz,damping,mac,flux,coupling,sens_re,sens_im,sens_angle_deg,quadrant,"
        "quadrant_verdict,dzeta_dp\n";
    for (std::size_t t = 0; t < sweep.trajectories.size(); ++t) {
        const auto& tr = sweep.trajectories[t];
        for (std::size_t k = 0; k < tr.point.size(); ++k) {
            const auto& pt = sweep.points[tr.point[k]];
            const auto& m = pt.modes[tr.mode[k]];
            out += fmt::format("{},{},{},{},{},{},{},{},{},{}", t, tr.point[k], num(pt.value), num(m.lambda.real()),
                               num(m.lambda.imag()), num(m.freq_hz), num(m.damping), num(tr.mac[k]),
                               num(pt.flux[tr.mode[k]]), to_string(pt.coupling[tr.mode[k]]));
            const auto& s = tr.mode[k] < pt.sensitivity.size() ? pt.sensitivity[tr.mode[k]] : std::nullopt;
            if (s)
                out += fmt::format(",{},{},{},{},{},{}\n", num(s->value.real()), num(s->value.imag()),
                                   num(s->angle_deg), to_string(s->quadrant), to_string(s->verdict),
                                   num(damping_derivative(m.lambda, s->value)));
            else
                out += ",,,,,,\n";
        }
    }
    return out;
}

nlohmann::json tendency_json(const std::vector<SweepResult>& contexts, const std::vector<TendencyVerdict>& v) {
    nlohmann::json j;
    j["parameter"] = contexts.empty() ? "" : contexts.front().spec.parameter;
    j["contexts"] = nlohmann::json::array();
    for (const auto& c : contexts) j["contexts"].push_back(c.context);
    j["modes"] = nlohmann::json::array();
    for (const auto& t : v) {
        nlohmann::json m;
        m["trajectory"] = t.trajectory;
        m["lambda_start"] = {t.lambda_start.real(), t.lambda_start.imag()};
        m["freq_hz_start"] = mode_frequency_damping(t.lambda_start).freq_hz;
        m["slopes"] = nlohmann::json::array();
        for (const auto& s : t.slopes) m["slopes"].push_back(s ? nlohmann::json(*s) : nlohmann::json(nullptr));
        m["signs"] = t.signs;
        m["verdict"] = to_string(t.verdict);
        m["weak"] = t.weak;
        j["modes"].push_back(m);
    }
    return j;
}

nlohmann::json mode_json(const ModeReport& r) {
    nlohmann::json j;
    j["lambda"] = {r.mode.lambda.real(), r.mode.lambda.imag()};
    j["freq_hz"] = r.mode.freq_hz;
    j["damping"] = r.mode.damping;
    j["coupling"] = to_string(r.coupling);
    j["groups"] = r.groups;
    for (const auto& [name, g] : r.extended_shapes)
        j["extended_shapes"][name] = {{"magnitude", std::abs(g)}, {"angle_deg", std::arg(g) * 180.0 / std::numbers::pi}};
    for (const auto& [name, s] : r.sensitivities)
        j["sensitivities"][name] = {{"value", {s.value.real(), s.value.imag()}},
                                    {"angle_deg", s.angle_deg},
                                    {"quadrant", to_string(s.quadrant)},
                                    {"verdict", to_string(s.verdict)}};
    return j;
}

}  // namespace cmodes

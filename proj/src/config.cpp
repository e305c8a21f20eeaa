#include "cmodes/config.hpp"

#include <fstream>
#include <set>

#include "cmodes/errors.hpp"

namespace cmodes {

using nlohmann::json;

namespace {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ValidationError(path_ + ": expected an object");
    }

    double num(const char* key, double fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_number()) throw ValidationError(path_ + "." + key + ": expected a number");
        return v.get<double>();
    }

    std::optional<double> opt_num(const char* key, std::optional<double> fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (v.is_null()) return std::nullopt;
        if (!v.is_number()) throw ValidationError(path_ + "." + key + ": expected a number or null");
        return v.get<double>();
    }

    bool flag(const char* key, bool fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_boolean()) throw ValidationError(path_ + "." + key + ": expected true/false");
        return v.get<bool>();
    }

    std::string str(const char* key, const std::string& fallback) {
        seen_.insert(key);
        if (!j_.contains(key)) return fallback;
        const auto& v = j_.at(key);
        if (!v.is_string()) throw ValidationError(path_ + "." + key + ": expected a string");
        return v.get<std::string>();
    }

    std::optional<ComplexImpedance> impedance(const char* key) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
        Reader r(j_.at(key), path_ + "." + key);
        ComplexImpedance z{r.num("r", 0.0), r.num("x", 0.0), UnitSystem::kPhysical};
        r.finish();
        return z;
    }

    const json* sub(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!k.empty() && k[0] == '_') continue;
            if (!seen_.count(k)) throw ValidationError(path_ + "." + k + ": unknown key");
        }
    }

    const std::string& path() const { return path_; }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

BranchSpec read_branch(Reader& r, const char* len_key, const char* z_key, const BranchSpec& fallback) {
    BranchSpec b;
    b.z_ohm = r.impedance(z_key);
    b.length_km = r.opt_num(len_key, b.z_ohm ? std::nullopt : fallback.length_km);
    if (!b.z_ohm && !b.length_km) b = fallback;
    return b;
}

void write_branch(json& j, const char* len_key, const char* z_key, const BranchSpec& b) {
    if (b.z_ohm) j[z_key] = {{"r", b.z_ohm->r}, {"x", b.z_ohm->x}};
    else if (b.length_km) j[len_key] = *b.length_km;
}

json opt_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

json config_to_json(const BenchmarkConfig& c) {
    json j;
    j["name"] = c.name;
    j["base"] = {{"s_base_MVA", c.base.s_base / 1e6}, {"v_base_kV", c.base.v_base / 1e3}, {"f_base_Hz", c.base.f_base}};
    json lines;
    lines["topology"] = c.topology == Topology::kStar ? "star" : "triangle";
    lines["z_ohm_per_km"] = c.line.z_ohm_per_km;
    lines["x_over_r"] = c.line.x_over_r;
    lines["z_is_resistance"] = c.line.z_is_resistance;
    if (c.topology == Topology::kStar) {
        write_branch(lines, "l1_km", "z1_ohm", c.z1);
        write_branch(lines, "l2_km", "z2_ohm", c.z2);
        write_branch(lines, "lcc_km", "zcc_ohm", c.zcc);
    } else {
        write_branch(lines, "l1p_km", "z1p_ohm", c.z1p);
        write_branch(lines, "l2p_km", "z2p_ohm", c.z2p);
        write_branch(lines, "l3p_km", "z3p_ohm", c.z3p);
    }
    j["lines"] = lines;
    j["setpoints"] = {{"P_inv", opt_to_json(c.p_inv)}, {"P_sm", opt_to_json(c.p_sm)}, {"Q_inv", c.q_inv}};
    j["sm"] = {{"H_s", c.sm.H}, {"Kd", c.sm.Kd}};
    j["sm_electrical"] = {{"Ra", c.sm.Ra},         {"Xd", c.sm.Xd},         {"Xq", c.sm.Xq},
                          {"Xd_p", c.sm.Xd_p},     {"Xd_pp", c.sm.Xd_pp},   {"Xq_pp", c.sm.Xq_pp},
                          {"Xl", c.sm.Xl},         {"Td0_p_s", c.sm.Td0_p}, {"Td0_pp_s", c.sm.Td0_pp},
                          {"Tq0_pp_s", c.sm.Tq0_pp}};
    j["avr"] = {{"Ke", c.avr.Ke}, {"Te_ms", c.avr.Te * 1e3}, {"vg_ref", c.avr.vg_ref}};
    j["gov"] = {{"Rg_pct", c.gov.Rg * 1e2}, {"Tg_ms", c.gov.Tg * 1e3}, {"Tr_ms", c.gov.Tr * 1e3}, {"Fh", c.gov.Fh}};
    j["gfl"] = {{"Rf", c.gfl.Rf},
                {"Lf", c.gfl.Lf},
                {"Cf", c.gfl.Cf},
                {"Rp_pct", c.gfl.Rp * 1e2},
                {"tau_w_ms", c.gfl.tau_w * 1e3},
                {"tau_p_ms", c.gfl.tau_p * 1e3},
                {"tau_f_ms", c.gfl.tau_f * 1e3},
                {"Ki", c.gfl.Ki},
                {"Kp", c.gfl.Kp},
                {"Ki_pll", c.gfl.Ki_pll},
                {"Kp_pll", c.gfl.Kp_pll}};
    j["grid"] = {{"Du", c.grid.Du}, {"He_s", c.grid.He}, {"V", c.grid.V}, {"Pl", c.grid.Pl}};
    j["modeling"] = {{"sm_terminal_shunt_r", c.sm_terminal_shunt_r}, {"gfl_v_min", c.gfl.v_min}};
    if (!c.extra_devices.empty()) {
        json arr = json::array();
        for (const auto& e : c.extra_devices) {
            json d = {{"kind", e.kind == DeviceKind::kSm ? "sm" : "gfl"}, {"name", e.name}, {"P", e.setpoint}};
            write_branch(d, "l_km", "z_ohm", e.branch);
            arr.push_back(d);
        }
        j["extra_devices"] = arr;
    }
    return j;
}

BenchmarkConfig config_from_json(const json& j) {
    BenchmarkConfig c;
    Reader top(j, "config");
    c.name = top.str("name", c.name);

    if (const json* s = top.sub("base")) {
        Reader r(*s, "base");
        c.base.s_base = r.num("s_base_MVA", c.base.s_base / 1e6) * 1e6;
        c.base.v_base = r.num("v_base_kV", c.base.v_base / 1e3) * 1e3;
        c.base.f_base = r.num("f_base_Hz", c.base.f_base);
        r.finish();
    }
    if (const json* s = top.sub("lines")) {
        Reader r(*s, "lines");
        const std::string topo = r.str("topology", "star");
        if (topo == "star") c.topology = Topology::kStar;
        else if (topo == "triangle") c.topology = Topology::kTriangle;
        else throw ValidationError("lines.topology: expected 'star' or 'triangle'");
        c.line.z_ohm_per_km = r.num("z_ohm_per_km", c.line.z_ohm_per_km);
        c.line.x_over_r = r.num("x_over_r", c.line.x_over_r);
        c.line.z_is_resistance = r.flag("z_is_resistance", c.line.z_is_resistance);
        c.z1 = read_branch(r, "l1_km", "z1_ohm", c.z1);
        c.z2 = read_branch(r, "l2_km", "z2_ohm", c.z2);
        c.zcc = read_branch(r, "lcc_km", "zcc_ohm", c.zcc);
        c.z1p = read_branch(r, "l1p_km", "z1p_ohm", c.z1p);
        c.z2p = read_branch(r, "l2p_km", "z2p_ohm", c.z2p);
        c.z3p = read_branch(r, "l3p_km", "z3p_ohm", c.z3p);
        r.finish();
    }
    if (const json* s = top.sub("setpoints")) {
        Reader r(*s, "setpoints");
        c.p_inv = r.opt_num("P_inv", c.p_inv);
        c.p_sm = r.opt_num("P_sm", c.p_sm);
        c.q_inv = r.num("Q_inv", c.q_inv);
        r.finish();
    }
    if (const json* s = top.sub("sm")) {
        Reader r(*s, "sm");
        c.sm.H = r.num("H_s", c.sm.H);
        c.sm.Kd = r.num("Kd", c.sm.Kd);
        r.finish();
    }
    if (const json* s = top.sub("sm_electrical")) {
        Reader r(*s, "sm_electrical");
        c.sm.Ra = r.num("Ra", c.sm.Ra);
        c.sm.Xd = r.num("Xd", c.sm.Xd);
        c.sm.Xq = r.num("Xq", c.sm.Xq);
        c.sm.Xd_p = r.num("Xd_p", c.sm.Xd_p);
        c.sm.Xd_pp = r.num("Xd_pp", c.sm.Xd_pp);
        c.sm.Xq_pp = r.num("Xq_pp", c.sm.Xq_pp);
        c.sm.Xl = r.num("Xl", c.sm.Xl);
        c.sm.Td0_p = r.num("Td0_p_s", c.sm.Td0_p);
        c.sm.Td0_pp = r.num("Td0_pp_s", c.sm.Td0_pp);
        c.sm.Tq0_pp = r.num("Tq0_pp_s", c.sm.Tq0_pp);
        r.finish();
    }
    if (const json* s = top.sub("avr")) {
        Reader r(*s, "avr");
        c.avr.Ke = r.num("Ke", c.avr.Ke);
        c.avr.Te = r.num("Te_ms", c.avr.Te * 1e3) * 1e-3;
        c.avr.vg_ref = r.num("vg_ref", c.avr.vg_ref);
        r.finish();
    }
    if (const json* s = top.sub("gov")) {
        Reader r(*s, "gov");
        c.gov.Rg = r.num("Rg_pct", c.gov.Rg * 1e2) * 1e-2;
        c.gov.Tg = r.num("Tg_ms", c.gov.Tg * 1e3) * 1e-3;
        c.gov.Tr = r.num("Tr_ms", c.gov.Tr * 1e3) * 1e-3;
        c.gov.Fh = r.num("Fh", c.gov.Fh);
        r.finish();
    }
    if (const json* s = top.sub("gfl")) {
        Reader r(*s, "gfl");
        c.gfl.Rf = r.num("Rf", c.gfl.Rf);
        c.gfl.Lf = r.num("Lf", c.gfl.Lf);
        c.gfl.Cf = r.num("Cf", c.gfl.Cf);
        c.gfl.Rp = r.num("Rp_pct", c.gfl.Rp * 1e2) * 1e-2;
        c.gfl.tau_w = r.num("tau_w_ms", c.gfl.tau_w * 1e3) * 1e-3;
        c.gfl.tau_p = r.num("tau_p_ms", c.gfl.tau_p * 1e3) * 1e-3;
        c.gfl.tau_f = r.num("tau_f_ms", c.gfl.tau_f * 1e3) * 1e-3;
        c.gfl.Ki = r.num("Ki", c.gfl.Ki);
        c.gfl.Kp = r.num("Kp", c.gfl.Kp);
        c.gfl.Ki_pll = r.num("Ki_pll", c.gfl.Ki_pll);
        c.gfl.Kp_pll = r.num("Kp_pll", c.gfl.Kp_pll);
        r.finish();
    }
    if (const json* s = top.sub("grid")) {
        Reader r(*s, "grid");
        c.grid.Du = r.num("Du", c.grid.Du);
        c.grid.He = r.num("He_s", c.grid.He);
        c.grid.V = r.num("V", c.grid.V);
        c.grid.Pl = r.num("Pl", c.grid.Pl);
        r.finish();
    }
    if (const json* s = top.sub("modeling")) {
        Reader r(*s, "modeling");
        c.sm_terminal_shunt_r = r.num("sm_terminal_shunt_r", c.sm_terminal_shunt_r);
        c.gfl.v_min = r.num("gfl_v_min", c.gfl.v_min);
        r.finish();
    }
    if (const json* s = top.sub("extra_devices")) {
        if (!s->is_array()) throw ValidationError("config.extra_devices: expected an array");
        for (std::size_t k = 0; k < s->size(); ++k) {
            Reader r(s->at(k), "extra_devices[" + std::to_string(k) + "]");
            ExtraDevice e;
            const std::string kind = r.str("kind", "gfl");
            if (kind == "sm") e.kind = DeviceKind::kSm;
            else if (kind == "gfl") e.kind = DeviceKind::kGfl;
            else throw ValidationError(r.path() + ".kind: expected 'sm' or 'gfl'");
            e.name = r.str("name", "");
            e.setpoint = r.num("P", 0.0);
            e.branch = read_branch(r, "l_km", "z_ohm", BranchSpec{});
            r.finish();
            c.extra_devices.push_back(e);
        }
    }
    top.finish();
    c.validate();
    return c;
}

BenchmarkConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const BenchmarkConfig& cfg, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << config_to_json(cfg).dump(2) << "\n";
}

BenchmarkConfig nominal_config() {
    BenchmarkConfig c;
    c.name = "nominal";
    c.validate();
    return c;
}

namespace {

json::json_pointer pointer_for(const std::string& path) {
    std::string p = "/";
    for (char ch : path) p += ch == '.' ? '/' : ch;
    return json::json_pointer(p);
}

}  // namespace

BenchmarkConfig with_parameter(const BenchmarkConfig& cfg, const std::string& path, double value) {
    json j = config_to_json(cfg);
    const auto ptr = pointer_for(path);
    if (!j.contains(ptr)) {
        // Branch lengths are only serialized for the active topology; allow
        // setting them explicitly.
        if (!j.contains(ptr.parent_pointer())) throw ValidationError("unknown parameter path '" + path + "'");
    } else if (!j.at(ptr).is_number() && !j.at(ptr).is_null()) {
        throw ValidationError("parameter '" + path + "' is not numeric");
    }
    j[ptr] = value;
    return config_from_json(j);
}

double get_parameter(const BenchmarkConfig& cfg, const std::string& path) {
    const json j = config_to_json(cfg);
    const auto ptr = pointer_for(path);
    if (!j.contains(ptr) || !j.at(ptr).is_number()) throw ValidationError("unknown parameter path '" + path + "'");
    return j.at(ptr).get<double>();
}

json resolved_config(const BenchmarkConfig& cfg) {
    json j = config_to_json(cfg);
    const auto layout = network_layout(cfg);
    json br = json::array();
    for (const auto& b : layout.branches)
        br.push_back({{"name", b.name}, {"r_pu", b.r}, {"x_pu", b.l}, {"from", layout.nodes[b.from]},
                      {"to", layout.nodes[b.to]}});
    const auto tri = cfg.triangle_impedances();
    auto pu = [&](const ComplexImpedance& z) {
        const auto p = to_per_unit(z, cfg.base);
        return json{{"r_pu", p.r}, {"x_pu", p.x}, {"r_ohm", z.r}, {"x_ohm", z.x}};
    };
    j["resolved"] = {{"z_base_ohm", cfg.base.z_base()},
                     {"omega_b", cfg.base.omega_b()},
                     {"triangle", {{"z1p", pu(tri.z1p)}, {"z2p", pu(tri.z2p)}, {"z3p", pu(tri.z3p)}}},
                     {"branches", br}};
    if (cfg.topology == Topology::kStar) {
        const auto st = cfg.star_impedances();
        j["resolved"]["star"] = {{"z1", pu(st.z1)}, {"z2", pu(st.z2)}, {"zcc", pu(st.zcc)}};
    }
    return j;
}

}  // namespace cmodes

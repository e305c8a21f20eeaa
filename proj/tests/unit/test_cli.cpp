#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cmodes/cli.hpp"
#include "cmodes/config.hpp"

namespace fs = std::filesystem;
using namespace cmodes;

namespace {

int run(std::vector<std::string> args) {
    args.insert(args.begin(), "cmodes");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

fs::path fresh(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("cmodes_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

std::string data(const char* name) { return (fs::path(CMODES_SOURCE_DIR) / "data" / name).string(); }

}  // namespace

TEST_CASE("parsers") {
    CHECK(parse_grid("1,5,10") == std::vector<double>{1, 5, 10});
    CHECK(parse_grid("200:300:5") == std::vector<double>{200, 225, 250, 275, 300});
    CHECK_THROWS(parse_grid("1,,2"));
    CHECK_THROWS(parse_grid("1:2:1"));
    const auto e = parse_event("0.01:gfl.P_set=0.25");
    CHECK(e.time == 0.01);
    CHECK(e.input == "gfl.P_set");
    CHECK(e.value == 0.25);
    CHECK_THROWS(parse_event("gfl.P_set=0.25"));
    CHECK(parse_complex("-0.07,0.29") == cplx(-0.07, 0.29));
}

TEST_CASE("toy linear system reports one pair") {
    const auto dir = fresh("toy");
    std::ofstream(dir / "toy.json") << R"({"linear_system": {"states": ["a", "b"], "A": [[-1, 10], [-10, -1]]}})";
    REQUIRE(run({"modes", "--config", (dir / "toy.json").string(), "--out", (dir / "out").string()}) == 0);
    const auto rows = lines(dir / "out" / "modes.csv");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].rfind("index,re,im,freq_hz,damping,coupling", 0) == 0);
    CHECK(rows[1].rfind("0,-1,10,", 0) == 0);
}

TEST_CASE("nominal modes and filters") {
    const auto all = fresh("modes_all"), cpl = fresh("modes_cpl");
    REQUIRE(run({"modes", "--out", all.string(), "--min-freq", "100"}) == 0);
    REQUIRE(run({"modes", "--out", cpl.string(), "--coupling-only"}) == 0);
    const auto a = lines(all / "modes.csv"), c = lines(cpl / "modes.csv");
    CHECK(a.size() - 1 >= 4);
    for (std::size_t i = 1; i < c.size(); ++i) CHECK(c[i].find(",coupling,") != std::string::npos);
    CHECK(c.size() > 1);
    CHECK(fs::exists(all / "participation" / "mode_00.csv"));
    CHECK(fs::exists(all / "participation" / "mode_00.svg"));
    CHECK(fs::exists(all / "shapes" / "mode_00.svg"));
    CHECK(fs::exists(all / "modes.json"));
    CHECK(fs::exists(all / "config.resolved.json"));
}

TEST_CASE("outputs are byte-identical across runs") {
    const auto a = fresh("det_a"), b = fresh("det_b");
    REQUIRE(run({"modes", "--out", a.string(), "--sensitivity", "gfl.Ki"}) == 0);
    REQUIRE(run({"modes", "--out", b.string(), "--sensitivity", "gfl.Ki"}) == 0);
    int compared = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const auto rel = fs::relative(e.path(), a);
        CAPTURE(rel.string());
        CHECK(slurp(e.path()) == slurp(b / rel));
        ++compared;
    }
    CHECK(compared > 5);
}

TEST_CASE("exit codes") {
    const auto dir = fresh("errors");
    std::ofstream(dir / "bad.json") << R"({"gfl": {"Kq": 1}})";
    CHECK(run({"modes", "--config", (dir / "bad.json").string(), "--out", dir.string()}) == 1);
    CHECK(run({"modes", "--config", (dir / "missing.json").string(), "--out", dir.string()}) == 1);
    CHECK(run({"frobnicate"}) == 1);
    CHECK(run({"sweep", "--param", "gfl.Ki=300,200,250", "--out", dir.string()}) == 1);
    auto cfg = config_to_json(nominal_config());
    cfg["setpoints"]["P_inv"] = 40.0;
    cfg["setpoints"]["P_sm"] = 40.0;
    std::ofstream(dir / "heavy.json") << cfg.dump();
    CHECK(run({"modes", "--config", (dir / "heavy.json").string(), "--out", dir.string()}) == 2);
    CHECK(run({"--help"}) == 0);
}

TEST_CASE("line length sweep writes the flux table and root locus") {
    const auto dir = fresh("lcc");
    REQUIRE(run({"sweep", "--param", "lines.lcc_km=1,5,10,15,20", "--out", dir.string()}) == 0);
    const auto flux = lines(dir / "flux_table.csv");
    REQUIRE(flux.size() > 1);
    CHECK(std::count(flux[0].begin(), flux[0].end(), ',') >= 5);
    CHECK(flux[0].find(",1,5,10,15,20") != std::string::npos);
    const auto svg = slurp(dir / "root_locus.svg");
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(fs::exists(dir / "trajectories.csv"));
}

TEST_CASE("integral gain sweep annotates quadrants") {
    const auto dir = fresh("ki");
    REQUIRE(run({"sweep", "--param", "gfl.Ki=200:300:5", "--sensitivities", "--contexts", "P=0.2;P=0.9", "--out",
                 dir.string()}) == 0);
    const auto t = lines(dir / "context_0" / "trajectories.csv");
    REQUIRE(t.size() > 1);
    CHECK(t[0].find("quadrant") != std::string::npos);
    CHECK(slurp(dir / "context_0" / "trajectories.csv").find(",II,") != std::string::npos);
    const auto tend = nlohmann::json::parse(slurp(dir / "tendency.json"));
    CHECK(tend.is_object());
}

TEST_CASE("reduced sample system feeds the modal study") {
    const auto dir = fresh("reduce");
    REQUIRE(run({"reduce", "--measurements", data("ieee39_measurements.csv"), "--generators",
                 data("ieee39_generators.csv"), "--between-location", "between", "--out", dir.string()}) == 0);
    REQUIRE(fs::exists(dir / "reduced_config.json"));
    CHECK(run({"modes", "--config", (dir / "reduced_config.json").string(), "--out", (dir / "modes").string()}) == 0);
    CHECK(run({"reduce", "--measurements", data("ieee39_measurements.csv"), "--generators",
               data("ieee39_generators.csv"), "--out", dir.string()}) == 1);
}

TEST_CASE("simulate and classify") {
    const auto dir = fresh("sim");
    REQUIRE(run({"simulate", "--event", "0.01:gfl.P_set=0.25", "--t-end", "0.03", "--channel", "gfl.Is", "--out",
                 dir.string()}) == 0);
    const auto tr = lines(dir / "trace.csv");
    CHECK(tr[0] == "time,gfl.Is");
    REQUIRE(run({"classify", "--value", "-0.07,0.29", "--value", "0.14,0.2", "--out", dir.string()}) == 0);
    const auto j = nlohmann::json::parse(slurp(dir / "classify.json"));
    CHECK(j.dump().find("destabilizing") != std::string::npos);
}

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmodes/report.hpp"

namespace cmodes {

struct StudyRequest {
    std::string subcommand;
    std::optional<std::filesystem::path> config;  ///< default: built-in nominal scenario
    std::filesystem::path out = "out";
    std::set<std::string> formats{"csv", "json", "svg"};
    ModeFilter filter;
    double threshold_pct = 5.0;
    std::vector<std::string> sensitivity_params;

    // sweep / penetration
    std::string param;
    std::vector<double> grid;
    std::vector<std::string> contexts;
    int substeps = 0;
    double p_total = 1.0;

    // simulate
    std::vector<InputEvent> events;
    double t_end = 0.1;
    double max_step = 10e-6;
    std::vector<std::string> channels;
    bool fit_mode = false;
    std::optional<std::string> fit_channel;

    // reduce
    std::filesystem::path measurements;
    std::filesystem::path generators;
    std::string inverter_location = "inverter";
    std::string machine_location = "machine";
    std::optional<std::string> between_location;
    std::optional<ComplexImpedance> z3_ohm;
    double x_over_r = 10.0;

    // classify
    std::vector<cplx> values;
    std::optional<cplx> lambda;

    bool wants(const std::string& fmt) const { return formats.count(fmt) > 0; }
};

nlohmann::json cmd_modes(const StudyRequest& req);
nlohmann::json cmd_sweep(const StudyRequest& req);
nlohmann::json cmd_penetration(const StudyRequest& req);
nlohmann::json cmd_simulate(const StudyRequest& req);
nlohmann::json cmd_reduce(const StudyRequest& req);
nlohmann::json cmd_classify(const StudyRequest& req);

/// "1,5,10" or "start:stop:count".
std::vector<double> parse_grid(const std::string& text);
/// "0.01:gfl.P_set=0.25"
InputEvent parse_event(const std::string& text);
/// "re,im"
cplx parse_complex(const std::string& text);

/// Full command line front end; returns the process exit code and prints a
/// one-line JSON diagnostic on stderr for failures.
int cli_main(int argc, const char* const* argv);

}  // namespace cmodes

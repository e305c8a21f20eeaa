#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "cmodes/network.hpp"

namespace cmodes {

// JSON scenario files keep the units of the published parameter table
// (milliseconds, percent) and are converted on load.

nlohmann::json config_to_json(const BenchmarkConfig& cfg);
BenchmarkConfig config_from_json(const nlohmann::json& j);

BenchmarkConfig load_config(const std::filesystem::path& path);
void save_config(const BenchmarkConfig& cfg, const std::filesystem::path& path);

/// Built-in nominal scenario (star form, l1 = l2 = 5 km, lcc = 20 km,
/// P_inv = P_sm = 0.2 pu).
BenchmarkConfig nominal_config();

/// Sets a numeric parameter addressed by a dotted JSON path such as
/// "gfl.Ki", "lines.lcc_km" or "setpoints.P_inv".  Unknown paths are rejected.
BenchmarkConfig with_parameter(const BenchmarkConfig& cfg, const std::string& path, double value);
double get_parameter(const BenchmarkConfig& cfg, const std::string& path);

/// Resolved view for auditing: the input config plus derived per-unit
/// impedances of every assembled branch.
nlohmann::json resolved_config(const BenchmarkConfig& cfg);

}  // namespace cmodes

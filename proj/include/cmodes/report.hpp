#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cmodes/modal.hpp"
#include "cmodes/sweeps.hpp"
#include "cmodes/timedomain.hpp"

namespace cmodes {

/// Fixed CSV float format: 9 significant digits.
std::string num(double v);

void write_text(const std::filesystem::path& path, const std::string& text);

struct ModeFilter {
    double min_freq_hz = 0.0;
    double max_damping = 1.0;
    bool coupling_only = false;
};

bool passes(const ModeReport& r, const ModeFilter& f);

/// index,re,im,freq_hz,damping,coupling,p_sm,p_gfl,p_grid,p_network
std::string modes_csv(const std::vector<ModeReport>& reports, const ModeFilter& f = {});
/// state,group,participation
std::string participation_csv(const std::vector<StateLabel>& states, const ModeReport& r);
/// channel,magnitude,angle_deg
std::string shapes_csv(const ModeReport& r);

/// Horizontal bar chart of the `top` largest participations.
std::string participation_svg(const std::vector<StateLabel>& states, const ModeReport& r, std::size_t top = 15);
/// Compass plot of complex mode-shape entries.
std::string compass_svg(const std::map<std::string, cplx>& shapes, const std::string& title);
/// Trajectories in the complex plane; first point hollow, last filled.
std::string root_locus_svg(const SweepResult& sweep, double min_freq_hz = 0.0);
/// Time series of selected trace channels.
std::string trace_svg(const Trace& tr, const std::vector<std::string>& channels);

/// One row per tracked coupling mode, one column per grid value (flux share).
std::string flux_table_csv(const SweepResult& sweep, double min_freq_hz = 0.0);
/// Long-format trajectory table with sensitivity quadrant annotations.
std::string trajectory_csv(const SweepResult& sweep);
nlohmann::json tendency_json(const std::vector<SweepResult>& contexts, const std::vector<TendencyVerdict>& v);

nlohmann::json mode_json(const ModeReport& r);

}  // namespace cmodes

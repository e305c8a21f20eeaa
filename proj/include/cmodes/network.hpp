#pragma once

#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "cmodes/dynamic_system.hpp"
#include "cmodes/models.hpp"

namespace cmodes {

enum class UnitSystem { kPhysical, kPerUnit };

struct ComplexImpedance {
    double r = 0.0;
    double x = 0.0;
    UnitSystem unit_system = UnitSystem::kPhysical;

    std::complex<double> z() const { return {r, x}; }
    double magnitude() const { return std::abs(z()); }
    static ComplexImpedance from_complex(std::complex<double> z, UnitSystem u) { return {z.real(), z.imag(), u}; }
};

struct StarTriple {
    ComplexImpedance z1;   ///< inverter to star node
    ComplexImpedance z2;   ///< machine to star node
    ComplexImpedance zcc;  ///< star node to equivalent grid
};

struct TriangleTriple {
    ComplexImpedance z1p;  ///< inverter to equivalent grid
    ComplexImpedance z2p;  ///< machine to equivalent grid
    ComplexImpedance z3p;  ///< inverter to machine
};

TriangleTriple star_to_triangle(const StarTriple& s);
StarTriple triangle_to_star(const TriangleTriple& t);

/// Kron reduction of an N-branch star onto the complete mesh between its
/// outer nodes.  Entry (i, j) with i < j is stored in row-major upper order:
/// (0,1), (0,2), ..., (1,2), ...
std::vector<std::complex<double>> star_to_mesh(const std::vector<std::complex<double>>& star);

/// Physical per-km line data.  When `z_is_resistance` is set the per-km
/// figure is the resistance and X = x_over_r * R; otherwise it is |Z|.
struct LineData {
    double z_ohm_per_km = 0.05;
    double x_over_r = 1.04;
    bool z_is_resistance = true;

    ComplexImpedance per_km() const;
};

ComplexImpedance impedance_from_length(double length_km, const ComplexImpedance& per_km, const PerUnitBase& base);
ComplexImpedance to_per_unit(const ComplexImpedance& z, const PerUnitBase& base);

/// A branch given either by a length (using the shared per-km data) or by an
/// explicit physical impedance.
struct BranchSpec {
    std::optional<double> length_km;
    std::optional<ComplexImpedance> z_ohm;

    ComplexImpedance physical(const LineData& line) const;
};

enum class Topology { kStar, kTriangle };

enum class DeviceKind { kSm, kGfl };

/// Additional device hung on the star node (multi-device star benchmark).
struct ExtraDevice {
    DeviceKind kind = DeviceKind::kGfl;
    std::string name;
    BranchSpec branch;
    double setpoint = 0.0;
};

struct BenchmarkConfig {
    std::string name = "benchmark";
    PerUnitBase base;
    Topology topology = Topology::kStar;
    LineData line;
    BranchSpec z1{5.0, {}}, z2{5.0, {}}, zcc{20.0, {}};     // star
    BranchSpec z1p{45.0, {}}, z2p{45.0, {}}, z3p{11.25, {}};  // triangle

    SmParams sm;
    AvrParams avr;
    GovTurbineParams gov;
    GflParams gfl;
    EquGridParams grid;

    /// Absent setpoint removes the device from the benchmark.
    std::optional<double> p_inv = 0.2;
    std::optional<double> p_sm = 0.2;
    double q_inv = 0.0;

    /// Virtual shunt resistance at the machine terminal (pu); it makes the
    /// terminal voltage an explicit function of the inductive currents.
    double sm_terminal_shunt_r = 20.0;

    std::vector<ExtraDevice> extra_devices;

    void validate() const;
    bool has_sm() const { return p_sm.has_value(); }
    bool has_gfl() const { return p_inv.has_value(); }

    StarTriple star_impedances() const;          ///< physical
    TriangleTriple triangle_impedances() const;  ///< physical; star form is converted
};

/// One RL branch of the assembled network, in per unit.
struct BranchInfo {
    std::string name;
    std::size_t from = 0;
    std::size_t to = 0;
    double r = 0.0;
    double l = 0.0;
};

/// Node list and branch list actually used by an assembled benchmark.
struct NetworkLayout {
    std::vector<std::string> nodes;
    std::vector<BranchInfo> branches;
};

NetworkLayout network_layout(const BenchmarkConfig& cfg);

/// Builds the benchmark ODE.  State order: per machine (machine, AVR,
/// governor/turbine), per inverter (filter and current control, PLL, power
/// loop), branches, equivalent grid.
DynamicSystem assemble_benchmark(const BenchmarkConfig& cfg);

}  // namespace cmodes

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmodes/network.hpp"

namespace cmodes {

struct ShortCircuitMeasurement {
    std::string location;
    double U = 0.0;    ///< line-line voltage, V
    double Icc = 0.0;  ///< short-circuit current magnitude, A

    void validate() const;
};

struct GeneratorRecord {
    std::string name;
    double H = 0.0;  ///< s
    double S = 0.0;  ///< VA
    std::optional<double> droop;  ///< fraction; absent = no primary control

    void validate() const;
};

/// |Z| = U / (Icc sqrt(3)) in ohm.
double impedance_from_short_circuit(const ShortCircuitMeasurement& m);

/// Rating-weighted mean inertia.
double aggregate_inertia(const std::vector<GeneratorRecord>& gens);

/// Aggregate static power-frequency gain on s_base, sum (S_i/s_base)/R_i.
double tune_equivalent_droop(const std::vector<GeneratorRecord>& gens, const PerUnitBase& base);

struct ReductionInput {
    ShortCircuitMeasurement sc_inverter;  ///< fault at the inverter bus
    ShortCircuitMeasurement sc_machine;   ///< fault at the machine bus
    std::optional<ComplexImpedance> z3_ohm;
    std::optional<ShortCircuitMeasurement> sc_between;
    std::vector<GeneratorRecord> generators;
    double x_over_r = 10.0;
};

/// Triangle-form benchmark built from measurements.  Device parameters come
/// from `templ`; the voltage base becomes the measured U.
BenchmarkConfig reduce_to_benchmark(const ReductionInput& in, const BenchmarkConfig& templ);

/// Splits |Z| into R + jX with the given X/R.
ComplexImpedance split_impedance(double magnitude, double x_over_r);

/// Bolted-fault current (A) through the branch between `node` and the grid,
/// from a time-domain fault on `node` ("gfl" or "sm").  `cfg` must be in
/// triangle form.
double simulate_short_circuit_current(const BenchmarkConfig& cfg, const std::string& node,
                                      double fault_conductance = 1e4, double duration = 0.12);

/// location,U_V,Icc_A
std::vector<ShortCircuitMeasurement> read_measurements_csv(const std::filesystem::path& path);
/// name,H_s,S_VA,droop  (droop may be empty)
std::vector<GeneratorRecord> read_generators_csv(const std::filesystem::path& path);

}  // namespace cmodes

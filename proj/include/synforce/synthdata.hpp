#pragma once

#include "synforce/pipeline.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace synforce {

enum class FaultKind { voltage_dip, thermal_drift, coupling_break };

std::string_view to_string(FaultKind kind);
FaultKind fault_kind_from_string(std::string_view name);

// Frames [start, end) of one vehicle. `channel` picks the cell (voltage_dip,
// coupling_break) or probe (thermal_drift).
//   voltage_dip     cell drops by magnitude * (that cell's std)
//   thermal_drift   probe ramps linearly up to +magnitude degC at the last frame
//   coupling_break  cell values are circularly shifted inside the interval by
//                   magnitude quarter-cycles, keeping their marginal distribution
struct FaultSpec {
    FaultKind kind = FaultKind::voltage_dip;
    std::size_t vehicle = 0;
    std::size_t start = 0;
    std::size_t end = 0;
    double magnitude = 1.0;
    std::size_t channel = 0;
};

struct FleetConfig {
    std::size_t vehicles = 4;
    std::size_t frames = 20000; // per vehicle
    std::size_t cells = 8;
    std::size_t probes = 4;
    double cadence = 10.0;        // seconds
    std::size_t cycle_frames = 720; // one charge/discharge cycle
    std::vector<FaultSpec> faults;
    std::uint64_t seed = 0;
};

// Normal telemetry for one vehicle, all labels 0.
std::vector<RawFrame> generate_vehicle(const FleetConfig& config, std::size_t vehicle);

// Every vehicle with its faults applied, in vehicle order.
std::vector<std::vector<RawFrame>> generate_fleet(const FleetConfig& config);

std::vector<RawFrame> concat_fleet(const std::vector<std::vector<RawFrame>>& fleet);

// Applies one fault to a single vehicle's series and labels its interval.
// Throws ConfigError for an empty or out-of-range interval, a bad channel or a
// negative magnitude.
void inject_fault(std::vector<RawFrame>& frames, const FaultSpec& spec, std::size_t cycle_frames = 720);

// Recomputes total_volt and the voltage/temperature extrema from the per-cell
// and per-probe channels.
void refresh_derived(RawFrame& frame);

// Series-connected cells represented by each monitored cell.
inline constexpr double kCellsPerMonitor = 12.0;

} // namespace synforce

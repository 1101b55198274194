#include "synforce/synthdata.hpp"

#include "synforce/errors.hpp"
#include "synforce/rng.hpp"

#include <algorithm>
#include <cmath>

namespace synforce {

namespace {

constexpr double kTwoPi = 6.283185307179586476925;
constexpr double kStartTime = 1.7e9;

// AR(1) process x <- phi * x + sigma * N(0, 1).
struct Ar1 {
    double phi = 0.0;
    double sigma = 0.0;
    double x = 0.0;
    double next(Rng& rng)
    {
        x = phi * x + sigma * rng.normal();
        return x;
    }
};

double cell_std(const std::vector<RawFrame>& frames, std::size_t cell)
{
    double mean = 0.0;
    for (const auto& f : frames) mean += f.cell_volts[cell];
    mean /= static_cast<double>(frames.size());
    double ss = 0.0;
    for (const auto& f : frames) {
        const double d = f.cell_volts[cell] - mean;
        ss += d * d;
    }
    return frames.size() > 1 ? std::sqrt(ss / static_cast<double>(frames.size() - 1)) : 0.0;
}

} // namespace

std::string_view to_string(FaultKind kind)
{
    switch (kind) {
    case FaultKind::voltage_dip: return "voltage_dip";
    case FaultKind::thermal_drift: return "thermal_drift";
    case FaultKind::coupling_break: return "coupling_break";
    }
    return "voltage_dip";
}

FaultKind fault_kind_from_string(std::string_view name)
{
    if (name == "voltage_dip") return FaultKind::voltage_dip;
    if (name == "thermal_drift") return FaultKind::thermal_drift;
    if (name == "coupling_break") return FaultKind::coupling_break;
    throw ConfigError("unknown fault kind '" + std::string(name) + "'");
}

void refresh_derived(RawFrame& f)
{
    if (!f.cell_volts.empty()) {
        const auto [lo, hi] = std::minmax_element(f.cell_volts.begin(), f.cell_volts.end());
        f.volt_extrema = {*hi, *lo};
        double sum = 0.0;
        for (double v : f.cell_volts) sum += v;
        f.total_volt = kCellsPerMonitor * sum;
    }
    if (!f.probe_temps.empty()) {
        const auto [lo, hi] = std::minmax_element(f.probe_temps.begin(), f.probe_temps.end());
        f.temp_extrema = {*hi, *lo};
    }
}

std::vector<RawFrame> generate_vehicle(const FleetConfig& cfg, std::size_t vehicle)
{
    if (cfg.vehicles == 0 || cfg.frames == 0 || cfg.cells == 0 || cfg.probes == 0) {
        throw ConfigError("fleet counts must all be at least 1");
    }
    if (!(cfg.cadence > 0.0) || cfg.cycle_frames < 4) throw ConfigError("fleet cadence and cycle length must be positive");
    Rng rng(derive_seed(cfg.seed, "synth/vehicle/" + std::to_string(vehicle)));

    const double phase = rng.uniform(0.0, kTwoPi);
    const double ambient = 25.0 + 3.0 * rng.normal();
    const double peak_current = 110.0 + 20.0 * rng.uniform();

    std::vector<double> cell_offset(cfg.cells);
    std::vector<double> cell_resistance(cfg.cells);
    std::vector<Ar1> cell_drift(cfg.cells, Ar1{0.999, 0.0006, 0.0});
    std::vector<Ar1> cell_noise(cfg.cells, Ar1{0.7, 0.002, 0.0});
    for (std::size_t c = 0; c < cfg.cells; ++c) {
        cell_offset[c] = 0.01 * rng.normal();
        cell_resistance[c] = 0.0006 + 0.0002 * rng.normal();
    }
    std::vector<double> probe_offset(cfg.probes);
    std::vector<double> probe_gain(cfg.probes);
    std::vector<Ar1> probe_noise(cfg.probes, Ar1{0.8, 0.05, 0.0});
    for (std::size_t p = 0; p < cfg.probes; ++p) {
        probe_offset[p] = 0.5 * rng.normal();
        probe_gain[p] = 1.0 + 0.15 * rng.normal();
    }
    Ar1 current_noise{0.9, 4.0, 0.0};
    Ar1 soc_noise{0.95, 0.05, 0.0};

    std::vector<RawFrame> frames(cfg.frames);
    double mileage = 1000.0 + 500.0 * rng.uniform();
    double pack_temp = ambient;
    const double cycle = static_cast<double>(cfg.cycle_frames);
    for (std::size_t i = 0; i < cfg.frames; ++i) {
        RawFrame& f = frames[i];
        const double theta = kTwoPi * static_cast<double>(i) / cycle + phase;
        f.timestamp = kStartTime + cfg.cadence * static_cast<double>(i);
        f.soc = 55.0 + 30.0 * std::sin(theta) + soc_noise.next(rng);
        const double current = -peak_current * std::cos(theta) + current_noise.next(rng);
        f.total_current = current;
        f.charge_status = current < -15.0 ? 1 : (current > 15.0 ? 2 : 3);
        f.speed = f.charge_status == 2 ? std::max(0.0, 0.4 * current + 3.0 * rng.normal()) : 0.0;
        mileage += f.speed * cfg.cadence / 3600.0;
        f.mileage = mileage;
        f.insulation_res = 500.0 + 20.0 * std::sin(theta / 5.0) + 2.0 * rng.normal();

        const double common = 3.2 + 0.002 * f.soc;
        f.cell_volts.resize(cfg.cells);
        for (std::size_t c = 0; c < cfg.cells; ++c) {
            f.cell_volts[c] =
                common + cell_offset[c] - cell_resistance[c] * current + cell_drift[c].next(rng) + cell_noise[c].next(rng);
        }

        const double target = ambient + 8.0 * (current / 120.0) * (current / 120.0);
        pack_temp += (target - pack_temp) / 60.0;
        f.probe_temps.resize(cfg.probes);
        for (std::size_t p = 0; p < cfg.probes; ++p) {
            f.probe_temps[p] = ambient + probe_gain[p] * (pack_temp - ambient) + probe_offset[p] + probe_noise[p].next(rng);
        }
        f.label = 0;
        refresh_derived(f);
    }
    return frames;
}

void inject_fault(std::vector<RawFrame>& frames, const FaultSpec& spec, std::size_t cycle_frames)
{
    if (spec.start >= spec.end || spec.end > frames.size()) {
        throw ConfigError("fault interval [" + std::to_string(spec.start) + ", " + std::to_string(spec.end) +
                          ") outside the " + std::to_string(frames.size()) + "-frame series");
    }
    if (!(spec.magnitude >= 0.0) || !std::isfinite(spec.magnitude)) throw ConfigError("fault magnitude must be >= 0");
    const std::size_t channels = spec.kind == FaultKind::thermal_drift ? frames.front().probe_temps.size()
                                                                       : frames.front().cell_volts.size();
    if (spec.channel >= channels) {
        throw ConfigError("fault channel " + std::to_string(spec.channel) + " out of range for " +
                          std::string(to_string(spec.kind)));
    }
    const std::size_t n = spec.end - spec.start;
    switch (spec.kind) {
    case FaultKind::voltage_dip: {
        const double drop = spec.magnitude * cell_std(frames, spec.channel);
        for (std::size_t i = spec.start; i < spec.end; ++i) frames[i].cell_volts[spec.channel] -= drop;
        break;
    }
    case FaultKind::thermal_drift:
        for (std::size_t i = spec.start; i < spec.end; ++i) {
            frames[i].probe_temps[spec.channel] +=
                spec.magnitude * static_cast<double>(i - spec.start + 1) / static_cast<double>(n);
        }
        break;
    case FaultKind::coupling_break: {
        const auto shift = static_cast<std::size_t>(std::llround(spec.magnitude * static_cast<double>(cycle_frames) / 4.0)) % n;
        std::vector<double> original(n);
        for (std::size_t k = 0; k < n; ++k) original[k] = frames[spec.start + k].cell_volts[spec.channel];
        for (std::size_t k = 0; k < n; ++k) frames[spec.start + k].cell_volts[spec.channel] = original[(k + shift) % n];
        break;
    }
    }
    for (std::size_t i = spec.start; i < spec.end; ++i) {
        frames[i].label = 1;
        refresh_derived(frames[i]);
    }
}

std::vector<std::vector<RawFrame>> generate_fleet(const FleetConfig& cfg)
{
    for (const auto& f : cfg.faults) {
        if (f.vehicle >= cfg.vehicles) throw ConfigError("fault targets vehicle " + std::to_string(f.vehicle) + " of " + std::to_string(cfg.vehicles));
    }
    std::vector<std::vector<RawFrame>> fleet;
    fleet.reserve(cfg.vehicles);
    for (std::size_t v = 0; v < cfg.vehicles; ++v) {
        fleet.push_back(generate_vehicle(cfg, v));
        for (const auto& f : cfg.faults) {
            if (f.vehicle == v) inject_fault(fleet.back(), f, cfg.cycle_frames);
        }
    }
    return fleet;
}

std::vector<RawFrame> concat_fleet(const std::vector<std::vector<RawFrame>>& fleet)
{
    std::vector<RawFrame> out;
    std::size_t total = 0;
    for (const auto& v : fleet) total += v.size();
    out.reserve(total);
    for (const auto& v : fleet) out.insert(out.end(), v.begin(), v.end());
    return out;
}

} // namespace synforce

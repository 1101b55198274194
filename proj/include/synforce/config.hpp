#pragma once

#include "synforce/fieldsim.hpp"
#include "synforce/pipeline.hpp"
#include "synforce/synthdata.hpp"
#include "synforce/training.hpp"

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace synforce {

enum class FieldInit { none, point, ring, gaussian, uniform };

// Initial state and output cadence of a fieldsim run.
struct FieldRunConfig {
    std::size_t steps = 100;
    FieldInit init = FieldInit::ring;
    double init_radius = 0.5;
    double init_width = 0.05;
    double init_mass = 1.0;
    std::size_t particles = 0;
    double particle_charge = 1.0;
    double particle_radius = 0.8; // particles start uniformly inside this radius
    double spike_span = 10.0;     // spike times drawn uniformly from [0, span)
    std::size_t snapshot_every = 10;
    std::size_t snapshot_stride = 4;
    bool poisson = true;
};

// Every tunable of every command. Text form: one `key = value` per line,
// `#` starts a comment, unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    TrainConfig train;
    double pca_threshold = 0.95;
    DenoiseParams denoise;
    double cadence = 10.0;
    FleetConfig fleet;
    FieldConfig field;
    FieldRunConfig field_run;
    std::array<double, 3> alarm_quantiles{0.99, 0.999, 0.9999};
    std::string eval_balanced = "random";

    // Canonical, complete key=value listing used as the provenance echo.
    std::vector<std::pair<std::string, std::string>> resolved() const;
    std::vector<std::string> echo_lines() const;
};

// Throws ConfigError on syntax errors, unknown keys or bad values.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
RunConfig parse_run_config(std::istream& in);
RunConfig load_run_config(const std::string& path);
// Restores a configuration from its echo (e.g. the `# key=value` lines of an artifact).
RunConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs);

std::string format_fault(const FaultSpec& spec);
FaultSpec parse_fault(const std::string& text);

} // namespace synforce

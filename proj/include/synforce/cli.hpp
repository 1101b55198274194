#pragma once

#include "synforce/checkpoint.hpp"
#include "synforce/config.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace synforce {

enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 2,       // bad arguments, bad config, unreadable or unwritable files
    kExitNoNormal = 3,    // no normal training windows, or training diverged
    kExitSchema = 4,      // input columns do not match the expected schema
    kExitSingleClass = 5, // evaluation needs both labels
    kExitCfl = 6,         // fieldsim time step violates dt <= h^2 / (4 D)
};

struct NoNormalWindows : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training diverged; `partial` holds the pipeline and the last completed epoch.
struct CheckpointDiverged : std::runtime_error {
    CheckpointDiverged(const std::string& what, Checkpoint c) : std::runtime_error(what), partial(std::move(c)) {}
    Checkpoint partial;
};

// Pipeline fit, windowing, training and alarm calibration on one frame set.
// Alarm thresholds come from the scores of the label-0 frames; they are left
// unset (with a warning) when fewer than 100 such frames exist. Throws
// NoNormalWindows or CheckpointDiverged.
Checkpoint train_checkpoint(const std::vector<RawFrame>& frames, const RunConfig& cfg,
                            const EpochCallback& on_epoch = {}, std::vector<std::string>* warnings = nullptr);

// Mass-normalised initial density for a fieldsim run.
void init_density(DensityGrid& grid, const FieldConfig& field, const FieldRunConfig& run);
// Particles drawn uniformly in the disc of radius run.particle_radius around r0.
std::vector<Particle> init_particles(const FieldConfig& field, const FieldRunConfig& run, std::uint64_t seed);

// Entry point of the `synforce` tool: synth | fit | score | eval | fieldsim.
// `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv);

} // namespace synforce

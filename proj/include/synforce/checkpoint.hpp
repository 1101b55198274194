#pragma once

#include "synforce/evalscore.hpp"
#include "synforce/pipeline.hpp"
#include "synforce/training.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace synforce {

inline constexpr const char* kCheckpointFormat = "synforce-ckpt/1";

struct Checkpoint {
    TrainedModel model;
    PipelineModel pipeline;
    TrainConfig config;
    std::optional<AlarmConfig> alarm;
    std::vector<std::pair<std::string, std::string>> run_config; // resolved key=value echo
};

// Single JSON document; doubles are written in shortest round-trip form so
// loading reproduces every parameter bit for bit.
void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// Throws SchemaError on malformed or foreign documents.
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::string& path);

// synforce: epoch,l_rec,l_svdd,l_enc,l_diff,l_vol,l_stdp,total,s_r,s_s,s_e
// dsvdd:    epoch,l_svdd,l_weight,total
// followed in both cases by c_prev_1.., c_mean_1.., c_new_1.. over the centre axes.
void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history, FitMode mode,
                       const std::vector<std::string>& comments = {});
std::vector<EpochRecord> read_history_csv(std::istream& in, FitMode* mode = nullptr);

} // namespace synforce

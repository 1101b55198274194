#pragma once

#include "synforce/losses.hpp"
#include "synforce/model.hpp"
#include "synforce/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace synforce {

enum class FitMode { synforce, dsvdd };

std::string_view to_string(FitMode mode);
FitMode fit_mode_from_string(std::string_view name);

enum class LossTerm { rec, svdd, enc, diff, vol, stdp, total, dsvdd };

std::string_view to_string(LossTerm term);
LossTerm loss_term_from_string(std::string_view name);

struct ObjectiveConfig {
    LossConfig loss;
    FitMode mode = FitMode::synforce;
    double lambda_w = 1e-6;      // weight decay of the baseline objective
    std::size_t knn_cap = 2048;  // max latent points in the diffusion graph
};

// Batch quantities treated as constants under differentiation: the
// consistency target sg(z) and the kNN topology with its bandwidth.
struct ObjectiveContext {
    Eigen::MatrixXd enc_target;
    std::vector<std::size_t> graph_rows;
    NeighborGraph topology;
};

struct ObjectiveEval {
    LossBreakdown parts;
    double value = 0.0;   // selected term
    double weight_norm_sq = 0.0;
    bool stdp_skipped = false;
    ModelParams grad;
    UncertaintyParams grad_uncertainty;
    Eigen::VectorXd grad_centre;
    Eigen::MatrixXd global; // z_g of the batch, for centre statistics
    std::uint64_t signature = 0;
    ObjectiveContext context;
};

// Forward pass and loss evaluation over a (B*L) x d batch. `term` selects the
// scalar whose gradient is returned. When `context` is null it is derived from
// this pass (subsampling the graph rows with `rng` when B*L exceeds knn_cap).
ObjectiveEval evaluate_objective(const ModelParams& params, const UncertaintyParams& uncertainty,
                                 const Eigen::VectorXd& centre, const Eigen::MatrixXd& frames,
                                 std::size_t window_length, const ObjectiveConfig& cfg, LossTerm term,
                                 bool with_grad, const ObjectiveContext* context = nullptr, Rng* rng = nullptr);

} // namespace synforce

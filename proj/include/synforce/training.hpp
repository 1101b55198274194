#pragma once

#include "synforce/objective.hpp"
#include "synforce/pipeline.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <vector>

namespace synforce {

struct TrainConfig {
    std::size_t epochs = 50;
    std::size_t window = 60;
    std::size_t stride = 5;
    std::size_t batch = 64;
    double learning_rate = 1e-4;
    FitMode mode = FitMode::synforce;
    std::uint64_t seed = 0;
    std::size_t global_dim = 2;
    std::size_t local_dim = 4;
    LossConfig loss;
    double lambda_w = 1e-6;
    std::size_t knn_cap = 2048;
    double divergence_limit = 1e8;

    ObjectiveConfig objective() const { return {loss, mode, lambda_w, knn_cap}; }
};

// Adam moments over a flat parameter vector.
struct OptimizerState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::size_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void optimizer_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, OptimizerState& state, double lr);

// Mean z_g over every frame of every window.
Eigen::VectorXd init_centre(const ModelParams& params, const WindowBatch& windows);
// 0.99 * c + 0.01 * epoch_mean
Eigen::VectorXd update_centre(const Eigen::VectorXd& centre, const Eigen::VectorXd& epoch_mean);

struct EpochRecord {
    std::size_t epoch = 0; // 1-based
    LossBreakdown mean;    // window-weighted mean over the epoch's batches
    double weight_penalty = 0.0; // baseline mode: lambda_w * ||W||^2 at epoch end
    UncertaintyParams uncertainty;
    Eigen::VectorXd centre_before;
    Eigen::VectorXd epoch_mean;
    Eigen::VectorXd centre_after;
};

struct TrainedModel {
    ModelParams params;
    UncertaintyParams uncertainty;
    Eigen::VectorXd centre;
    Eigen::VectorXd centre_init;
    std::vector<EpochRecord> history;
};

// Raised when the objective turns non-finite or exceeds the divergence limit;
// carries the state at the end of the last completed epoch.
class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::shared_ptr<TrainedModel> last_good)
        : std::runtime_error(what), last_good_(std::move(last_good))
    {
    }
    const TrainedModel* last_good() const { return last_good_.get(); }

private:
    std::shared_ptr<TrainedModel> last_good_;
};

// Invoked after each epoch's centre update with the current model state.
using EpochCallback = std::function<void(const EpochRecord&, const TrainedModel&)>;

// Optimises the configured objective over normal windows. Throws ConfigError
// when `windows` is empty or contains an anomalous frame.
TrainedModel fit(const WindowBatch& windows, const TrainConfig& config, const EpochCallback& on_epoch = {});

} // namespace synforce

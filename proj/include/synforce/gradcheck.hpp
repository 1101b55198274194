#pragma once

#include "synforce/objective.hpp"
#include "synforce/pipeline.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>

namespace synforce {

struct GradCheckReport {
    std::string loss;
    std::size_t checked = 0;
    std::size_t resampled = 0; // coordinates skipped because a kink was crossed
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    double rtol = 1e-3;
    bool passed = false;
};

struct GradCheckOptions {
    double step = 1e-4;
    std::size_t max_coordinates = 200;
    // Relative errors use max(|analytic|, |numeric|, abs_floor) as denominator.
    double abs_floor = 1e-7;
    std::uint64_t seed = 0;
};

// Objective over a flat vector; `signature` (optional) identifies the smooth
// region the point lies in. Coordinates whose +/- step leaves the region of
// the base point are skipped and replaced by another draw.
using FlatObjective = std::function<double(const Eigen::VectorXd&, std::uint64_t* signature)>;

GradCheckReport check_gradients(const FlatObjective& f, const Eigen::VectorXd& analytic, const Eigen::VectorXd& at,
                                double rtol, const GradCheckOptions& opts = {});

// Central finite differences of the named loss against its analytic gradient
// with respect to all model weights, the uncertainty parameters and c_g.
// Batch statistics (consistency target, kNN topology) stay at the base point.
GradCheckReport check_gradients(LossTerm term, const ModelParams& params, const UncertaintyParams& uncertainty,
                                const Eigen::VectorXd& centre, const WindowBatch& batch, const ObjectiveConfig& cfg,
                                double rtol, const GradCheckOptions& opts = {});

} // namespace synforce

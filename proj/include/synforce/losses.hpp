#pragma once

#include "synforce/model.hpp"

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <string>
#include <vector>

namespace synforce {

// Batched tensors are (B*L) x dim matrices; the frames of window b occupy
// rows [b*L, (b+1)*L).

struct LossConfig {
    double omega_diff = 0.01;
    double omega_vol = 0.01;
    double lambda_stdp = 0.0125;
    double a_plus = 1.0;
    double tau_plus = 5.0;
    std::size_t max_lag = 6;
    double sigma_force = 2.0;
    double epsilon = 0.05;
    std::size_t knn_k = 5;
    // Bandwidth of the kNN affinities: the median selected neighbour distance
    // when unset, otherwise this fixed value.
    std::optional<double> sigma_d;
    double sigma_v = 1.0;
};

struct NeighborGraph {
    std::size_t points = 0;
    std::size_t k = 0;
    double sigma_d = 1.0;
    std::vector<std::size_t> neighbors; // points x k, row-major, nearest first
    std::vector<double> distance;       // points x k
    std::vector<double> affinity;       // points x k
    std::vector<double> density;        // points

    std::size_t neighbor(std::size_t i, std::size_t slot) const { return neighbors[i * k + slot]; }
    double weight(std::size_t i, std::size_t slot) const { return affinity[i * k + slot]; }
};

struct LossBreakdown {
    double rec = 0.0;
    double svdd = 0.0;
    double enc = 0.0;
    double diff = 0.0;
    double vol = 0.0;
    double stdp = 0.0;
    double total = 0.0;
};

struct MatrixLoss {
    double value = 0.0;
    Eigen::MatrixXd grad; // d value / d first argument
};

struct CentredLoss {
    double value = 0.0;
    Eigen::MatrixXd grad;        // d value / d points
    Eigen::VectorXd grad_centre; // d value / d c_g
};

// (1/n) sum ||x_hat - x||^2
MatrixLoss loss_rec(const Eigen::MatrixXd& x_hat, const Eigen::MatrixXd& x);

// (1/n) sum ||z_g - c_g||, unsquared; zero subgradient at the centre.
CentredLoss loss_svdd(const Eigen::MatrixXd& z_global, const Eigen::VectorXd& centre);

// (1/n) sum ||z_hat - sg(z)||^2. The target carries no gradient, so only
// d/dz_hat is returned.
MatrixLoss loss_enc(const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& z_target);

NeighborGraph build_knn_graph(const Eigen::MatrixXd& latents, std::size_t k,
                              std::optional<double> sigma_d = std::nullopt);
// Recomputes affinities and densities for new point positions while keeping
// the neighbour sets and bandwidth of `topology`.
NeighborGraph reweight_graph(const NeighborGraph& topology, const Eigen::MatrixXd& latents);

double loss_diff(const NeighborGraph& graph);
// Value and gradient with respect to the point coordinates; neighbour sets and
// sigma_d are held constant.
MatrixLoss loss_diff_grad(const NeighborGraph& graph, const Eigen::MatrixXd& latents);

// ln V(B^p(R)) = (p/2) ln pi - lnGamma(p/2 + 1) + p ln R. R <= 0 is clamped
// to 1e-6 and reported through `clamped`.
double hypersphere_log_volume(std::size_t p, double radius, bool* clamped = nullptr);

// Volume-compression surrogate around the extended centre [c_g; 0].
// `argmax` receives the index realising the batch radius.
CentredLoss loss_vol(const Eigen::MatrixXd& latents, const Eigen::VectorXd& centre, double sigma_v,
                     std::size_t* argmax = nullptr);

struct StdpField {
    std::size_t windows = 0;
    std::size_t steps = 0;  // T = L - max_lag - 1 per window
    Eigen::MatrixXd forces;  // (windows*steps) x D_zl
    Eigen::MatrixXd motions; // (windows*steps) x D_zl
};

// Lag-decayed, gated soft-inverse-distance forces over the trailing lags and
// the next-step motion of each local latent trajectory. Throws ConfigError when
// L <= max_lag + 1.
StdpField stdp_force_field(const Eigen::MatrixXd& z_local, std::size_t window_length, const LossConfig& cfg);

// Mean of 1 - cos-like alignment between motions and forces.
double loss_stdp(const StdpField& field, double epsilon);
// Value and gradient with respect to z_local through both motions and forces.
MatrixLoss loss_stdp_grad(const Eigen::MatrixXd& z_local, std::size_t window_length, const LossConfig& cfg);

struct TotalLoss {
    double value = 0.0;
    // d total / d component, in rec, svdd, enc, diff, vol, stdp order.
    std::array<double, 6> d_components{};
    double d_s_r = 0.0;
    double d_s_s = 0.0;
    double d_s_e = 0.0;
};

TotalLoss total_loss(const LossBreakdown& parts, const UncertaintyParams& s, const LossConfig& cfg);

// (1/n) sum ||z - c||^2 + lambda_w * ||W||^2, the original one-class objective.
// The weight-norm gradient is handled by the caller; `grad` is d/dz.
CentredLoss dsvdd_baseline_loss(const Eigen::MatrixXd& z_global, const Eigen::VectorXd& centre,
                                double weight_norm_sq, double lambda_w);

} // namespace synforce

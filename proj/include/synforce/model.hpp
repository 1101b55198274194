#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace synforce {

inline constexpr double kLeakySlope = 0.01;

// Fully connected layer y = x W^T + b acting on row-major batches.
struct Dense {
    Eigen::MatrixXd weight; // out x in
    Eigen::VectorXd bias;   // empty when has_bias is false
    bool has_bias = true;

    Eigen::Index in() const { return weight.cols(); }
    Eigen::Index out() const { return weight.rows(); }
};

// Per-frame encoder/decoder:
//   trunk   d -> 64 -> 32 (leaky rectifier)
//   heads   32 -> D_zg (no bias), 32 -> D_zl
//   decoder D_zg + D_zl -> 32 -> 64 -> d
struct ModelParams {
    std::size_t input_dim = 0;
    std::size_t global_dim = 2;
    std::size_t local_dim = 4;
    Dense enc1, enc2, head_global, head_local, dec1, dec2, dec3;

    std::size_t latent_dim() const { return global_dim + local_dim; }
    std::size_t parameter_count() const;

    // Visits layers in the fixed serialization order.
    template <class F>
    void for_each_layer(F&& f)
    {
        f("enc1", enc1); f("enc2", enc2); f("head_global", head_global); f("head_local", head_local);
        f("dec1", dec1); f("dec2", dec2); f("dec3", dec3);
    }
    template <class F>
    void for_each_layer(F&& f) const
    {
        f("enc1", enc1); f("enc2", enc2); f("head_global", head_global); f("head_local", head_local);
        f("dec1", dec1); f("dec2", dec2); f("dec3", dec3);
    }
};

// Learnable log-scales of the uncertainty-weighted terms.
struct UncertaintyParams {
    double s_r = 0.0;
    double s_s = 0.0;
    double s_e = 0.0;
};

struct LatentPair {
    Eigen::VectorXd global;
    Eigen::VectorXd local;

    Eigen::VectorXd joint() const;
};

ModelParams init_model(std::uint64_t seed, std::size_t input_dim, std::size_t global_dim = 2,
                       std::size_t local_dim = 4);
ModelParams zeros_like(const ModelParams& params);

// Flat parameter vector: each layer's weight in row-major order, then its bias.
Eigen::VectorXd flatten(const ModelParams& params);
void unflatten(ModelParams& params, const Eigen::VectorXd& flat);
// L2 norm squared of the trunk and global-head weights (baseline weight decay).
double encoder_weight_norm_sq(const ModelParams& params);

struct EncoderTrace {
    Eigen::MatrixXd input, pre1, act1, pre2, act2;
};

struct Encoded {
    Eigen::MatrixXd global; // n x D_zg
    Eigen::MatrixXd local;  // n x D_zl
    EncoderTrace trace;

    Eigen::MatrixXd joint() const; // [global | local]
};

struct DecoderTrace {
    Eigen::MatrixXd input, pre1, act1, pre2, act2;
};

struct Decoded {
    Eigen::MatrixXd output; // n x d
    DecoderTrace trace;
};

Encoded encode_batch(const ModelParams& params, const Eigen::MatrixXd& x);
Decoded decode_batch(const ModelParams& params, const Eigen::MatrixXd& z);
// Global head only; used for scoring.
Eigen::MatrixXd encode_global(const ModelParams& params, const Eigen::MatrixXd& x);

LatentPair encode(const ModelParams& params, const Eigen::VectorXd& x);
Eigen::VectorXd decode(const ModelParams& params, const Eigen::VectorXd& z);

// Vector-Jacobian products. Gradients are accumulated into `grad`; the return
// value is the gradient with respect to the layer-stack input.
Eigen::MatrixXd backprop_encoder(const ModelParams& params, const EncoderTrace& trace,
                                 const Eigen::MatrixXd& d_global, const Eigen::MatrixXd& d_local,
                                 ModelParams& grad);
Eigen::MatrixXd backprop_decoder(const ModelParams& params, const DecoderTrace& trace,
                                 const Eigen::MatrixXd& d_output, ModelParams& grad);

// Hash of every pre-activation sign in a trace; equal signatures mean the
// same linear region of the network.
std::uint64_t activation_signature(const EncoderTrace& trace, std::uint64_t seed = 0);
std::uint64_t activation_signature(const DecoderTrace& trace, std::uint64_t seed = 0);

} // namespace synforce

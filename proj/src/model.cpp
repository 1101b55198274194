#include "synforce/model.hpp"

#include "synforce/errors.hpp"
#include "synforce/rng.hpp"

#include <cmath>

namespace synforce {

namespace {

constexpr Eigen::Index kHidden1 = 64;
constexpr Eigen::Index kHidden2 = 32;

Dense make_dense(Rng& rng, Eigen::Index in, Eigen::Index out, bool bias)
{
    Dense layer;
    layer.has_bias = bias;
    layer.weight.resize(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < out; ++r)
        for (Eigen::Index c = 0; c < in; ++c) layer.weight(r, c) = rng.uniform(-bound, bound);
    if (bias) {
        layer.bias.resize(out);
        for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = rng.uniform(-bound, bound);
    }
    return layer;
}

Eigen::MatrixXd affine(const Dense& layer, const Eigen::MatrixXd& x)
{
    Eigen::MatrixXd y = x * layer.weight.transpose();
    if (layer.has_bias) y.rowwise() += layer.bias.transpose();
    return y;
}

Eigen::MatrixXd leaky(const Eigen::MatrixXd& pre)
{
    return pre.unaryExpr([](double v) { return v > 0.0 ? v : kLeakySlope * v; });
}

Eigen::MatrixXd leaky_backward(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& upstream)
{
    return upstream.binaryExpr(pre, [](double g, double p) { return p > 0.0 ? g : kLeakySlope * g; });
}

// Accumulates dW, db for y = x W^T + b and returns dx.
Eigen::MatrixXd affine_backward(const Dense& layer, const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy, Dense& grad)
{
    grad.weight.noalias() += dy.transpose() * x;
    if (layer.has_bias) grad.bias.noalias() += dy.colwise().sum().transpose();
    return dy * layer.weight;
}

std::uint64_t mix_signs(const Eigen::MatrixXd& m, std::uint64_t h)
{
    std::uint64_t word = 0;
    int bits = 0;
    auto flush = [&] {
        h ^= word;
        h *= 1099511628211ULL;
        h ^= h >> 29;
        word = 0;
        bits = 0;
    };
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        word = (word << 1) | (m.data()[i] > 0.0 ? 1u : 0u);
        if (++bits == 64) flush();
    }
    if (bits) flush();
    return h;
}

void require_finite(const Eigen::MatrixXd& x, const char* what)
{
    if (!x.allFinite()) throw InputError(std::string(what) + ": non-finite input");
}

} // namespace

std::size_t ModelParams::parameter_count() const
{
    std::size_t n = 0;
    for_each_layer([&](std::string_view, const Dense& l) {
        n += static_cast<std::size_t>(l.weight.size() + (l.has_bias ? l.bias.size() : 0));
    });
    return n;
}

Eigen::VectorXd LatentPair::joint() const
{
    Eigen::VectorXd z(global.size() + local.size());
    z << global, local;
    return z;
}

Eigen::MatrixXd Encoded::joint() const
{
    Eigen::MatrixXd z(global.rows(), global.cols() + local.cols());
    z << global, local;
    return z;
}

ModelParams init_model(std::uint64_t seed, std::size_t input_dim, std::size_t global_dim, std::size_t local_dim)
{
    if (input_dim == 0 || global_dim == 0 || local_dim == 0) {
        throw ConfigError("init_model: dimensions must be positive");
    }
    Rng rng(derive_seed(seed, "init"));
    ModelParams p;
    p.input_dim = input_dim;
    p.global_dim = global_dim;
    p.local_dim = local_dim;
    const auto d = static_cast<Eigen::Index>(input_dim);
    const auto zg = static_cast<Eigen::Index>(global_dim);
    const auto zl = static_cast<Eigen::Index>(local_dim);
    p.enc1 = make_dense(rng, d, kHidden1, true);
    p.enc2 = make_dense(rng, kHidden1, kHidden2, true);
    p.head_global = make_dense(rng, kHidden2, zg, false);
    p.head_local = make_dense(rng, kHidden2, zl, true);
    p.dec1 = make_dense(rng, zg + zl, kHidden2, true);
    p.dec2 = make_dense(rng, kHidden2, kHidden1, true);
    p.dec3 = make_dense(rng, kHidden1, d, true);
    return p;
}

ModelParams zeros_like(const ModelParams& params)
{
    ModelParams z = params;
    z.for_each_layer([](std::string_view, Dense& l) {
        l.weight.setZero();
        if (l.has_bias) l.bias.setZero();
    });
    return z;
}

Eigen::VectorXd flatten(const ModelParams& params)
{
    Eigen::VectorXd flat(static_cast<Eigen::Index>(params.parameter_count()));
    Eigen::Index k = 0;
    params.for_each_layer([&](std::string_view, const Dense& l) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) flat(k++) = l.weight(r, c);
        if (l.has_bias)
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) flat(k++) = l.bias(r);
    });
    return flat;
}

void unflatten(ModelParams& params, const Eigen::VectorXd& flat)
{
    if (static_cast<std::size_t>(flat.size()) != params.parameter_count()) {
        throw ShapeError("unflatten: parameter vector has wrong length");
    }
    Eigen::Index k = 0;
    params.for_each_layer([&](std::string_view, Dense& l) {
        for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
            for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = flat(k++);
        if (l.has_bias)
            for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat(k++);
    });
}

double encoder_weight_norm_sq(const ModelParams& params)
{
    return params.enc1.weight.squaredNorm() + params.enc2.weight.squaredNorm() +
           params.head_global.weight.squaredNorm();
}

Encoded encode_batch(const ModelParams& params, const Eigen::MatrixXd& x)
{
    if (static_cast<std::size_t>(x.cols()) != params.input_dim) {
        throw ShapeError("encode: input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(params.input_dim));
    }
    require_finite(x, "encode");
    Encoded e;
    e.trace.input = x;
    e.trace.pre1 = affine(params.enc1, x);
    e.trace.act1 = leaky(e.trace.pre1);
    e.trace.pre2 = affine(params.enc2, e.trace.act1);
    e.trace.act2 = leaky(e.trace.pre2);
    e.global = affine(params.head_global, e.trace.act2);
    e.local = affine(params.head_local, e.trace.act2);
    return e;
}

Eigen::MatrixXd encode_global(const ModelParams& params, const Eigen::MatrixXd& x)
{
    if (static_cast<std::size_t>(x.cols()) != params.input_dim) throw ShapeError("encode: input width mismatch");
    require_finite(x, "encode");
    const Eigen::MatrixXd h1 = leaky(affine(params.enc1, x));
    const Eigen::MatrixXd h2 = leaky(affine(params.enc2, h1));
    return affine(params.head_global, h2);
}

Decoded decode_batch(const ModelParams& params, const Eigen::MatrixXd& z)
{
    if (static_cast<std::size_t>(z.cols()) != params.latent_dim()) {
        throw ShapeError("decode: latent has " + std::to_string(z.cols()) + " columns, model expects " +
                         std::to_string(params.latent_dim()));
    }
    require_finite(z, "decode");
    Decoded d;
    d.trace.input = z;
    d.trace.pre1 = affine(params.dec1, z);
    d.trace.act1 = leaky(d.trace.pre1);
    d.trace.pre2 = affine(params.dec2, d.trace.act1);
    d.trace.act2 = leaky(d.trace.pre2);
    d.output = affine(params.dec3, d.trace.act2);
    return d;
}

LatentPair encode(const ModelParams& params, const Eigen::VectorXd& x)
{
    const Encoded e = encode_batch(params, x.transpose());
    return {e.global.row(0).transpose(), e.local.row(0).transpose()};
}

Eigen::VectorXd decode(const ModelParams& params, const Eigen::VectorXd& z)
{
    return decode_batch(params, z.transpose()).output.row(0).transpose();
}

Eigen::MatrixXd backprop_encoder(const ModelParams& params, const EncoderTrace& trace, const Eigen::MatrixXd& d_global,
                                 const Eigen::MatrixXd& d_local, ModelParams& grad)
{
    Eigen::MatrixXd d_act2 = affine_backward(params.head_global, trace.act2, d_global, grad.head_global);
    d_act2 += affine_backward(params.head_local, trace.act2, d_local, grad.head_local);
    const Eigen::MatrixXd d_pre2 = leaky_backward(trace.pre2, d_act2);
    const Eigen::MatrixXd d_act1 = affine_backward(params.enc2, trace.act1, d_pre2, grad.enc2);
    const Eigen::MatrixXd d_pre1 = leaky_backward(trace.pre1, d_act1);
    return affine_backward(params.enc1, trace.input, d_pre1, grad.enc1);
}

Eigen::MatrixXd backprop_decoder(const ModelParams& params, const DecoderTrace& trace, const Eigen::MatrixXd& d_output,
                                 ModelParams& grad)
{
    const Eigen::MatrixXd d_act2 = affine_backward(params.dec3, trace.act2, d_output, grad.dec3);
    const Eigen::MatrixXd d_pre2 = leaky_backward(trace.pre2, d_act2);
    const Eigen::MatrixXd d_act1 = affine_backward(params.dec2, trace.act1, d_pre2, grad.dec2);
    const Eigen::MatrixXd d_pre1 = leaky_backward(trace.pre1, d_act1);
    return affine_backward(params.dec1, trace.input, d_pre1, grad.dec1);
}

std::uint64_t activation_signature(const EncoderTrace& trace, std::uint64_t seed)
{
    return mix_signs(trace.pre2, mix_signs(trace.pre1, seed ^ 0x51ed270b27a5c5a3ULL));
}

std::uint64_t activation_signature(const DecoderTrace& trace, std::uint64_t seed)
{
    return mix_signs(trace.pre2, mix_signs(trace.pre1, seed ^ 0x2545f4914f6cdd1dULL));
}

} // namespace synforce

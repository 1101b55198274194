#include "synforce/objective.hpp"

#include "synforce/errors.hpp"

#include <algorithm>
#include <numeric>

namespace synforce {

std::string_view to_string(FitMode mode)
{
    return mode == FitMode::dsvdd ? "dsvdd" : "synforce";
}

FitMode fit_mode_from_string(std::string_view name)
{
    if (name == "synforce") return FitMode::synforce;
    if (name == "dsvdd") return FitMode::dsvdd;
    throw ConfigError("unknown fit mode '" + std::string(name) + "'");
}

std::string_view to_string(LossTerm term)
{
    switch (term) {
    case LossTerm::rec: return "rec";
    case LossTerm::svdd: return "svdd";
    case LossTerm::enc: return "enc";
    case LossTerm::diff: return "diff";
    case LossTerm::vol: return "vol";
    case LossTerm::stdp: return "stdp";
    case LossTerm::total: return "total";
    case LossTerm::dsvdd: return "dsvdd";
    }
    return "total";
}

LossTerm loss_term_from_string(std::string_view name)
{
    for (LossTerm t : {LossTerm::rec, LossTerm::svdd, LossTerm::enc, LossTerm::diff, LossTerm::vol, LossTerm::stdp,
                       LossTerm::total, LossTerm::dsvdd}) {
        if (to_string(t) == name) return t;
    }
    throw ConfigError("unknown loss term '" + std::string(name) + "'");
}

namespace {

std::vector<std::size_t> choose_graph_rows(std::size_t n, std::size_t cap, Rng* rng)
{
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    if (n <= cap) return rows;
    if (!rng) throw ConfigError("graph subsampling needs a random stream");
    // Partial Fisher-Yates draw of `cap` rows, kept in ascending order.
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + rng->index(n - i);
        std::swap(rows[i], rows[j]);
    }
    rows.resize(cap);
    std::sort(rows.begin(), rows.end());
    return rows;
}

ObjectiveEval evaluate_dsvdd(const ModelParams& params, const Eigen::VectorXd& centre, const Eigen::MatrixXd& frames,
                             const ObjectiveConfig& cfg, bool with_grad)
{
    ObjectiveEval out;
    const Encoded enc = encode_batch(params, frames);
    out.weight_norm_sq = encoder_weight_norm_sq(params);
    const CentredLoss base = dsvdd_baseline_loss(enc.global, centre, out.weight_norm_sq, cfg.lambda_w);
    out.value = base.value;
    out.parts.svdd = base.value - cfg.lambda_w * out.weight_norm_sq;
    out.parts.total = base.value;
    out.global = enc.global;
    out.signature = activation_signature(enc.trace);
    if (with_grad) {
        out.grad = zeros_like(params);
        backprop_encoder(params, enc.trace, base.grad, Eigen::MatrixXd::Zero(enc.local.rows(), enc.local.cols()), out.grad);
        out.grad.enc1.weight += 2.0 * cfg.lambda_w * params.enc1.weight;
        out.grad.enc2.weight += 2.0 * cfg.lambda_w * params.enc2.weight;
        out.grad.head_global.weight += 2.0 * cfg.lambda_w * params.head_global.weight;
        out.grad_centre = base.grad_centre;
    }
    return out;
}

} // namespace

ObjectiveEval evaluate_objective(const ModelParams& params, const UncertaintyParams& uncertainty,
                                 const Eigen::VectorXd& centre, const Eigen::MatrixXd& frames,
                                 std::size_t window_length, const ObjectiveConfig& cfg, LossTerm term, bool with_grad,
                                 const ObjectiveContext* context, Rng* rng)
{
    if (static_cast<std::size_t>(centre.size()) != params.global_dim) throw ShapeError("centre dimension mismatch");
    if (window_length == 0 || frames.rows() % static_cast<Eigen::Index>(window_length) != 0) {
        throw ShapeError("batch rows are not a multiple of the window length");
    }
    if (cfg.mode == FitMode::dsvdd || term == LossTerm::dsvdd) {
        if (term != LossTerm::dsvdd && term != LossTerm::total && term != LossTerm::svdd) {
            throw ConfigError("baseline mode only defines the svdd/total objective");
        }
        return evaluate_dsvdd(params, centre, frames, cfg, with_grad);
    }

    const LossConfig& lc = cfg.loss;
    const auto n = static_cast<std::size_t>(frames.rows());
    const Eigen::Index zg = static_cast<Eigen::Index>(params.global_dim);
    const Eigen::Index zl = static_cast<Eigen::Index>(params.local_dim);

    ObjectiveEval out;
    const Encoded enc = encode_batch(params, frames);
    const Eigen::MatrixXd z = enc.joint();
    const Decoded dec = decode_batch(params, z);
    const Encoded re = encode_batch(params, dec.output);
    const Eigen::MatrixXd z_hat = re.joint();
    out.global = enc.global;

    if (context) {
        out.context = *context;
    } else {
        out.context.enc_target = z;
        out.context.graph_rows = choose_graph_rows(n, cfg.knn_cap, rng);
    }
    Eigen::MatrixXd z_graph(static_cast<Eigen::Index>(out.context.graph_rows.size()), z.cols());
    for (std::size_t r = 0; r < out.context.graph_rows.size(); ++r) {
        z_graph.row(static_cast<Eigen::Index>(r)) = z.row(static_cast<Eigen::Index>(out.context.graph_rows[r]));
    }
    NeighborGraph graph = context ? reweight_graph(context->topology, z_graph)
                                  : build_knn_graph(z_graph, lc.knn_k, lc.sigma_d);
    if (!context) {
        out.context.topology = graph;
    }

    const MatrixLoss rec = loss_rec(dec.output, frames);
    const CentredLoss svdd = loss_svdd(enc.global, centre);
    const MatrixLoss encl = loss_enc(z_hat, out.context.enc_target);
    const MatrixLoss diff = loss_diff_grad(graph, z_graph);
    std::size_t argmax = 0;
    const CentredLoss vol = loss_vol(z, centre, lc.sigma_v, &argmax);
    MatrixLoss stdp;
    if (window_length > lc.max_lag + 1) {
        stdp = loss_stdp_grad(enc.local, window_length, lc);
    } else {
        out.stdp_skipped = true;
        stdp.value = 0.0;
        stdp.grad = Eigen::MatrixXd::Zero(enc.local.rows(), zl);
    }

    out.parts.rec = rec.value;
    out.parts.svdd = svdd.value;
    out.parts.enc = encl.value;
    out.parts.diff = diff.value;
    out.parts.vol = vol.value;
    out.parts.stdp = stdp.value;
    const TotalLoss total = total_loss(out.parts, uncertainty, lc);
    out.parts.total = total.value;

    std::array<double, 6> coef{};
    switch (term) {
    case LossTerm::rec: coef[0] = 1.0; out.value = rec.value; break;
    case LossTerm::svdd: coef[1] = 1.0; out.value = svdd.value; break;
    case LossTerm::enc: coef[2] = 1.0; out.value = encl.value; break;
    case LossTerm::diff: coef[3] = 1.0; out.value = diff.value; break;
    case LossTerm::vol: coef[4] = 1.0; out.value = vol.value; break;
    case LossTerm::stdp: coef[5] = 1.0; out.value = stdp.value; break;
    case LossTerm::total: coef = total.d_components; out.value = total.value; break;
    case LossTerm::dsvdd: break;
    }

    std::uint64_t sig = activation_signature(enc.trace);
    sig = activation_signature(dec.trace, sig);
    sig = activation_signature(re.trace, sig);
    out.signature = sig ^ (static_cast<std::uint64_t>(argmax) * 0x9e3779b97f4a7c15ULL);

    if (!with_grad) return out;

    out.grad = zeros_like(params);
    // Gradient on the first-pass joint latent z.
    Eigen::MatrixXd d_z = Eigen::MatrixXd::Zero(z.rows(), z.cols());
    d_z.leftCols(zg) += coef[1] * svdd.grad;
    for (std::size_t r = 0; r < out.context.graph_rows.size(); ++r) {
        d_z.row(static_cast<Eigen::Index>(out.context.graph_rows[r])) += coef[3] * diff.grad.row(static_cast<Eigen::Index>(r));
    }
    d_z += coef[4] * vol.grad;
    d_z.rightCols(zl) += coef[5] * stdp.grad;

    // Consistency term flows through the re-encoding into x_hat.
    const Eigen::MatrixXd d_zhat = coef[2] * encl.grad;
    Eigen::MatrixXd d_xhat = backprop_encoder(params, re.trace, d_zhat.leftCols(zg), d_zhat.rightCols(zl), out.grad);
    d_xhat += coef[0] * rec.grad;
    d_z += backprop_decoder(params, dec.trace, d_xhat, out.grad);
    backprop_encoder(params, enc.trace, d_z.leftCols(zg), d_z.rightCols(zl), out.grad);

    out.grad_centre = coef[1] * svdd.grad_centre + coef[4] * vol.grad_centre;
    if (term == LossTerm::total) {
        out.grad_uncertainty = {total.d_s_r, total.d_s_s, total.d_s_e};
    } else {
        out.grad_uncertainty = {0.0, 0.0, 0.0};
    }
    return out;
}

} // namespace synforce

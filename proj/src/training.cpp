#include "synforce/training.hpp"

#include "synforce/errors.hpp"

#include <cmath>
#include <numeric>

namespace synforce {

namespace {

constexpr std::size_t kCentreChunkWindows = 256;

Eigen::VectorXd pack(const ModelParams& p, const UncertaintyParams& u, FitMode mode)
{
    const Eigen::VectorXd w = flatten(p);
    if (mode == FitMode::dsvdd) return w;
    Eigen::VectorXd out(w.size() + 3);
    out << w, u.s_r, u.s_s, u.s_e;
    return out;
}

void unpack(const Eigen::VectorXd& flat, ModelParams& p, UncertaintyParams& u, FitMode mode)
{
    const auto nw = static_cast<Eigen::Index>(p.parameter_count());
    unflatten(p, flat.head(nw));
    if (mode == FitMode::synforce) {
        u.s_r = flat(nw);
        u.s_s = flat(nw + 1);
        u.s_e = flat(nw + 2);
    }
}

// Names the first non-finite loss component, or returns empty.
std::string nonfinite_term(const LossBreakdown& b)
{
    const std::pair<const char*, double> parts[] = {{"L_rec", b.rec},   {"L_svdd", b.svdd}, {"L_enc", b.enc},
                                                    {"L_diff", b.diff}, {"L_vol", b.vol},   {"L_stdp", b.stdp},
                                                    {"total", b.total}};
    for (const auto& [name, value] : parts) {
        if (!std::isfinite(value)) return name;
    }
    return {};
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b, double w)
{
    acc.rec += w * b.rec;
    acc.svdd += w * b.svdd;
    acc.enc += w * b.enc;
    acc.diff += w * b.diff;
    acc.vol += w * b.vol;
    acc.stdp += w * b.stdp;
    acc.total += w * b.total;
}

} // namespace

void optimizer_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, OptimizerState& state, double lr)
{
    if (params.size() != grads.size()) throw ShapeError("optimizer_step: gradient size mismatch");
    if (!grads.allFinite()) throw InputError("optimizer_step: non-finite gradient");
    if (state.m.size() != params.size()) {
        state.m = Eigen::VectorXd::Zero(params.size());
        state.v = Eigen::VectorXd::Zero(params.size());
        state.step = 0;
    }
    ++state.step;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads.cwiseProduct(grads);
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

Eigen::VectorXd init_centre(const ModelParams& params, const WindowBatch& windows)
{
    if (windows.empty()) throw ConfigError("init_centre: no training windows");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(params.global_dim));
    const std::size_t rows_per_window = windows.length;
    for (std::size_t w0 = 0; w0 < windows.size(); w0 += kCentreChunkWindows) {
        const std::size_t count = std::min(kCentreChunkWindows, windows.size() - w0);
        const Eigen::MatrixXd zg = encode_global(
            params, windows.frames.middleRows(static_cast<Eigen::Index>(w0 * rows_per_window),
                                              static_cast<Eigen::Index>(count * rows_per_window)));
        sum += zg.colwise().sum().transpose();
    }
    return sum / static_cast<double>(windows.frames.rows());
}

Eigen::VectorXd update_centre(const Eigen::VectorXd& centre, const Eigen::VectorXd& epoch_mean)
{
    if (centre.size() != epoch_mean.size()) throw ShapeError("update_centre: dimension mismatch");
    return 0.99 * centre + 0.01 * epoch_mean;
}

TrainedModel fit(const WindowBatch& windows, const TrainConfig& config, const EpochCallback& on_epoch)
{
    if (windows.empty()) throw ConfigError("fit: no normal training windows");
    if (config.epochs == 0 || config.batch == 0) throw ConfigError("fit: epochs and batch must be positive");
    if (!(config.learning_rate > 0.0)) throw ConfigError("fit: learning rate must be positive");
    if (windows.length != config.window) throw ConfigError("fit: window length differs from the configuration");
    for (std::size_t i = 0; i < windows.labels.size(); ++i) {
        if (windows.labels[i] != 0) throw ConfigError("fit: training windows must contain only normal frames");
    }

    const ObjectiveConfig objective = config.objective();
    TrainedModel model;
    model.params = init_model(config.seed, windows.dim, config.global_dim, config.local_dim);
    model.centre = init_centre(model.params, windows);
    model.centre_init = model.centre;

    Rng shuffle_rng(derive_seed(config.seed, "shuffle"));
    Rng graph_rng(derive_seed(config.seed, "knn-subsample"));
    OptimizerState optimizer;
    Eigen::VectorXd flat = pack(model.params, model.uncertainty, config.mode);

    std::vector<std::size_t> order(windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto L = static_cast<Eigen::Index>(windows.length);
    const auto d = static_cast<Eigen::Index>(windows.dim);

    auto last_good = std::make_shared<TrainedModel>(model);
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        EpochRecord record;
        record.epoch = epoch;
        double seen = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += config.batch) {
            const std::size_t count = std::min(config.batch, order.size() - b0);
            Eigen::MatrixXd batch(static_cast<Eigen::Index>(count) * L, d);
            for (std::size_t i = 0; i < count; ++i) {
                batch.middleRows(static_cast<Eigen::Index>(i) * L, L) =
                    windows.frames.middleRows(static_cast<Eigen::Index>(order[b0 + i]) * L, L);
            }
            const ObjectiveEval eval = evaluate_objective(model.params, model.uncertainty, model.centre, batch,
                                                          windows.length, objective, LossTerm::total, true, nullptr,
                                                          &graph_rng);
            const std::string bad = nonfinite_term(eval.parts);
            if (!bad.empty()) {
                throw TrainingDiverged("training aborted at epoch " + std::to_string(epoch) + ": " + bad +
                                           " is not finite",
                                       last_good);
            }
            if (eval.parts.total > config.divergence_limit) {
                throw TrainingDiverged("training aborted at epoch " + std::to_string(epoch) + ": total loss " +
                                           std::to_string(eval.parts.total) + " exceeds the divergence limit",
                                       last_good);
            }
            accumulate(record.mean, eval.parts, static_cast<double>(count));
            seen += static_cast<double>(count);

            const Eigen::VectorXd grads = pack(eval.grad, eval.grad_uncertainty, config.mode);
            if (!grads.allFinite()) {
                throw TrainingDiverged("training aborted at epoch " + std::to_string(epoch) + ": non-finite gradient",
                                       last_good);
            }
            optimizer_step(flat, grads, optimizer, config.learning_rate);
            unpack(flat, model.params, model.uncertainty, config.mode);
        }
        record.mean.rec /= seen;
        record.mean.svdd /= seen;
        record.mean.enc /= seen;
        record.mean.diff /= seen;
        record.mean.vol /= seen;
        record.mean.stdp /= seen;
        record.mean.total /= seen;
        if (config.mode == FitMode::dsvdd) {
            record.weight_penalty = config.lambda_w * encoder_weight_norm_sq(model.params);
        }

        record.centre_before = model.centre;
        record.epoch_mean = init_centre(model.params, windows);
        model.centre = update_centre(model.centre, record.epoch_mean);
        record.centre_after = model.centre;
        record.uncertainty = model.uncertainty;
        model.history.push_back(record);
        if (on_epoch) on_epoch(record, model);
        *last_good = model;
    }
    return model;
}

} // namespace synforce

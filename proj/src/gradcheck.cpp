#include "synforce/gradcheck.hpp"

#include "synforce/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace synforce {

GradCheckReport check_gradients(const FlatObjective& f, const Eigen::VectorXd& analytic, const Eigen::VectorXd& at,
                                double rtol, const GradCheckOptions& opts)
{
    if (analytic.size() != at.size()) throw ShapeError("check_gradients: gradient and point sizes differ");
    GradCheckReport report;
    report.rtol = rtol;

    std::uint64_t base_sig = 0;
    f(at, &base_sig);

    std::vector<std::size_t> order(static_cast<std::size_t>(at.size()));
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(opts.seed, "gradcheck"));
    rng.shuffle(order);

    Eigen::VectorXd w = at;
    for (std::size_t idx : order) {
        if (report.checked >= opts.max_coordinates) break;
        const auto i = static_cast<Eigen::Index>(idx);
        const double orig = w(i);
        std::uint64_t sig_plus = 0;
        std::uint64_t sig_minus = 0;
        w(i) = orig + opts.step;
        const double f_plus = f(w, &sig_plus);
        w(i) = orig - opts.step;
        const double f_minus = f(w, &sig_minus);
        w(i) = orig;
        if (sig_plus != base_sig || sig_minus != base_sig) {
            ++report.resampled;
            continue;
        }
        const double numeric = (f_plus - f_minus) / (2.0 * opts.step);
        const double a = analytic(i);
        const double abs_err = std::abs(a - numeric);
        const double denom = std::max({std::abs(a), std::abs(numeric), opts.abs_floor});
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
        ++report.checked;
    }
    report.passed = report.checked > 0 && report.max_rel_error <= rtol;
    return report;
}

namespace {

// Layout: model weights, s_r, s_s, s_e, centre.
Eigen::VectorXd pack(const ModelParams& p, const UncertaintyParams& u, const Eigen::VectorXd& c)
{
    const Eigen::VectorXd w = flatten(p);
    Eigen::VectorXd out(w.size() + 3 + c.size());
    out << w, u.s_r, u.s_s, u.s_e, c;
    return out;
}

void unpack(const Eigen::VectorXd& flat, ModelParams& p, UncertaintyParams& u, Eigen::VectorXd& c)
{
    const auto nw = static_cast<Eigen::Index>(p.parameter_count());
    unflatten(p, flat.head(nw));
    u.s_r = flat(nw);
    u.s_s = flat(nw + 1);
    u.s_e = flat(nw + 2);
    c = flat.segment(nw + 3, c.size());
}

} // namespace

GradCheckReport check_gradients(LossTerm term, const ModelParams& params, const UncertaintyParams& uncertainty,
                                const Eigen::VectorXd& centre, const WindowBatch& batch, const ObjectiveConfig& cfg,
                                double rtol, const GradCheckOptions& opts)
{
    if (batch.empty()) throw ConfigError("check_gradients: empty batch");
    Rng rng(derive_seed(opts.seed, "gradcheck-graph"));
    const ObjectiveEval base =
        evaluate_objective(params, uncertainty, centre, batch.frames, batch.length, cfg, term, true, nullptr, &rng);
    const ObjectiveContext context = base.context;

    const Eigen::VectorXd at = pack(params, uncertainty, centre);
    const Eigen::VectorXd analytic = pack(base.grad, base.grad_uncertainty, base.grad_centre);

    ModelParams scratch = params;
    UncertaintyParams u = uncertainty;
    Eigen::VectorXd c = centre;
    FlatObjective f = [&](const Eigen::VectorXd& flat, std::uint64_t* sig) {
        unpack(flat, scratch, u, c);
        const ObjectiveEval e =
            evaluate_objective(scratch, u, c, batch.frames, batch.length, cfg, term, false, &context, nullptr);
        if (sig) *sig = e.signature;
        return e.value;
    };
    GradCheckReport report = check_gradients(f, analytic, at, rtol, opts);
    report.loss = std::string(to_string(term));
    return report;
}

} // namespace synforce

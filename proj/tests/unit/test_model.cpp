#include "support.hpp"

#include "synforce/gradcheck.hpp"
#include "synforce/model.hpp"
#include "synforce/objective.hpp"

#include <doctest.h>

using namespace synforce;

namespace {

WindowBatch random_batch(Rng& rng, std::size_t windows, std::size_t length, std::size_t dim)
{
    WindowBatch b;
    b.length = length;
    b.dim = dim;
    for (std::size_t w = 0; w < windows; ++w) b.starts.push_back(w * length);
    b.frames = testing::random_matrix(rng, static_cast<Eigen::Index>(windows * length), static_cast<Eigen::Index>(dim));
    b.labels.assign(windows * length, 0);
    return b;
}

} // namespace

TEST_CASE("init_model: shapes, determinism and init range")
{
    const ModelParams a = init_model(11, 20);
    CHECK(a.enc1.weight.rows() == 64);
    CHECK(a.enc1.weight.cols() == 20);
    CHECK(a.enc2.weight.rows() == 32);
    CHECK(a.head_global.weight.rows() == 2);
    CHECK_FALSE(a.head_global.has_bias);
    CHECK(a.head_global.bias.size() == 0);
    CHECK(a.head_local.weight.rows() == 4);
    CHECK(a.dec1.weight.cols() == 6);
    CHECK(a.dec3.weight.rows() == 20);
    const std::size_t expect = 64 * 20 + 64 + 32 * 64 + 32 + 2 * 32 + 4 * 32 + 4 + 32 * 6 + 32 + 64 * 32 + 64 + 20 * 64 + 20;
    CHECK(a.parameter_count() == expect);
    CHECK(static_cast<std::size_t>(flatten(a).size()) == expect);
    CHECK(flatten(init_model(11, 20)) == flatten(a));
    CHECK(flatten(init_model(12, 20)) != flatten(a));
    CHECK(a.enc1.weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(20.0));
    CHECK(a.enc2.weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(64.0));
}

TEST_CASE("flatten/unflatten round trip and zeros_like")
{
    ModelParams p = init_model(3, 9);
    const Eigen::VectorXd flat = flatten(p);
    ModelParams q = zeros_like(p);
    CHECK(flatten(q).cwiseAbs().maxCoeff() == 0.0);
    unflatten(q, flat);
    CHECK(flatten(q) == flat);
    CHECK(encode_batch(q, Eigen::MatrixXd::Ones(2, 9)).joint() == encode_batch(p, Eigen::MatrixXd::Ones(2, 9)).joint());
    CHECK_THROWS(unflatten(q, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("encode/decode: zero weights and single-unit example")
{
    ModelParams p = zeros_like(init_model(1, 3));
    const Encoded e = encode_batch(p, Eigen::MatrixXd::Ones(4, 3));
    CHECK(e.global.cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.local.cwiseAbs().maxCoeff() == 0.0);
    p.dec3.bias << 1.0, -2.0, 0.5;
    const Eigen::VectorXd out = decode(p, Eigen::VectorXd::Zero(6));
    CHECK(out(0) == 1.0);
    CHECK(out(1) == -2.0);
    CHECK(out(2) == 0.5);

    // Route x0 through one unit per layer into z_g0: positive x passes, negative x is scaled twice.
    ModelParams q = zeros_like(init_model(1, 3));
    q.enc1.weight(0, 0) = 1.0;
    q.enc2.weight(0, 0) = 1.0;
    q.head_global.weight(0, 0) = 1.0;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(3);
    x(0) = 2.0;
    CHECK(encode(q, x).global(0) == 2.0);
    x(0) = -2.0;
    CHECK(encode(q, x).global(0) == doctest::Approx(-2.0 * kLeakySlope * kLeakySlope).epsilon(1e-15));
}

TEST_CASE("batched and per-frame forward passes agree")
{
    Rng rng(5);
    const ModelParams p = init_model(7, 12);
    const Eigen::MatrixXd x = testing::random_matrix(rng, 30, 12);
    const Encoded e = encode_batch(p, x);
    const Decoded d = decode_batch(p, e.joint());
    CHECK((encode_global(p, x) - e.global).cwiseAbs().maxCoeff() == 0.0);
    for (Eigen::Index i = 0; i < 30; ++i) {
        const LatentPair z = encode(p, x.row(i).transpose());
        CHECK((z.global.transpose() - e.global.row(i)).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((z.local.transpose() - e.local.row(i)).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK(z.joint().size() == 6);
        const Eigen::VectorXd y = decode(p, z.joint());
        CHECK((y.transpose() - d.output.row(i)).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("backprop matches the linear map in a fixed activation region")
{
    // With every pre-activation positive the encoder is affine; its VJP is W^T products.
    ModelParams p = init_model(2, 4);
    p.enc1.weight = p.enc1.weight.cwiseAbs();
    p.enc1.bias.setConstant(0.1);
    p.enc2.weight = p.enc2.weight.cwiseAbs();
    p.enc2.bias.setConstant(0.1);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 4);
    const Encoded e = encode_batch(p, x);
    ModelParams g = zeros_like(p);
    Eigen::MatrixXd dg = Eigen::MatrixXd::Zero(1, 2);
    dg(0, 0) = 1.0;
    const Eigen::MatrixXd dx = backprop_encoder(p, e.trace, dg, Eigen::MatrixXd::Zero(1, 4), g);
    const Eigen::MatrixXd jac = p.head_global.weight * p.enc2.weight * p.enc1.weight;
    CHECK((dx.row(0) - jac.row(0)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("check_gradients on closed-form objectives")
{
    Rng rng(9);
    const Eigen::VectorXd at = Eigen::VectorXd::Random(50);
    const Eigen::VectorXd a = Eigen::VectorXd::Random(50);
    FlatObjective quad = [&](const Eigen::VectorXd& w, std::uint64_t*) { return (w - a).squaredNorm(); };
    const GradCheckReport ok = check_gradients(quad, 2.0 * (at - a), at, 1e-6);
    CHECK(ok.passed);
    CHECK(ok.checked == 50);
    CHECK(ok.max_rel_error <= 1e-6);

    FlatObjective constant = [](const Eigen::VectorXd&, std::uint64_t*) { return 3.0; };
    const GradCheckReport c = check_gradients(constant, Eigen::VectorXd::Zero(50), at, 1e-6);
    CHECK(c.passed);
    CHECK(c.max_abs_error == 0.0);

    // A wrong analytic gradient must be caught.
    const GradCheckReport bad = check_gradients(quad, 2.1 * (at - a), at, 1e-3);
    CHECK_FALSE(bad.passed);
}

TEST_CASE("analytic gradients of each loss term pass a spot check")
{
    Rng rng(13);
    const WindowBatch batch = random_batch(rng, 3, 20, 10);
    const ModelParams p = init_model(21, 10);
    UncertaintyParams u{0.1, -0.2, 0.05};
    Eigen::VectorXd c(2);
    c << 0.05, -0.1;
    ObjectiveConfig cfg;
    cfg.loss.max_lag = 4;
    GradCheckOptions opts;
    opts.max_coordinates = 60;
    for (LossTerm term : {LossTerm::rec, LossTerm::svdd, LossTerm::enc, LossTerm::diff, LossTerm::vol, LossTerm::stdp,
                          LossTerm::total}) {
        CAPTURE(to_string(term));
        const GradCheckReport r = check_gradients(term, p, u, c, batch, cfg, 1e-3, opts);
        CHECK(r.passed);
        CHECK(r.checked > 0);
    }
    ObjectiveConfig base = cfg;
    base.mode = FitMode::dsvdd;
    base.lambda_w = 1e-2;
    CHECK(check_gradients(LossTerm::dsvdd, p, u, c, batch, base, 1e-3, opts).passed);
}

TEST_CASE("evaluate_objective: term selection and name round trip")
{
    for (LossTerm term : {LossTerm::rec, LossTerm::svdd, LossTerm::enc, LossTerm::diff, LossTerm::vol, LossTerm::stdp,
                          LossTerm::total, LossTerm::dsvdd}) {
        CHECK(loss_term_from_string(to_string(term)) == term);
    }
    CHECK_THROWS(loss_term_from_string("nope"));
    CHECK(fit_mode_from_string("dsvdd") == FitMode::dsvdd);

    Rng rng(17);
    const WindowBatch batch = random_batch(rng, 2, 20, 6);
    const ModelParams p = init_model(1, 6);
    const Eigen::VectorXd c = Eigen::VectorXd::Zero(2);
    ObjectiveConfig cfg;
    const ObjectiveEval rec = evaluate_objective(p, {}, c, batch.frames, 20, cfg, LossTerm::rec, false);
    CHECK(rec.value == rec.parts.rec);
    const ObjectiveEval tot = evaluate_objective(p, {}, c, batch.frames, 20, cfg, LossTerm::total, false);
    CHECK(tot.value == doctest::Approx(total_loss(tot.parts, {}, cfg.loss).value).epsilon(1e-14));
}

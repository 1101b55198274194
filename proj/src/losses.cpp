#include "synforce/losses.hpp"

#include "synforce/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace synforce {

namespace {

void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
    }
}

void require_rows(const Eigen::MatrixXd& m, const char* what)
{
    if (m.rows() == 0) throw ShapeError(std::string(what) + ": empty batch");
}

double gaussian_affinity(double dist_sq, double sigma)
{
    return std::exp(-dist_sq / (2.0 * sigma * sigma));
}

void fill_affinities(NeighborGraph& g, const Eigen::MatrixXd& latents)
{
    g.affinity.assign(g.points * g.k, 0.0);
    g.distance.assign(g.points * g.k, 0.0);
    g.density.assign(g.points, 0.0);
    for (std::size_t i = 0; i < g.points; ++i) {
        double rho = 0.0;
        for (std::size_t s = 0; s < g.k; ++s) {
            const std::size_t j = g.neighbor(i, s);
            const double d2 = (latents.row(static_cast<Eigen::Index>(i)) - latents.row(static_cast<Eigen::Index>(j))).squaredNorm();
            g.distance[i * g.k + s] = std::sqrt(d2);
            const double a = gaussian_affinity(d2, g.sigma_d);
            g.affinity[i * g.k + s] = a;
            rho += a;
        }
        g.density[i] = rho;
    }
}

} // namespace

MatrixLoss loss_rec(const Eigen::MatrixXd& x_hat, const Eigen::MatrixXd& x)
{
    require_same_shape(x_hat, x, "loss_rec");
    require_rows(x, "loss_rec");
    const double n = static_cast<double>(x.rows());
    const Eigen::MatrixXd diff = x_hat - x;
    return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

CentredLoss loss_svdd(const Eigen::MatrixXd& z_global, const Eigen::VectorXd& centre)
{
    if (z_global.cols() != centre.size()) throw ShapeError("loss_svdd: centre dimension mismatch");
    require_rows(z_global, "loss_svdd");
    const double n = static_cast<double>(z_global.rows());
    CentredLoss out;
    out.grad = Eigen::MatrixXd::Zero(z_global.rows(), z_global.cols());
    double sum = 0.0;
    for (Eigen::Index i = 0; i < z_global.rows(); ++i) {
        const Eigen::RowVectorXd delta = z_global.row(i) - centre.transpose();
        const double norm = delta.norm();
        sum += norm;
        if (norm > 0.0) out.grad.row(i) = delta / (norm * n);
    }
    out.value = sum / n;
    out.grad_centre = -out.grad.colwise().sum().transpose();
    return out;
}

MatrixLoss loss_enc(const Eigen::MatrixXd& z_hat, const Eigen::MatrixXd& z_target)
{
    require_same_shape(z_hat, z_target, "loss_enc");
    require_rows(z_hat, "loss_enc");
    const double n = static_cast<double>(z_hat.rows());
    const Eigen::MatrixXd diff = z_hat - z_target;
    return {diff.squaredNorm() / n, (2.0 / n) * diff};
}

NeighborGraph build_knn_graph(const Eigen::MatrixXd& latents, std::size_t k, std::optional<double> sigma_d)
{
    const auto m = static_cast<std::size_t>(latents.rows());
    if (k == 0 || m <= k) {
        throw ConfigError("build_knn_graph: need more points (" + std::to_string(m) + ") than neighbours (" +
                          std::to_string(k) + ")");
    }
    NeighborGraph g;
    g.points = m;
    g.k = k;
    g.neighbors.resize(m * k);
    const auto dim = static_cast<std::size_t>(latents.cols());
    std::vector<double> rows(m * dim);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < dim; ++c) rows[i * dim + c] = latents(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
    // Running k smallest (distance, index) pairs; ties go to the lower index.
    std::vector<std::pair<double, std::size_t>> best(k);
    std::vector<double> selected;
    selected.reserve(m * k);
    for (std::size_t i = 0; i < m; ++i) {
        const double* a = rows.data() + i * dim;
        std::size_t filled = 0;
        for (std::size_t j = 0; j < m; ++j) {
            if (j == i) continue;
            const double* b = rows.data() + j * dim;
            double d2 = 0.0;
            for (std::size_t c = 0; c < dim; ++c) {
                const double t = a[c] - b[c];
                d2 += t * t;
            }
            const std::pair<double, std::size_t> cand{d2, j};
            if (filled == k && !(cand < best[k - 1])) continue;
            std::size_t pos = filled < k ? filled++ : k - 1;
            while (pos > 0 && cand < best[pos - 1]) {
                best[pos] = best[pos - 1];
                --pos;
            }
            best[pos] = cand;
        }
        for (std::size_t s = 0; s < k; ++s) {
            g.neighbors[i * k + s] = best[s].second;
            selected.push_back(std::sqrt(best[s].first));
        }
    }
    if (sigma_d) {
        if (!(*sigma_d > 0.0)) throw ConfigError("sigma_d must be positive");
        g.sigma_d = *sigma_d;
    } else {
        const std::size_t mid = selected.size() / 2;
        std::nth_element(selected.begin(), selected.begin() + static_cast<std::ptrdiff_t>(mid), selected.end());
        double med = selected[mid];
        if (selected.size() % 2 == 0) {
            med = 0.5 * (med + *std::max_element(selected.begin(), selected.begin() + static_cast<std::ptrdiff_t>(mid)));
        }
        g.sigma_d = std::max(med, 1e-6);
    }
    fill_affinities(g, latents);
    return g;
}

NeighborGraph reweight_graph(const NeighborGraph& topology, const Eigen::MatrixXd& latents)
{
    if (static_cast<std::size_t>(latents.rows()) != topology.points) throw ShapeError("reweight_graph: point count mismatch");
    NeighborGraph g;
    g.points = topology.points;
    g.k = topology.k;
    g.sigma_d = topology.sigma_d;
    g.neighbors = topology.neighbors;
    fill_affinities(g, latents);
    return g;
}

double loss_diff(const NeighborGraph& graph)
{
    double sum = 0.0;
    for (std::size_t i = 0; i < graph.points; ++i) {
        double flow = 0.0;
        for (std::size_t s = 0; s < graph.k; ++s) {
            flow += graph.weight(i, s) * (graph.density[graph.neighbor(i, s)] - graph.density[i]);
        }
        sum += flow * flow;
    }
    return sum / static_cast<double>(graph.points);
}

MatrixLoss loss_diff_grad(const NeighborGraph& graph, const Eigen::MatrixXd& latents)
{
    const std::size_t m = graph.points;
    const std::size_t k = graph.k;
    if (static_cast<std::size_t>(latents.rows()) != m) throw ShapeError("loss_diff_grad: point count mismatch");

    // g_i = sum_j A_ij (rho_j - rho_i), L = (1/m) sum g_i^2, rho_i = sum_j A_ij.
    std::vector<double> flow(m, 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        double f = 0.0;
        for (std::size_t s = 0; s < k; ++s) f += graph.weight(i, s) * (graph.density[graph.neighbor(i, s)] - graph.density[i]);
        flow[i] = f;
        sum += f * f;
    }
    const double inv_m = 1.0 / static_cast<double>(m);

    // dL/drho_q with the affinities held fixed, G_i = 2 g_i / m.
    std::vector<double> d_rho(m, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const double gi = 2.0 * flow[i] * inv_m;
        d_rho[i] -= gi * graph.density[i];
        for (std::size_t s = 0; s < k; ++s) d_rho[graph.neighbor(i, s)] += gi * graph.weight(i, s);
    }

    MatrixLoss out;
    out.value = sum * inv_m;
    out.grad = Eigen::MatrixXd::Zero(latents.rows(), latents.cols());
    const double inv_sigma_sq = 1.0 / (graph.sigma_d * graph.sigma_d);
    for (std::size_t i = 0; i < m; ++i) {
        const double gi = 2.0 * flow[i] * inv_m;
        for (std::size_t s = 0; s < k; ++s) {
            const std::size_t j = graph.neighbor(i, s);
            const double a = graph.weight(i, s);
            // Direct term of g_i plus the path through rho_i = sum_j A_ij.
            const double d_a = gi * (graph.density[j] - graph.density[i]) + d_rho[i];
            const Eigen::RowVectorXd delta = latents.row(static_cast<Eigen::Index>(i)) - latents.row(static_cast<Eigen::Index>(j));
            const Eigen::RowVectorXd d_zi = d_a * a * (-inv_sigma_sq) * delta;
            out.grad.row(static_cast<Eigen::Index>(i)) += d_zi;
            out.grad.row(static_cast<Eigen::Index>(j)) -= d_zi;
        }
    }
    return out;
}

double hypersphere_log_volume(std::size_t p, double radius, bool* clamped)
{
    if (p == 0) throw ConfigError("hypersphere_log_volume: dimension must be >= 1");
    bool was_clamped = false;
    if (!(radius > 0.0)) {
        radius = 1e-6;
        was_clamped = true;
    }
    if (clamped) *clamped = was_clamped;
    const double half = 0.5 * static_cast<double>(p);
    return half * std::log(std::numbers::pi) - std::lgamma(half + 1.0) + static_cast<double>(p) * std::log(radius);
}

CentredLoss loss_vol(const Eigen::MatrixXd& latents, const Eigen::VectorXd& centre, double sigma_v, std::size_t* argmax)
{
    require_rows(latents, "loss_vol");
    if (centre.size() > latents.cols()) throw ShapeError("loss_vol: centre longer than latent dimension");
    const Eigen::Index m = latents.rows();
    const Eigen::Index p = latents.cols();
    Eigen::RowVectorXd ext = Eigen::RowVectorXd::Zero(p);
    ext.head(centre.size()) = centre.transpose();

    const double inv_sv2 = 1.0 / (sigma_v * sigma_v);
    Eigen::VectorXd dist(m), w(m);
    Eigen::MatrixXd delta = latents.rowwise() - ext;
    double numerator = 0.0;
    double denom = 0.0;
    double radius = -1.0;
    Eigen::Index arg = 0;
    for (Eigen::Index i = 0; i < m; ++i) {
        dist(i) = delta.row(i).norm();
        w(i) = std::exp(-0.5 * dist(i) * dist(i) * inv_sv2);
        numerator += dist(i) * dist(i) * dist(i) * w(i);
        denom += w(i);
        if (dist(i) > radius) {
            radius = dist(i);
            arg = i;
        }
    }
    if (argmax) *argmax = static_cast<std::size_t>(arg);

    CentredLoss out;
    out.grad = Eigen::MatrixXd::Zero(m, p);
    out.grad_centre = Eigen::VectorXd::Zero(centre.size());
    if (!(radius > 0.0) || numerator <= 0.0) return out;

    const double log_value = std::log(numerator) - std::log(denom) - hypersphere_log_volume(static_cast<std::size_t>(p), radius);
    const double value = std::exp(log_value);
    out.value = value;

    Eigen::VectorXd d_dist(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double d = dist(i);
        const double w_prime = -d * inv_sv2 * w(i);
        d_dist(i) = value * ((3.0 * d * d * w(i) + d * d * d * w_prime) / numerator - w_prime / denom);
    }
    d_dist(arg) -= value * static_cast<double>(p) / radius;
    for (Eigen::Index i = 0; i < m; ++i) {
        if (dist(i) > 0.0) out.grad.row(i) = (d_dist(i) / dist(i)) * delta.row(i);
    }
    out.grad_centre = -out.grad.leftCols(centre.size()).colwise().sum().transpose();
    return out;
}

namespace {

std::size_t stdp_steps(std::size_t window_length, const LossConfig& cfg)
{
    if (window_length <= cfg.max_lag + 1) {
        throw ConfigError("stdp: window length " + std::to_string(window_length) + " must exceed max_lag + 1 = " +
                          std::to_string(cfg.max_lag + 1));
    }
    return window_length - cfg.max_lag - 1;
}

} // namespace

StdpField stdp_force_field(const Eigen::MatrixXd& z_local, std::size_t window_length, const LossConfig& cfg)
{
    const std::size_t steps = stdp_steps(window_length, cfg);
    if (z_local.rows() % static_cast<Eigen::Index>(window_length) != 0) {
        throw ShapeError("stdp: row count is not a multiple of the window length");
    }
    const std::size_t windows = static_cast<std::size_t>(z_local.rows()) / window_length;
    const Eigen::Index dim = z_local.cols();
    StdpField field;
    field.windows = windows;
    field.steps = steps;
    field.forces = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(windows * steps), dim);
    field.motions = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(windows * steps), dim);
    const double eps_sq = cfg.epsilon * cfg.epsilon;
    const double inv_two_sf2 = 1.0 / (2.0 * cfg.sigma_force * cfg.sigma_force);
    for (std::size_t b = 0; b < windows; ++b) {
        const auto base = static_cast<Eigen::Index>(b * window_length);
        for (std::size_t s = 0; s < steps; ++s) {
            // 0-based time index t = max_lag + s.
            const auto t = static_cast<Eigen::Index>(cfg.max_lag + s);
            const auto row = static_cast<Eigen::Index>(b * steps + s);
            field.motions.row(row) = z_local.row(base + t + 1) - z_local.row(base + t);
            Eigen::RowVectorXd force = Eigen::RowVectorXd::Zero(dim);
            for (std::size_t lag = 1; lag <= cfg.max_lag; ++lag) {
                const Eigen::RowVectorXd delta = z_local.row(base + t) - z_local.row(base + t - static_cast<Eigen::Index>(lag));
                const double sq = delta.squaredNorm();
                const double gate = std::exp(-sq * inv_two_sf2);
                const double w = cfg.a_plus * std::exp(-static_cast<double>(lag) / cfg.tau_plus);
                force += (w * gate / (sq + eps_sq)) * delta;
            }
            field.forces.row(row) = force;
        }
    }
    return field;
}

double loss_stdp(const StdpField& field, double epsilon)
{
    if (field.forces.rows() != field.motions.rows() || field.forces.cols() != field.motions.cols()) {
        throw ShapeError("loss_stdp: forces and motions disagree");
    }
    if (field.forces.rows() == 0) return 0.0;
    double sum = 0.0;
    for (Eigen::Index r = 0; r < field.forces.rows(); ++r) {
        const double vn = field.motions.row(r).norm();
        const double fn = field.forces.row(r).norm();
        sum += 1.0 - field.motions.row(r).dot(field.forces.row(r)) / ((vn + epsilon) * (fn + epsilon));
    }
    return sum / static_cast<double>(field.forces.rows());
}

MatrixLoss loss_stdp_grad(const Eigen::MatrixXd& z_local, std::size_t window_length, const LossConfig& cfg)
{
    const StdpField field = stdp_force_field(z_local, window_length, cfg);
    const double eps = cfg.epsilon;
    const double eps_sq = eps * eps;
    const double inv_two_sf2 = 1.0 / (2.0 * cfg.sigma_force * cfg.sigma_force);
    const double count = static_cast<double>(field.windows * field.steps);
    const Eigen::Index dim = z_local.cols();

    MatrixLoss out;
    out.value = loss_stdp(field, eps);
    out.grad = Eigen::MatrixXd::Zero(z_local.rows(), dim);

    // d/du of u/(|u| + eps) applied to an upstream vector g.
    auto normalized_vjp = [eps](const Eigen::RowVectorXd& u, const Eigen::RowVectorXd& g) {
        const double n = u.norm();
        const double scale = n + eps;
        Eigen::RowVectorXd r = g / scale;
        if (n > 0.0) r -= (u.dot(g) / (n * scale * scale)) * u;
        return r;
    };

    for (std::size_t b = 0; b < field.windows; ++b) {
        const auto base = static_cast<Eigen::Index>(b * window_length);
        for (std::size_t s = 0; s < field.steps; ++s) {
            const auto t = static_cast<Eigen::Index>(cfg.max_lag + s);
            const auto row = static_cast<Eigen::Index>(b * field.steps + s);
            const Eigen::RowVectorXd v = field.motions.row(row);
            const Eigen::RowVectorXd f = field.forces.row(row);
            const Eigen::RowVectorXd v_bar = v / (v.norm() + eps);
            const Eigen::RowVectorXd f_bar = f / (f.norm() + eps);
            // term = 1 - v_bar . f_bar, averaged over count.
            const Eigen::RowVectorXd d_v = normalized_vjp(v, -f_bar / count);
            const Eigen::RowVectorXd d_f = normalized_vjp(f, -v_bar / count);
            out.grad.row(base + t + 1) += d_v;
            out.grad.row(base + t) -= d_v;
            for (std::size_t lag = 1; lag <= cfg.max_lag; ++lag) {
                const Eigen::Index back = base + t - static_cast<Eigen::Index>(lag);
                const Eigen::RowVectorXd delta = z_local.row(base + t) - z_local.row(back);
                const double sq = delta.squaredNorm();
                const double soft = sq + eps_sq;
                const double gate = std::exp(-sq * inv_two_sf2);
                const double w = cfg.a_plus * std::exp(-static_cast<double>(lag) / cfg.tau_plus);
                // h(delta) = gate(delta) * delta / soft(delta)
                const double proj = delta.dot(d_f);
                const Eigen::RowVectorXd d_delta =
                    w * ((gate / soft) * d_f + (2.0 * proj * (-gate * inv_two_sf2 / soft - gate / (soft * soft))) * delta);
                out.grad.row(base + t) += d_delta;
                out.grad.row(back) -= d_delta;
            }
        }
    }
    return out;
}

TotalLoss total_loss(const LossBreakdown& parts, const UncertaintyParams& s, const LossConfig& cfg)
{
    TotalLoss out;
    const double wr = std::exp(-2.0 * s.s_r);
    const double ws = std::exp(-2.0 * s.s_s);
    const double we = std::exp(-2.0 * s.s_e);
    out.value = (wr * parts.rec + s.s_r) + (ws * parts.svdd + s.s_s) + (we * parts.enc + s.s_e) +
                cfg.omega_diff * parts.diff + cfg.omega_vol * parts.vol + cfg.lambda_stdp * parts.stdp;
    out.d_components = {wr, ws, we, cfg.omega_diff, cfg.omega_vol, cfg.lambda_stdp};
    out.d_s_r = -2.0 * wr * parts.rec + 1.0;
    out.d_s_s = -2.0 * ws * parts.svdd + 1.0;
    out.d_s_e = -2.0 * we * parts.enc + 1.0;
    return out;
}

CentredLoss dsvdd_baseline_loss(const Eigen::MatrixXd& z_global, const Eigen::VectorXd& centre, double weight_norm_sq,
                                double lambda_w)
{
    if (z_global.cols() != centre.size()) throw ShapeError("dsvdd_baseline_loss: centre dimension mismatch");
    require_rows(z_global, "dsvdd_baseline_loss");
    const double n = static_cast<double>(z_global.rows());
    const Eigen::MatrixXd delta = z_global.rowwise() - centre.transpose();
    CentredLoss out;
    out.value = delta.squaredNorm() / n + lambda_w * weight_norm_sq;
    out.grad = (2.0 / n) * delta;
    out.grad_centre = -out.grad.colwise().sum().transpose();
    return out;
}

} // namespace synforce

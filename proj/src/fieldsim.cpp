#include "synforce/fieldsim.hpp"

#include "synforce/errors.hpp"

#include <algorithm>
#include <cmath>

namespace synforce {

namespace {

constexpr double kPi = 3.14159265358979323846;

void require_positive(double v, const char* name)
{
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("field: ") + name + " must be positive");
}

void require_nonnegative(double v, const char* name)
{
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("field: ") + name + " must be >= 0");
}

Eigen::Vector2d grad_phi_v(const Eigen::Vector2d& r, const Eigen::Vector2d& centre, double radius)
{
    const Eigen::Vector2d d = r - centre;
    return 3.0 * d.norm() * d / (kPi * radius * radius);
}

} // namespace

void validate_field_config(const FieldConfig& cfg)
{
    if (cfg.n < 3) throw ConfigError("field: grid needs at least 3 nodes per side");
    require_positive(cfg.radius, "radius");
    require_positive(cfg.dt, "dt");
    require_positive(cfg.sigma, "sigma");
    require_positive(cfg.tau_plus, "tau_plus");
    require_positive(cfg.tau_minus, "tau_minus");
    require_positive(cfg.epsilon, "epsilon");
    require_nonnegative(cfg.eta, "eta");
    require_nonnegative(cfg.lambda, "lambda");
    require_nonnegative(cfg.diffusion, "diffusion");
    require_nonnegative(cfg.a_plus, "a_plus");
    require_nonnegative(cfg.a_minus, "a_minus");
    const double h = cfg.spacing();
    if (cfg.diffusion > 0.0 && cfg.dt > h * h / (4.0 * cfg.diffusion)) {
        throw ConfigError("field: dt " + std::to_string(cfg.dt) + " exceeds the stability bound h^2/(4D) = " +
                          std::to_string(h * h / (4.0 * cfg.diffusion)));
    }
}

DensityGrid make_grid(const FieldConfig& cfg)
{
    if (cfg.n < 3) throw ConfigError("field: grid needs at least 3 nodes per side");
    require_positive(cfg.radius, "radius");
    DensityGrid g;
    g.n = cfg.n;
    g.h = cfg.spacing();
    g.origin = cfg.centre - Eigen::Vector2d(cfg.radius, cfg.radius);
    g.rho.assign(g.n * g.n, 0.0);
    g.mask.assign(g.n * g.n, 0);
    const double limit = cfg.radius * (1.0 + 1e-12);
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.n; ++j) {
            g.mask[g.index(i, j)] = (g.position(i, j) - cfg.centre).norm() <= limit ? 1 : 0;
        }
    }
    return g;
}

double total_mass(const DensityGrid& grid)
{
    double m = 0.0;
    for (std::size_t k = 0; k < grid.rho.size(); ++k) {
        if (grid.mask[k]) m += grid.rho[k];
    }
    return m * grid.h * grid.h;
}

double mean_radius(const DensityGrid& grid, const Eigen::Vector2d& centre)
{
    double mass = 0.0;
    double moment = 0.0;
    for (std::size_t i = 0; i < grid.n; ++i) {
        for (std::size_t j = 0; j < grid.n; ++j) {
            const std::size_t k = grid.index(i, j);
            if (!grid.mask[k]) continue;
            mass += grid.rho[k];
            moment += grid.rho[k] * (grid.position(i, j) - centre).norm();
        }
    }
    return mass > 0.0 ? moment / mass : 0.0;
}

std::pair<std::size_t, std::size_t> nearest_node(const DensityGrid& grid, const Eigen::Vector2d& r)
{
    const Eigen::Vector2d u = (r - grid.origin) / grid.h;
    auto clamp_index = [&](double v) {
        const double c = std::clamp(std::round(v), 0.0, static_cast<double>(grid.n - 1));
        return static_cast<std::size_t>(c);
    };
    return {clamp_index(u.x()), clamp_index(u.y())};
}

GridField hebbian_term(const DensityGrid& grid, double sigma, double eta)
{
    GridField inc(grid.rho.size(), 0.0);
    if (eta == 0.0) return inc;
    require_positive(sigma, "sigma");
    const auto reach = static_cast<long>(std::floor(4.0 * sigma / grid.h));
    const long n = static_cast<long>(grid.n);
    // Kernel weights indexed by offset, truncated to the 4 sigma disc.
    const long side = 2 * reach + 1;
    std::vector<double> kernel(static_cast<std::size_t>(side * side), 0.0);
    const double cutoff = 4.0 * sigma;
    for (long di = -reach; di <= reach; ++di) {
        for (long dj = -reach; dj <= reach; ++dj) {
            const double dist = grid.h * std::hypot(static_cast<double>(di), static_cast<double>(dj));
            if (dist <= cutoff) {
                kernel[static_cast<std::size_t>((di + reach) * side + dj + reach)] =
                    std::exp(-dist * dist / (2.0 * sigma * sigma));
            }
        }
    }
    const double scale = eta * grid.h * grid.h;
    for (long i = 0; i < n; ++i) {
        for (long j = 0; j < n; ++j) {
            const std::size_t k = grid.index(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
            if (!grid.mask[k]) continue;
            double acc = 0.0;
            for (long di = std::max(-reach, -i); di <= std::min(reach, n - 1 - i); ++di) {
                for (long dj = std::max(-reach, -j); dj <= std::min(reach, n - 1 - j); ++dj) {
                    const std::size_t l = grid.index(static_cast<std::size_t>(i + di), static_cast<std::size_t>(j + dj));
                    if (!grid.mask[l] || grid.rho[l] == 0.0) continue;
                    acc += kernel[static_cast<std::size_t>((di + reach) * side + dj + reach)] * grid.rho[l];
                }
            }
            inc[k] = scale * acc;
        }
    }
    return inc;
}

GridField compression_term(const DensityGrid& grid, double lambda, const Eigen::Vector2d& centre, double radius)
{
    GridField inc(grid.rho.size(), 0.0);
    if (lambda == 0.0) return inc;
    require_positive(radius, "radius");
    const double inv_h = 1.0 / grid.h;
    auto face = [&](std::size_t a, std::size_t b, const Eigen::Vector2d& mid, int axis) {
        if (!grid.mask[a] || !grid.mask[b]) return;
        const double velocity = -lambda * grad_phi_v(mid, centre, radius)(axis);
        // Upwind face density keeps the explicit step positivity-preserving.
        const double flux = (velocity > 0.0 ? grid.rho[a] : grid.rho[b]) * velocity; // a -> b
        inc[a] -= flux * inv_h;
        inc[b] += flux * inv_h;
    };
    for (std::size_t i = 0; i < grid.n; ++i) {
        for (std::size_t j = 0; j < grid.n; ++j) {
            const Eigen::Vector2d p = grid.position(i, j);
            if (i + 1 < grid.n) face(grid.index(i, j), grid.index(i + 1, j), p + Eigen::Vector2d(0.5 * grid.h, 0.0), 0);
            if (j + 1 < grid.n) face(grid.index(i, j), grid.index(i, j + 1), p + Eigen::Vector2d(0.0, 0.5 * grid.h), 1);
        }
    }
    return inc;
}

GridField diffusion_term(const DensityGrid& grid, double diffusion)
{
    GridField inc(grid.rho.size(), 0.0);
    if (diffusion == 0.0) return inc;
    const double coef = diffusion / (grid.h * grid.h);
    for (std::size_t i = 0; i < grid.n; ++i) {
        for (std::size_t j = 0; j < grid.n; ++j) {
            const std::size_t k = grid.index(i, j);
            if (!grid.mask[k]) continue;
            double acc = 0.0;
            auto add = [&](std::size_t l) {
                if (grid.mask[l]) acc += grid.rho[l] - grid.rho[k];
            };
            if (i > 0) add(grid.index(i - 1, j));
            if (i + 1 < grid.n) add(grid.index(i + 1, j));
            if (j > 0) add(grid.index(i, j - 1));
            if (j + 1 < grid.n) add(grid.index(i, j + 1));
            inc[k] = coef * acc;
        }
    }
    return inc;
}

std::size_t step_density(DensityGrid& grid, const FieldConfig& cfg)
{
    validate_field_config(cfg);
    const GridField heb = hebbian_term(grid, cfg.sigma, cfg.eta);
    const GridField comp = compression_term(grid, cfg.lambda, cfg.centre, cfg.radius);
    const GridField diff = diffusion_term(grid, cfg.diffusion);
    std::size_t clamps = 0;
    for (std::size_t k = 0; k < grid.rho.size(); ++k) {
        if (!grid.mask[k]) {
            grid.rho[k] = 0.0;
            continue;
        }
        double v = grid.rho[k] + cfg.dt * (heb[k] + comp[k] + diff[k]);
        if (v < 0.0) {
            v = 0.0;
            ++clamps;
        }
        grid.rho[k] = v;
    }
    return clamps;
}

double stdp_window(double dt, double a_plus, double a_minus, double tau_plus, double tau_minus)
{
    if (dt > 0.0) return a_plus * std::exp(-dt / tau_plus);
    if (dt < 0.0) return -a_minus * std::exp(dt / tau_minus);
    return 0.0;
}

Eigen::Vector2d particle_velocity(std::span<const Particle> particles, std::size_t k, const DensityGrid& grid,
                                  const FieldConfig& cfg)
{
    const Particle& pk = particles[k];
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (std::size_t l = 0; l < particles.size(); ++l) {
        if (l == k) continue;
        const double a = stdp_window(pk.spike_time - particles[l].spike_time, cfg.a_plus, cfg.a_minus, cfg.tau_plus,
                                     cfg.tau_minus);
        if (a == 0.0) continue;
        const Eigen::Vector2d d = pk.r - particles[l].r;
        const double dist = d.norm();
        v += a * d / (dist * dist * dist + kFieldSoftening);
    }
    if (cfg.alpha != 0.0) {
        const Eigen::Vector2d dc = pk.r - cfg.centre;
        const double rc = dc.norm();
        Eigen::Vector2d coupling = dc / (rc * rc * rc + kFieldSoftening);
        const double area = grid.h * grid.h;
        for (std::size_t i = 0; i < grid.n; ++i) {
            for (std::size_t j = 0; j < grid.n; ++j) {
                const std::size_t idx = grid.index(i, j);
                if (!grid.mask[idx] || grid.rho[idx] == 0.0) continue;
                const Eigen::Vector2d d = pk.r - grid.position(i, j);
                const double dist = d.norm();
                coupling -= grid.rho[idx] * area * d / (dist * dist * dist + kFieldSoftening);
            }
        }
        v += cfg.alpha * coupling;
    }
    return v;
}

std::size_t particle_step(std::vector<Particle>& particles, const DensityGrid& grid, const FieldConfig& cfg, double dt)
{
    std::vector<Eigen::Vector2d> velocity(particles.size(), Eigen::Vector2d::Zero());
    for (std::size_t k = 0; k < particles.size(); ++k) {
        if (!particles[k].frozen) velocity[k] = particle_velocity(particles, k, grid, cfg);
    }
    std::size_t frozen = 0;
    const double box = 4.0 * cfg.radius;
    for (std::size_t k = 0; k < particles.size(); ++k) {
        Particle& p = particles[k];
        if (p.frozen) continue;
        const Eigen::Vector2d next = p.r + dt * velocity[k];
        const Eigen::Vector2d rel = next - cfg.centre;
        if (!next.allFinite() || std::abs(rel.x()) > box || std::abs(rel.y()) > box) {
            p.frozen = true;
            ++frozen;
            continue;
        }
        p.r = next;
    }
    return frozen;
}

std::vector<double> poisson_source(const DensityGrid& grid, std::span<const Particle> particles, const FieldConfig& cfg)
{
    std::vector<double> src(grid.rho.size(), 0.0);
    for (std::size_t k = 0; k < src.size(); ++k) {
        if (grid.mask[k]) src[k] = grid.rho[k];
    }
    const double point = 1.0 / (grid.h * grid.h);
    auto deposit = [&](const Eigen::Vector2d& r, double q) {
        const auto [i, j] = nearest_node(grid, r);
        const std::size_t k = grid.index(i, j);
        if (grid.mask[k]) src[k] += q * point;
    };
    if (cfg.rho_minus != 0.0) deposit(cfg.centre, -cfg.rho_minus);
    for (const Particle& p : particles) deposit(p.r, p.charge);
    return src;
}

PoissonResult solve_poisson(const DensityGrid& grid, std::span<const double> source, double epsilon,
                            const PoissonOptions& options)
{
    if (source.size() != grid.rho.size()) throw ShapeError("solve_poisson: source size differs from the grid");
    require_positive(epsilon, "epsilon");
    PoissonResult out;
    out.potential.assign(grid.rho.size(), 0.0);
    std::vector<double>& phi = out.potential;
    const double h2 = grid.h * grid.h;
    const std::size_t n = grid.n;
    std::vector<double> rhs(source.size());
    for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] = source[k] / epsilon;

    auto neighbour_sum = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        if (i > 0) s += phi[grid.index(i - 1, j)];
        if (i + 1 < n) s += phi[grid.index(i + 1, j)];
        if (j > 0) s += phi[grid.index(i, j - 1)];
        if (j + 1 < n) s += phi[grid.index(i, j + 1)];
        return s;
    };
    auto max_residual = [&]() {
        double r = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = grid.index(i, j);
                if (!grid.mask[k]) continue;
                r = std::max(r, std::abs((neighbour_sum(i, j) - 4.0 * phi[k]) / h2 + rhs[k]));
            }
        }
        return r;
    };

    bool any_source = false;
    for (double v : rhs) any_source = any_source || v != 0.0;
    if (!any_source) {
        out.converged = true;
        return out;
    }
    while (out.sweeps < options.max_sweeps) {
        double sweep_residual = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                const std::size_t k = grid.index(i, j);
                if (!grid.mask[k]) continue;
                const double s = neighbour_sum(i, j);
                sweep_residual = std::max(sweep_residual, std::abs((s - 4.0 * phi[k]) / h2 + rhs[k]));
                phi[k] = 0.25 * (s + h2 * rhs[k]);
            }
        }
        ++out.sweeps;
        if (sweep_residual <= options.tolerance) {
            out.residual = max_residual();
            if (out.residual <= options.tolerance) {
                out.converged = true;
                return out;
            }
        }
    }
    out.residual = max_residual();
    out.converged = out.residual <= options.tolerance;
    return out;
}

PoissonResult solve_poisson(const DensityGrid& grid, std::span<const Particle> particles, const FieldConfig& cfg,
                            const PoissonOptions& options)
{
    return solve_poisson(grid, poisson_source(grid, particles, cfg), cfg.epsilon, options);
}

} // namespace synforce

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace synforce {

// Two-dimensional continuum model of the latent cloud on an n x n grid over
// [-R0, R0]^2 centred on r0.
struct FieldConfig {
    std::size_t n = 65;
    double radius = 1.0; // R0
    double dt = 1e-4;
    double eta = 0.0;     // Hebbian rate
    double lambda = 0.0;  // compression strength
    double diffusion = 0.0; // D
    double sigma = 0.1;   // Hebbian kernel width
    double a_plus = 1.0;
    double a_minus = 1.0;
    double tau_plus = 5.0;
    double tau_minus = 5.0;
    double alpha = 0.0;   // particle / cloud coupling
    double epsilon = 1.0; // permittivity analogue
    double rho_minus = 0.0; // centre charge
    Eigen::Vector2d centre = Eigen::Vector2d::Zero(); // r0

    double spacing() const { return 2.0 * radius / static_cast<double>(n - 1); }
};

// Throws ConfigError on non-positive widths, n < 3, or dt > h^2 / (4 D).
void validate_field_config(const FieldConfig& cfg);

struct DensityGrid {
    std::size_t n = 0;
    double h = 0.0;
    Eigen::Vector2d origin = Eigen::Vector2d::Zero(); // position of node (0, 0)
    std::vector<double> rho;  // n*n, index i*n + j with x from i and y from j
    std::vector<char> mask;   // 1 inside the disc

    std::size_t index(std::size_t i, std::size_t j) const { return i * n + j; }
    Eigen::Vector2d position(std::size_t i, std::size_t j) const
    {
        return origin + h * Eigen::Vector2d(static_cast<double>(i), static_cast<double>(j));
    }
    bool inside(std::size_t i, std::size_t j) const { return mask[index(i, j)] != 0; }
};

DensityGrid make_grid(const FieldConfig& cfg);
double total_mass(const DensityGrid& grid);
// Mass-weighted mean of |r - r0|; 0 for an empty grid.
double mean_radius(const DensityGrid& grid, const Eigen::Vector2d& centre);
// Nearest node to a point, clamped to the grid.
std::pair<std::size_t, std::size_t> nearest_node(const DensityGrid& grid, const Eigen::Vector2d& r);

using GridField = std::vector<double>;

// eta * h^2 * sum_l exp(-|r_k - r_l|^2 / (2 sigma^2)) rho_l over disc nodes within 4 sigma.
GridField hebbian_term(const DensityGrid& grid, double sigma, double eta);
// Drift toward r0 with velocity -lambda * grad Phi_V, grad Phi_V = 3|r - r0|(r - r0) / (pi R0^2),
// as a conservative face-flux divergence (upwind face densities) with no flux across the disc edge.
GridField compression_term(const DensityGrid& grid, double lambda, const Eigen::Vector2d& centre, double radius);
// D times the 5-point Laplacian; neighbours outside the disc mirror the node (no flux).
GridField diffusion_term(const DensityGrid& grid, double diffusion);

// One explicit Euler step of all three terms; negative values are clamped to
// zero and the number of clamped nodes is returned.
std::size_t step_density(DensityGrid& grid, const FieldConfig& cfg);

// A+ exp(-dt/tau+) for dt > 0, -A- exp(dt/tau-) for dt < 0, 0 at dt = 0.
double stdp_window(double dt, double a_plus, double a_minus, double tau_plus, double tau_minus);

struct Particle {
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    double charge = 1.0;
    double spike_time = 0.0;
    bool frozen = false;
};

inline constexpr double kFieldSoftening = 1e-6;

// Velocity of particle k from the other particles, the centre and the cloud.
Eigen::Vector2d particle_velocity(std::span<const Particle> particles, std::size_t k, const DensityGrid& grid,
                                  const FieldConfig& cfg);
// Explicit Euler update of every unfrozen particle from the same snapshot.
// Particles leaving the 4 R0 box around r0 are frozen; returns how many froze.
std::size_t particle_step(std::vector<Particle>& particles, const DensityGrid& grid, const FieldConfig& cfg,
                          double dt);

struct PoissonResult {
    std::vector<double> potential; // same layout as DensityGrid::rho; 0 outside the disc
    double residual = 0.0;         // max |lap(phi) + source / epsilon| over disc nodes
    std::size_t sweeps = 0;
    bool converged = false;
};

struct PoissonOptions {
    double tolerance = 1e-8;
    std::size_t max_sweeps = 100000;
};

// Source = rho_plus - rho_minus delta(r0) + sum_k q_k delta(r_k), the point
// charges deposited on their nearest nodes with weight 1/h^2.
std::vector<double> poisson_source(const DensityGrid& grid, std::span<const Particle> particles,
                                   const FieldConfig& cfg);

// Gauss-Seidel on lap(phi) = -source / epsilon with phi = 0 outside the disc.
PoissonResult solve_poisson(const DensityGrid& grid, std::span<const double> source, double epsilon,
                            const PoissonOptions& options = {});
PoissonResult solve_poisson(const DensityGrid& grid, std::span<const Particle> particles, const FieldConfig& cfg,
                            const PoissonOptions& options = {});

} // namespace synforce

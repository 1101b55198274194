#include "support.hpp"

#include "synforce/errors.hpp"
#include "synforce/fieldsim.hpp"

#include <doctest.h>

using namespace synforce;

namespace {

void put_point(DensityGrid& g, const Eigen::Vector2d& r, double mass)
{
    const auto [i, j] = nearest_node(g, r);
    g.rho[g.index(i, j)] += mass / (g.h * g.h);
}

void put_ring(DensityGrid& g, const Eigen::Vector2d& centre, double radius, double width)
{
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.n; ++j) {
            if (!g.inside(i, j)) continue;
            const double d = (g.position(i, j) - centre).norm() - radius;
            g.rho[g.index(i, j)] = std::exp(-d * d / (2.0 * width * width));
        }
    }
}

double axis_variance(const DensityGrid& g, const Eigen::Vector2d& centre)
{
    double m = 0.0, s = 0.0;
    for (std::size_t i = 0; i < g.n; ++i) {
        for (std::size_t j = 0; j < g.n; ++j) {
            const double x = g.position(i, j).x() - centre.x();
            m += g.rho[g.index(i, j)];
            s += g.rho[g.index(i, j)] * x * x;
        }
    }
    return s / m;
}

} // namespace

TEST_CASE("grid geometry and validation")
{
    FieldConfig c;
    c.centre = Eigen::Vector2d(0.5, -0.25);
    const DensityGrid g = make_grid(c);
    CHECK(g.h == doctest::Approx(2.0 / 64.0));
    CHECK((g.position(32, 32) - c.centre).norm() <= 1e-14);
    CHECK(g.inside(32, 0));
    CHECK_FALSE(g.inside(0, 0));
    CHECK(nearest_node(g, c.centre) == std::pair<std::size_t, std::size_t>{32, 32});
    FieldConfig bad = c;
    bad.diffusion = 1.0;
    bad.dt = g.h * g.h / 4.0 * 1.01;
    CHECK_THROWS_AS(validate_field_config(bad), ConfigError);
    bad.dt = g.h * g.h / 4.0;
    CHECK_NOTHROW(validate_field_config(bad));
    FieldConfig tiny = c;
    tiny.n = 2;
    CHECK_THROWS_AS(make_grid(tiny), ConfigError);
}

TEST_CASE("hebbian term: zero, kernel profile and source sign")
{
    FieldConfig c;
    c.eta = 2.0;
    c.sigma = 0.1;
    DensityGrid g = make_grid(c);
    for (double v : hebbian_term(g, c.sigma, c.eta)) CHECK(v == 0.0);
    g.rho[g.index(32, 32)] = 1.0;
    const GridField inc = hebbian_term(g, c.sigma, c.eta);
    for (std::size_t i = 20; i < 45; ++i) {
        const double r2 = (g.position(i, 32) - c.centre).squaredNorm();
        const double expect = r2 <= 16.0 * c.sigma * c.sigma ? c.eta * g.h * g.h * std::exp(-r2 / (2 * c.sigma * c.sigma)) : 0.0;
        CHECK(inc[g.index(i, 32)] == doctest::Approx(expect).epsilon(1e-12));
    }
    c.dt = 1e-3;
    const double before = total_mass(g);
    step_density(g, c);
    CHECK(total_mass(g) > before);
}

TEST_CASE("hebbian term: uniform interior density gives a flat increment")
{
    FieldConfig c;
    c.eta = 1.0;
    c.sigma = 0.05;
    DensityGrid g = make_grid(c);
    for (std::size_t k = 0; k < g.rho.size(); ++k) g.rho[k] = g.mask[k] ? 1.0 : 0.0;
    const GridField inc = hebbian_term(g, c.sigma, c.eta);
    const double ref = inc[g.index(32, 32)];
    for (std::size_t i = 24; i <= 40; ++i) {
        for (std::size_t j = 24; j <= 40; ++j) CHECK(std::abs(inc[g.index(i, j)] - ref) <= 0.01 * ref);
    }
}

TEST_CASE("compression: no drift at the centre; ring contracts monotonically")
{
    FieldConfig c;
    c.lambda = 1.0;
    c.dt = 1e-3;
    DensityGrid g = make_grid(c);
    g.rho[g.index(32, 32)] = 1.0;
    for (double v : compression_term(g, c.lambda, c.centre, c.radius)) CHECK(std::abs(v) <= 1e-12);

    DensityGrid ring = make_grid(c);
    put_ring(ring, c.centre, 0.6, 0.05);
    const double mass = total_mass(ring);
    double prev = mean_radius(ring, c.centre);
    std::size_t clamps = 0;
    for (int s = 0; s < 200; ++s) {
        clamps += step_density(ring, c);
        const double r = mean_radius(ring, c.centre);
        CHECK(r < prev);
        prev = r;
    }
    CHECK(clamps == 0);
    CHECK(std::abs(total_mass(ring) - mass) <= 1e-12 * mass);
}

TEST_CASE("diffusion: uniform field, mass conservation and variance growth")
{
    FieldConfig c;
    c.diffusion = 0.01;
    c.dt = 0.002;
    DensityGrid u = make_grid(c);
    for (std::size_t k = 0; k < u.rho.size(); ++k) u.rho[k] = u.mask[k] ? 3.0 : 0.0;
    for (double v : diffusion_term(u, c.diffusion)) CHECK(v == 0.0);

    DensityGrid g = make_grid(c);
    put_point(g, c.centre, 1.0);
    const double mass = total_mass(g);
    std::size_t clamps = 0;
    for (int s = 0; s < 500; ++s) clamps += step_density(g, c);
    CHECK(clamps == 0);
    CHECK(std::abs(total_mass(g) - mass) <= 1e-6 * mass);
    const double expect = 2.0 * c.diffusion * 500 * c.dt;
    CHECK(axis_variance(g, c.centre) == doctest::Approx(expect).epsilon(0.05));

    // With eta = lambda = 0 a full step is the diffusion term alone.
    DensityGrid a = make_grid(c), b = make_grid(c);
    put_ring(a, c.centre, 0.4, 0.1);
    b.rho = a.rho;
    step_density(a, c);
    const GridField d = diffusion_term(b, c.diffusion);
    for (std::size_t k = 0; k < b.rho.size(); ++k) {
        if (b.mask[k]) CHECK(a.rho[k] == std::max(0.0, b.rho[k] + c.dt * d[k]));
    }
}

TEST_CASE("stdp window: examples, antisymmetry and bounds")
{
    CHECK(stdp_window(0.0, 1, 1, 5, 5) == 0.0);
    CHECK(stdp_window(5.0, 1, 1, 5, 5) == doctest::Approx(0.36787944117144233).epsilon(1e-15));
    CHECK(stdp_window(-5.0, 1, 1, 5, 5) == doctest::Approx(-0.36787944117144233).epsilon(1e-15));
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const double dt = 20.0 * (rng.uniform() - 0.5);
        CHECK(stdp_window(-dt, 0.7, 0.7, 3.0, 3.0) == -stdp_window(dt, 0.7, 0.7, 3.0, 3.0));
        CHECK(std::abs(stdp_window(dt, 0.7, 1.3, 3.0, 2.0)) <= 1.3);
        if (dt != 0.0) CHECK((stdp_window(dt, 0.7, 1.3, 3.0, 2.0) > 0.0) == (dt > 0.0));
    }
}

TEST_CASE("particles: free, repelled by the centre, and zero window at equal spikes")
{
    FieldConfig c;
    DensityGrid g = make_grid(c);
    std::vector<Particle> one{{Eigen::Vector2d(0.3, 0.1), 1.0, 0.0, false}};
    CHECK(particle_velocity(one, 0, g, c).norm() == 0.0);
    particle_step(one, g, c, 1e-3);
    CHECK(one[0].r == Eigen::Vector2d(0.3, 0.1));

    c.alpha = 0.5;
    const Eigen::Vector2d v = particle_velocity(one, 0, g, c);
    CHECK(v.dot(one[0].r - c.centre) > 0.0);
    CHECK(std::abs(v.x() * one[0].r.y() - v.y() * one[0].r.x()) <= 1e-12); // radial

    std::vector<Particle> two{{Eigen::Vector2d(0.3, 0.0), 1.0, 2.0, false}, {Eigen::Vector2d(-0.2, 0.4), 1.0, 2.0, false}};
    std::vector<Particle> alone{two[0]};
    CHECK((particle_velocity(two, 0, g, c) - particle_velocity(alone, 0, g, c)).norm() <= 1e-15);

    std::vector<Particle> far{{Eigen::Vector2d(3.9, 0.0), 1.0, 0.0, false}};
    c.alpha = 1e6;
    CHECK(particle_step(far, g, c, 1.0) == 1);
    CHECK(far[0].frozen);
    const Eigen::Vector2d frozen_at = far[0].r;
    particle_step(far, g, c, 1.0);
    CHECK(far[0].r == frozen_at);
}

TEST_CASE("poisson: zero source, residual contract and point-charge profile")
{
    FieldConfig c;
    c.n = 33;
    DensityGrid g = make_grid(c);
    const PoissonResult zero = solve_poisson(g, std::vector<double>(g.rho.size(), 0.0), 1.0);
    CHECK(zero.converged);
    for (double v : zero.potential) CHECK(v == 0.0);

    put_ring(g, c.centre, 0.5, 0.1);
    const auto src = poisson_source(g, {}, c);
    const PoissonResult r = solve_poisson(g, src, 2.0);
    CHECK(r.converged);
    CHECK(r.residual <= 1e-8);
    const double h2 = g.h * g.h;
    for (std::size_t i = 1; i + 1 < g.n; ++i) {
        for (std::size_t j = 1; j + 1 < g.n; ++j) {
            if (!g.inside(i, j)) continue;
            auto phi = [&](std::size_t a, std::size_t b) { return r.potential[g.index(a, b)]; };
            const double lap = (phi(i + 1, j) + phi(i - 1, j) + phi(i, j + 1) + phi(i, j - 1) - 4 * phi(i, j)) / h2;
            CHECK(std::abs(lap + src[g.index(i, j)] / 2.0) <= 1e-6);
        }
    }

    FieldConfig fine;
    fine.n = 129;
    const DensityGrid fg = make_grid(fine);
    const double q = 1.0;
    const std::vector<Particle> charge{{fine.centre, q, 0.0, false}};
    const PoissonResult p = solve_poisson(fg, charge, fine);
    CHECK(p.converged);
    const double pi = 3.14159265358979323846;
    for (std::size_t i = 64 + 8; i <= 64 + 32; ++i) {
        const double rad = (fg.position(i, 64) - fine.centre).norm();
        const double green = -q / (2.0 * pi * fine.epsilon) * std::log(rad / fine.radius);
        CHECK(std::abs(p.potential[fg.index(i, 64)] - green) <= 0.03 * green);
    }
}

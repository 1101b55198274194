#pragma once

#include "synforce/pipeline.hpp"
#include "synforce/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

namespace testing {

inline Eigen::MatrixXd random_matrix(synforce::Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0)
{
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    }
    return m;
}

// Frames with independent Gaussian fields, a 10 s cadence and label 0.
inline std::vector<synforce::RawFrame> random_frames(synforce::Rng& rng, std::size_t n, std::size_t cells,
                                                     std::size_t probes)
{
    std::vector<synforce::RawFrame> frames(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& f = frames[i];
        f.timestamp = 1000.0 + 10.0 * static_cast<double>(i);
        f.charge_status = 1 + static_cast<int>(rng.index(3));
        f.speed = 40.0 + 5.0 * rng.normal();
        f.mileage = 1000.0 + static_cast<double>(i) + rng.normal();
        f.total_current = 10.0 * rng.normal();
        f.soc = 50.0 + 10.0 * rng.normal();
        f.insulation_res = 500.0 + rng.normal();
        f.cell_volts.resize(cells);
        for (auto& v : f.cell_volts) v = 3.3 + 0.01 * rng.normal();
        f.probe_temps.resize(probes);
        for (auto& t : f.probe_temps) t = 25.0 + rng.normal();
        f.total_volt = 0.0;
        for (double v : f.cell_volts) f.total_volt += v;
        const auto [vlo, vhi] = std::minmax_element(f.cell_volts.begin(), f.cell_volts.end());
        f.volt_extrema = {*vhi, *vlo};
        const auto [tlo, thi] = std::minmax_element(f.probe_temps.begin(), f.probe_temps.end());
        f.temp_extrema = {*thi, *tlo};
    }
    return frames;
}

// Cyclic Jacobi eigenvalues of a symmetric matrix, descending.
inline std::vector<double> jacobi_eigenvalues(Eigen::MatrixXd a, Eigen::MatrixXd* vectors = nullptr)
{
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        }
        if (off < 1e-30) break;
        for (Eigen::Index p = 0; p < n; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                if (std::abs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) > a(y, y); });
    std::vector<double> vals;
    if (vectors) vectors->resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index src = order[static_cast<std::size_t>(i)];
        vals.push_back(a(src, src));
        if (vectors) vectors->col(i) = v.col(src);
    }
    return vals;
}

inline double naive_median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace testing

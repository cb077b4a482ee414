#include "pscore/divergence.hpp"

#include "pscore/error.hpp"
#include "pscore/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace pscore {

namespace {

// integral of |c - t/100| over [a, b], splitting at the sign change
double segment_area(double a, double b, double c) {
    if (b <= a) return 0.0;
    const auto piece = [c](double lo, double hi) {
        return c * (hi - lo) - (hi * hi - lo * lo) / 200.0;
    };
    const double cross = 100.0 * c;
    if (cross <= a || cross >= b) return std::abs(piece(a, b));
    return piece(a, cross) - piece(cross, b);
}

} // namespace

double kld_quadrature(const FittedDensity& p, const FittedDensity& q,
                      std::size_t grid_points) {
    if (grid_points < 1024) throw DomainError("kld_quadrature needs at least 1024 grid points");
    if (!(p.guard.eps > 0.0) || !(q.guard.eps > 0.0))
        throw DomainError("kld_quadrature requires guarded densities (eps > 0)");

    const double s = std::max(smoothing_scale(p), smoothing_scale(q));
    const double a = std::min(p.guard.lo, q.guard.lo) - 6.0 * s;
    const double b = std::max(p.guard.hi, q.guard.hi) + 6.0 * s;

    std::vector<double> ys(grid_points), lp(grid_points), lq(grid_points);
    const double step = (b - a) / static_cast<double>(grid_points - 1);
    for (std::size_t i = 0; i < grid_points; ++i)
        ys[i] = a + step * static_cast<double>(i);
    log_pdf_batch(p, ys, lp.data());
    log_pdf_batch(q, ys, lq.data());

    // integrand p * (ln p - ln q); reuse lq for the log ratio and lp for p
    const auto& ops = kernels::active();
    for (std::size_t i = 0; i < grid_points; ++i) lq[i] = lp[i] - lq[i];
    ops.exp_batch(lp.data(), grid_points, lp.data());
    for (std::size_t i = 0; i < grid_points; ++i) lp[i] *= lq[i];
    return step * (ops.sum(lp.data(), grid_points) - 0.5 * (lp.front() + lp.back()));
}

MonteCarloKld kld_monte_carlo(const FittedDensity& p, const FittedDensity& q,
                              std::size_t n_draws, std::uint64_t seed) {
    if (n_draws < 1000) throw DomainError("kld_monte_carlo needs at least 1000 draws");
    const std::vector<double> ys = sample_density(p, n_draws, seed);
    std::vector<double> lp(n_draws), lq(n_draws);
    log_pdf_batch(p, ys, lp.data());
    log_pdf_batch(q, ys, lq.data());

    const double n = static_cast<double>(n_draws);
    double mean = 0.0;
    for (std::size_t i = 0; i < n_draws; ++i) mean += lp[i] - lq[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < n_draws; ++i) {
        const double d = lp[i] - lq[i] - mean;
        ss += d * d;
    }
    return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

double wasserstein1_to_uniform(std::span<const double> normalized_ranks) {
    if (normalized_ranks.empty())
        throw DomainError("wasserstein1_to_uniform needs a non-empty rank list");
    std::vector<double> r(normalized_ranks.begin(), normalized_ranks.end());
    for (const double v : r)
        if (!(v >= 0.0 && v <= 100.0))
            throw DomainError("rank " + std::to_string(v) + " outside [0, 100]");
    std::sort(r.begin(), r.end());

    const double n = static_cast<double>(r.size());
    double total = 0.0;
    double prev = 0.0;
    for (std::size_t i = 0; i <= r.size(); ++i) {
        const double next = i < r.size() ? r[i] : 100.0;
        const double level = static_cast<double>(i) / n; // F_emp on (prev, next)
        total += segment_area(prev, next, level);
        prev = next;
    }
    return total;
}

double gaussian_kld_closed_form(double mu1, double var1, double mu2, double var2) {
    if (!(var1 > 0.0) || !(var2 > 0.0))
        throw DomainError("gaussian_kld_closed_form requires positive variances");
    const double d = mu1 - mu2;
    return 0.5 * std::log(var2 / var1) + (var1 + d * d) / (2.0 * var2) - 0.5;
}

} // namespace pscore

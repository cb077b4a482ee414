// Divergence and distance kernels between fitted densities, plus the exact
// 1-D Wasserstein distance of an empirical rank sample to the uniform.

#pragma once

#include "pscore/density.hpp"

#include <cstddef>
#include <cstdint>
#include <span>

namespace pscore {

// Trapezoid estimate of the KLD D(p||q) = integral of p * ln(p/q) over the
// union of both guard supports extended by 6 smoothing scales. Requires both
// densities guarded (eps > 0) so the integrand is finite, and
// grid_points >= 1024. Deterministic.
double kld_quadrature(const FittedDensity& p, const FittedDensity& q,
                      std::size_t grid_points = 4096);

struct MonteCarloKld {
    double estimate = 0.0;
    double std_error = 0.0;
};

// Sample mean of ln(p/q) over n_draws draws from p, with the standard error
// of that mean. Requires n_draws >= 1000.
MonteCarloKld kld_monte_carlo(const FittedDensity& p, const FittedDensity& q,
                              std::size_t n_draws, std::uint64_t seed);

// Exact W1 between the empirical distribution of the ranks and Uniform(0,100):
// the integral of |F_emp(t) - t/100| evaluated in closed form piecewise
// between sorted ranks. No binning. Ranks must lie in [0,100].
double wasserstein1_to_uniform(std::span<const double> normalized_ranks);

// ln sqrt(var2/var1) + (var1 + (mu1-mu2)^2) / (2 var2) - 1/2.
// Oracle for the numeric KLD estimators.
double gaussian_kld_closed_form(double mu1, double var1, double mu2, double var2);

} // namespace pscore

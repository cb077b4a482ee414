// 1-D density estimation: Gaussian mixtures fitted with EM (component count
// chosen by BIC) and Gaussian-kernel KDE with Silverman bandwidth. Every
// fitted density carries a guard that mixes in a small uniform component so
// log scores stay finite on held-out values.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

namespace pscore {

struct GaussianComponent {
    double weight = 0.0;
    double mean = 0.0;
    double variance = 0.0;
};

// weights sum to 1; every variance is at or above the fit's variance floor
struct GaussianMixture {
    std::vector<GaussianComponent> components;
};

// points are stored sorted; bandwidth > 0
struct KernelDensity {
    std::vector<double> points;
    double bandwidth = 0.0;
};

// effective pdf = (1-eps) * estimator + eps * Uniform(lo, hi)
struct DensityGuard {
    double eps = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct FittedDensity {
    std::variant<GaussianMixture, KernelDensity> estimator;
    DensityGuard guard;

    const GaussianMixture* gmm() const { return std::get_if<GaussianMixture>(&estimator); }
    const KernelDensity* kde() const { return std::get_if<KernelDensity>(&estimator); }
};

struct GmmFitResult {
    GaussianMixture mixture;
    bool degenerate = false;
    // per-sample average log-likelihood at each EM iteration of the kept
    // restart; non-decreasing except on floor-clamped iterations
    std::vector<double> loglik_trace;
};

// EM from k-means++ style seeding, 3 restarts keeping the best likelihood
// (one restart for k=1, whose stationary point does not depend on the init).
// Samples are sorted internally, so the fit is invariant to input order.
// Throws DomainError when samples.size() < n_components. All-equal samples
// yield a single floor-variance component with the degenerate flag set.
GmmFitResult fit_gmm_em(std::span<const double> samples, std::size_t n_components,
                        std::uint64_t seed, std::size_t max_iter = 200, double tol = 1e-6);

// Fits k = 1..max(1, min(k_max, n/5)) and keeps the fit minimizing
// BIC = -2*loglik + (3k-1)*ln(n); ties break toward smaller k. Fits with a
// component clamped to the variance or weight floor are skipped unless every
// candidate is; then the lowest-BIC one is returned with the degenerate flag.
GmmFitResult select_gmm_bic(std::span<const double> samples, std::size_t k_max,
                            std::uint64_t seed, std::size_t max_iter = 200,
                            double tol = 1e-6);

// h = 0.9 * min(sd, IQR/1.34) * n^(-1/5) with the unbiased sd and Hazen
// quantiles; falls back to sd when IQR is zero, errors when both are.
KernelDensity fit_kde_silverman(std::span<const double> samples);

// Wraps an estimator with the uniform guard. Support spans the fitted
// samples extended by 3 smoothing scales on each side; eps must lie in
// [0, 1e-3].
FittedDensity make_guarded(GaussianMixture estimator, std::span<const double> samples,
                           double eps = 1e-6);
FittedDensity make_guarded(KernelDensity estimator, std::span<const double> samples,
                           double eps = 1e-6);

// Largest component standard deviation, or the KDE bandwidth.
double smoothing_scale(const FittedDensity& density);

// Log of the guarded pdf; finite for every finite y when eps > 0 and
// y lies inside the guard support (floor ln(eps/(hi-lo))).
double log_pdf(const FittedDensity& density, double y);
void log_pdf_batch(const FittedDensity& density, std::span<const double> ys, double* out);

std::vector<double> sample_density(const FittedDensity& density, std::size_t n,
                                   std::uint64_t seed);

// Trapezoid integral of the guarded pdf over the support extended by 6
// smoothing scales; a fitted density returns 1 within 1e-3. Requires
// grid_points >= 256.
double integrate_check(const FittedDensity& density, std::size_t grid_points);

enum class EstimatorKind { gmm_bic, kde };

struct DensityConfig {
    EstimatorKind kind = EstimatorKind::gmm_bic;
    std::size_t k_max = 3; // BIC search cap, gmm_bic only
    double guard_eps = 1e-6;
    std::size_t max_iter = 200;
    double tol = 1e-6;
};

struct DensityFit {
    FittedDensity density;
    bool degenerate = false;
};

// Fit + guard in one step under a config; the seed feeds the EM restarts.
DensityFit fit_density(std::span<const double> samples, const DensityConfig& config,
                       std::uint64_t seed);

} // namespace pscore

#include "pscore/density.hpp"

#include "pscore/error.hpp"
#include "pscore/kernels.hpp"
#include "pscore/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace pscore {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;
constexpr double kMinWeight = 1e-12;
const double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> sorted_copy(std::span<const double> xs) {
    std::vector<double> v(xs.begin(), xs.end());
    std::sort(v.begin(), v.end());
    return v;
}

double variance_floor(double range) {
    const double f = 1e-6 * range;
    return std::max(f * f, 1e-12);
}

double logaddexp(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(std::min(a, b) - m));
}

// Hazen quantile: index p*n - 0.5 with linear interpolation, clamped to the
// data range. Input must be sorted.
double hazen_quantile(const std::vector<double>& s, double p) {
    const double idx = p * static_cast<double>(s.size()) - 0.5;
    if (idx <= 0.0) return s.front();
    if (idx >= static_cast<double>(s.size() - 1)) return s.back();
    const std::size_t i = static_cast<std::size_t>(idx);
    const double frac = idx - static_cast<double>(i);
    return s[i] + frac * (s[i + 1] - s[i]);
}

struct EmScratch {
    std::vector<double> rows; // k * n, holds log joints then responsibilities
    std::vector<double> lse;  // n
};

// One EM run on centered sorted data. Returns the final per-sample average
// log-likelihood; the returned components correspond to the last E-step.
double em_run(const std::vector<double>& x, std::size_t k, Rng& rng,
              std::size_t max_iter, double tol, double floor,
              std::vector<GaussianComponent>& comps, std::vector<double>& trace,
              EmScratch& scratch) {
    const auto& ops = kernels::active();
    const std::size_t n = x.size();

    // k-means++ style seeding: spread the initial means, start with the
    // global variance
    std::vector<double> centers(k);
    centers[0] = x[rng.uniform_int(n)];
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - centers[0];
        d2[i] = d * d;
    }
    for (std::size_t j = 1; j < k; ++j) {
        const double total = ops.sum(d2.data(), n);
        std::size_t pick;
        if (total > 0.0) {
            const double u = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum >= u) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.uniform_int(n);
        }
        centers[j] = x[pick];
        for (std::size_t i = 0; i < n; ++i) {
            const double d = x[i] - centers[j];
            d2[i] = std::min(d2[i], d * d);
        }
    }

    double var0 = 0.0;
    {
        const double mean = ops.sum(x.data(), n) / static_cast<double>(n);
        double ss = 0.0;
        for (const double v : x) ss += (v - mean) * (v - mean);
        var0 = std::max(ss / static_cast<double>(n), floor);
    }
    comps.assign(k, GaussianComponent{});
    for (std::size_t c = 0; c < k; ++c)
        comps[c] = {1.0 / static_cast<double>(k), centers[c], var0};

    scratch.rows.resize(k * n);
    scratch.lse.resize(n);
    double* rows = scratch.rows.data();
    double* lse = scratch.lse.data();

    double prev = kNegInf;
    bool prev_clamped = false;
    for (std::size_t iter = 0; iter < max_iter; ++iter) {
        for (std::size_t c = 0; c < k; ++c) {
            const GaussianComponent& g = comps[c];
            const double coeff = std::log(g.weight) - 0.5 * std::log(kTwoPi * g.variance);
            ops.shifted_sq_affine(x.data(), n, g.mean, 0.5 / g.variance, coeff, rows + c * n);
        }
        ops.logsumexp_columns(rows, k, n, lse);
        const double ll = ops.sum(lse, n) / static_cast<double>(n);
        if (!std::isfinite(ll) && ll != kNegInf)
            throw std::logic_error("EM log-likelihood became NaN");
        trace.push_back(ll);
        if (iter > 0) {
            if (!prev_clamped && ll < prev - 1e-9)
                throw std::logic_error("EM log-likelihood decreased from " +
                                       std::to_string(prev) + " to " + std::to_string(ll));
            if (ll - prev < tol) return ll;
        }
        if (iter + 1 == max_iter) return ll;
        prev = ll;

        // columns no component covers (possible once variances hit the
        // floor) would yield NaN responsibilities; treat them as uniform
        for (std::size_t i = 0; i < n; ++i)
            if (lse[i] == kNegInf) {
                lse[i] = 0.0;
                for (std::size_t c = 0; c < k; ++c)
                    rows[c * n + i] = -std::log(static_cast<double>(k));
            }

        bool clamped = false;
        double wsum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            ops.exp_sub(rows + c * n, lse, n, rows + c * n);
            double m0, m1, m2;
            ops.weighted_moments(rows + c * n, x.data(), n, &m0, &m1, &m2);
            double w = m0 / static_cast<double>(n);
            if (!(w > kMinWeight)) {
                // starved component: keep its location, floor its weight
                w = kMinWeight;
                clamped = true;
            } else {
                const double mean = m1 / m0;
                double var = m2 / m0 - mean * mean;
                if (!(var >= floor)) {
                    var = floor;
                    clamped = true;
                }
                comps[c].mean = mean;
                comps[c].variance = var;
            }
            comps[c].weight = w;
            wsum += w;
        }
        for (std::size_t c = 0; c < k; ++c) comps[c].weight /= wsum;
        prev_clamped = clamped;
    }
    return prev; // not reached; loop exits via the iter checks
}

GmmFitResult fit_gmm_sorted(const std::vector<double>& x, std::size_t n_components,
                            std::uint64_t seed, std::size_t max_iter, double tol,
                            EmScratch& scratch) {
    if (n_components < 1) throw DomainError("n_components must be at least 1");
    if (x.size() < n_components)
        throw DomainError("cannot fit " + std::to_string(n_components) +
                          " components to " + std::to_string(x.size()) + " samples");
    if (max_iter < 1) throw DomainError("max_iter must be at least 1");
    if (!(tol > 0.0)) throw DomainError("tol must be positive");

    GmmFitResult out;
    const double range = x.back() - x.front();
    if (range == 0.0) {
        const double v = variance_floor(0.0);
        out.mixture.components = {{1.0, x.front(), v}};
        out.degenerate = true;
        out.loglik_trace = {-0.5 * std::log(kTwoPi * v)};
        return out;
    }

    // center the data so within-component moments do not cancel against a
    // large common offset; shift the means back afterwards
    const double shift =
        kernels::active().sum(x.data(), x.size()) / static_cast<double>(x.size());
    std::vector<double> centered(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) centered[i] = x[i] - shift;

    const double floor = variance_floor(range);
    const std::size_t restarts = n_components == 1 ? 1 : 3;
    double best_ll = kNegInf;
    std::vector<GaussianComponent> comps, best_comps;
    std::vector<double> trace, best_trace;
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, "em", std::to_string(n_components), std::to_string(r)));
        comps.clear();
        trace.clear();
        const double ll =
            em_run(centered, n_components, rng, max_iter, tol, floor, comps, trace, scratch);
        if (r == 0 || ll > best_ll) {
            best_ll = ll;
            best_comps = comps;
            best_trace = trace;
        }
    }
    for (auto& c : best_comps) c.mean += shift;
    out.mixture.components = std::move(best_comps);
    out.loglik_trace = std::move(best_trace);
    return out;
}

double gmm_log_pdf_one(const GaussianMixture& g, double y) {
    double acc = kNegInf;
    for (const GaussianComponent& c : g.components) {
        const double d = y - c.mean;
        acc = logaddexp(acc, std::log(c.weight) - 0.5 * std::log(kTwoPi * c.variance) -
                                 d * d / (2.0 * c.variance));
    }
    return acc;
}

// Sorted kernel centers let us restrict the sum to the points that matter:
// terms more than e^-45 below the nearest kernel cannot move the result.
double kde_log_pdf_one(const KernelDensity& k, double y, std::vector<double>& buf) {
    const auto& ops = kernels::active();
    const auto& p = k.points;
    const double h = k.bandwidth;

    const auto it = std::lower_bound(p.begin(), p.end(), y);
    double dnear = std::numeric_limits<double>::infinity();
    if (it != p.end()) dnear = *it - y;
    if (it != p.begin()) dnear = std::min(dnear, y - *(it - 1));
    const double win = std::sqrt(dnear * dnear + 90.0 * h * h);

    const auto lo = std::lower_bound(p.begin(), p.end(), y - win);
    const auto hi = std::upper_bound(p.begin(), p.end(), y + win);
    const std::size_t m = static_cast<std::size_t>(hi - lo);
    buf.resize(m);
    ops.shifted_sq_affine(&*lo, m, y, 0.5 / (h * h), 0.0, buf.data());
    const double mx = ops.max_value(buf.data(), m);
    if (mx == kNegInf) return kNegInf; // y astronomically far from all points
    const double s = ops.exp_shift_sum(buf.data(), m, mx);
    return mx + std::log(s) - std::log(static_cast<double>(p.size())) -
           0.5 * std::log(kTwoPi * h * h);
}

double apply_guard(const DensityGuard& g, double est_lp, double y) {
    if (g.eps <= 0.0) return est_lp;
    const double thinned = std::log1p(-g.eps) + est_lp;
    if (y < g.lo || y > g.hi) return thinned;
    return logaddexp(thinned, std::log(g.eps) - std::log(g.hi - g.lo));
}

FittedDensity make_guarded_impl(std::variant<GaussianMixture, KernelDensity> est,
                                std::span<const double> samples, double eps) {
    if (samples.empty()) throw DomainError("cannot build a guard around zero samples");
    if (!(eps >= 0.0 && eps <= 1e-3))
        throw DomainError("guard eps must lie in [0, 1e-3], got " + std::to_string(eps));
    FittedDensity d;
    d.estimator = std::move(est);
    const double s = smoothing_scale(d);
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    d.guard = {eps, *mn - 3.0 * s, *mx + 3.0 * s};
    if (!(d.guard.lo < d.guard.hi)) throw DomainError("guard support is empty");
    return d;
}

} // namespace

GmmFitResult fit_gmm_em(std::span<const double> samples, std::size_t n_components,
                        std::uint64_t seed, std::size_t max_iter, double tol) {
    EmScratch scratch;
    return fit_gmm_sorted(sorted_copy(samples), n_components, seed, max_iter, tol, scratch);
}

// A component sitting on the variance or weight floor is a clamp artifact
// (one stray point can buy more likelihood than the BIC penalty costs), not
// a stationary point of the likelihood.
bool collapsed_fit(const GmmFitResult& fit, double floor) {
    if (fit.degenerate) return true;
    for (const GaussianComponent& c : fit.mixture.components)
        if (c.variance <= floor || c.weight <= 2.0 * kMinWeight) return true;
    return false;
}

GmmFitResult select_gmm_bic(std::span<const double> samples, std::size_t k_max,
                            std::uint64_t seed, std::size_t max_iter, double tol) {
    if (samples.size() < 2) throw DomainError("BIC selection needs at least 2 samples");
    if (k_max < 1) throw DomainError("k_max must be at least 1");
    const std::vector<double> x = sorted_copy(samples);
    const std::size_t n = x.size();
    const std::size_t cap = std::max<std::size_t>(1, std::min(k_max, n / 5));
    const double floor = variance_floor(x.back() - x.front());

    EmScratch scratch;
    GmmFitResult best, best_clean;
    double best_bic = std::numeric_limits<double>::infinity();
    double best_clean_bic = std::numeric_limits<double>::infinity();
    bool have_clean = false;
    for (std::size_t k = 1; k <= cap; ++k) {
        GmmFitResult fit = fit_gmm_sorted(x, k, seed, max_iter, tol, scratch);
        const bool stop = fit.degenerate; // all samples equal; higher k cannot differ
        const bool collapsed = collapsed_fit(fit, floor);
        const double total_ll = fit.loglik_trace.back() * static_cast<double>(n);
        const double params = 3.0 * static_cast<double>(k) - 1.0;
        const double bic = -2.0 * total_ll + params * std::log(static_cast<double>(n));
        if (!collapsed) {
            if (bic < best_clean_bic) {
                best_clean_bic = bic;
                best_clean = std::move(fit);
            }
            have_clean = true;
        } else if (!have_clean && bic < best_bic) {
            best_bic = bic;
            best = std::move(fit);
        }
        if (stop) break;
    }
    if (have_clean) return best_clean;
    best.degenerate = true;
    return best;
}

KernelDensity fit_kde_silverman(std::span<const double> samples) {
    if (samples.size() < 2) throw DomainError("KDE needs at least 2 samples");
    std::vector<double> x = sorted_copy(samples);
    const std::size_t n = x.size();

    const double mean =
        kernels::active().sum(x.data(), n) / static_cast<double>(n);
    double ss = 0.0;
    for (const double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (sd == 0.0) throw DomainError("KDE requires samples with nonzero spread");

    const double iqr = hazen_quantile(x, 0.75) - hazen_quantile(x, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    const double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    return {std::move(x), h};
}

FittedDensity make_guarded(GaussianMixture estimator, std::span<const double> samples,
                           double eps) {
    return make_guarded_impl(std::move(estimator), samples, eps);
}

FittedDensity make_guarded(KernelDensity estimator, std::span<const double> samples,
                           double eps) {
    return make_guarded_impl(std::move(estimator), samples, eps);
}

double smoothing_scale(const FittedDensity& density) {
    if (const GaussianMixture* g = density.gmm()) {
        double vmax = 0.0;
        for (const auto& c : g->components) vmax = std::max(vmax, c.variance);
        return std::sqrt(vmax);
    }
    return density.kde()->bandwidth;
}

double log_pdf(const FittedDensity& density, double y) {
    double est;
    if (const GaussianMixture* g = density.gmm()) {
        est = gmm_log_pdf_one(*g, y);
    } else {
        std::vector<double> buf;
        est = kde_log_pdf_one(*density.kde(), y, buf);
    }
    return apply_guard(density.guard, est, y);
}

void log_pdf_batch(const FittedDensity& density, std::span<const double> ys, double* out) {
    const std::size_t n = ys.size();
    if (n == 0) return;
    if (const GaussianMixture* g = density.gmm()) {
        const auto& ops = kernels::active();
        const std::size_t k = g->components.size();
        std::vector<double> rows(k * n);
        for (std::size_t c = 0; c < k; ++c) {
            const GaussianComponent& gc = g->components[c];
            const double coeff =
                std::log(gc.weight) - 0.5 * std::log(kTwoPi * gc.variance);
            ops.shifted_sq_affine(ys.data(), n, gc.mean, 0.5 / gc.variance, coeff,
                                  rows.data() + c * n);
        }
        ops.logsumexp_columns(rows.data(), k, n, out);
    } else {
        const KernelDensity& k = *density.kde();
        std::vector<double> buf;
        for (std::size_t i = 0; i < n; ++i) out[i] = kde_log_pdf_one(k, ys[i], buf);
    }
    for (std::size_t i = 0; i < n; ++i) out[i] = apply_guard(density.guard, out[i], ys[i]);
}

std::vector<double> sample_density(const FittedDensity& density, std::size_t n,
                                   std::uint64_t seed) {
    if (n < 1) throw DomainError("sample_density needs n >= 1");
    Rng rng(seed);
    std::vector<double> out(n);
    const DensityGuard& g = density.guard;
    for (std::size_t i = 0; i < n; ++i) {
        if (g.eps > 0.0 && rng.uniform() < g.eps) {
            out[i] = rng.uniform(g.lo, g.hi);
            continue;
        }
        if (const GaussianMixture* mix = density.gmm()) {
            const double u = rng.uniform();
            double cum = 0.0;
            const GaussianComponent* chosen = &mix->components.back();
            for (const auto& c : mix->components) {
                cum += c.weight;
                if (u < cum) {
                    chosen = &c;
                    break;
                }
            }
            out[i] = rng.normal(chosen->mean, std::sqrt(chosen->variance));
        } else {
            const KernelDensity& kde = *density.kde();
            const std::size_t j = rng.uniform_int(kde.points.size());
            out[i] = rng.normal(kde.points[j], kde.bandwidth);
        }
    }
    return out;
}

double integrate_check(const FittedDensity& density, std::size_t grid_points) {
    if (grid_points < 256) throw DomainError("integrate_check needs at least 256 grid points");
    const double s = smoothing_scale(density);
    const double a = density.guard.lo - 6.0 * s;
    const double b = density.guard.hi + 6.0 * s;
    std::vector<double> ys(grid_points), lp(grid_points);
    const double step = (b - a) / static_cast<double>(grid_points - 1);
    for (std::size_t i = 0; i < grid_points; ++i)
        ys[i] = a + step * static_cast<double>(i);
    log_pdf_batch(density, ys, lp.data());
    const auto& ops = kernels::active();
    ops.exp_batch(lp.data(), grid_points, lp.data());
    return step * (ops.sum(lp.data(), grid_points) - 0.5 * (lp.front() + lp.back()));
}

DensityFit fit_density(std::span<const double> samples, const DensityConfig& config,
                       std::uint64_t seed) {
    if (config.kind == EstimatorKind::gmm_bic) {
        GmmFitResult r =
            select_gmm_bic(samples, config.k_max, seed, config.max_iter, config.tol);
        return {make_guarded(std::move(r.mixture), samples, config.guard_eps), r.degenerate};
    }
    return {make_guarded(fit_kde_silverman(samples), samples, config.guard_eps), false};
}

} // namespace pscore

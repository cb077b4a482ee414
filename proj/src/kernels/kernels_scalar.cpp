// Scalar reference implementations. These define the semantics the SIMD
// variants are tested against.

#include "pscore/kernels.hpp"

#include <cmath>
#include <limits>

namespace pscore::kernels {
namespace {

void shifted_sq_affine_scalar(const double* x, std::size_t n, double mu,
                              double scale, double coeff, double* out) {
    for (std::size_t i = 0; i < n; ++i) {
        const double d = x[i] - mu;
        out[i] = coeff - scale * d * d;
    }
}

void logsumexp_columns_scalar(const double* rows, std::size_t k, std::size_t n,
                              double* lse) {
    for (std::size_t i = 0; i < n; ++i) {
        double m = rows[i];
        for (std::size_t c = 1; c < k; ++c) m = std::max(m, rows[c * n + i]);
        if (m == -std::numeric_limits<double>::infinity()) {
            lse[i] = m; // every term is zero; avoid exp(-inf - -inf)
            continue;
        }
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += std::exp(rows[c * n + i] - m);
        lse[i] = m + std::log(s);
    }
}

void exp_sub_scalar(const double* a, const double* b, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(a[i] - b[i]);
}

void exp_batch_scalar(const double* x, std::size_t n, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x[i]);
}

void weighted_moments_scalar(const double* w, const double* x, std::size_t n,
                             double* m0, double* m1, double* m2) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double wi = w[i];
        const double xi = x[i];
        s0 += wi;
        s1 += wi * xi;
        s2 += wi * xi * xi;
    }
    *m0 = s0;
    *m1 = s1;
    *m2 = s2;
}

double max_value_scalar(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

double exp_shift_sum_scalar(const double* x, std::size_t n, double shift) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::exp(x[i] - shift);
    return s;
}

double sum_scalar(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

} // namespace

const Ops& scalar() {
    static const Ops ops = {
        "scalar",
        &shifted_sq_affine_scalar,
        &logsumexp_columns_scalar,
        &exp_sub_scalar,
        &exp_batch_scalar,
        &weighted_moments_scalar,
        &max_value_scalar,
        &exp_shift_sum_scalar,
        &sum_scalar,
    };
    return ops;
}

} // namespace pscore::kernels

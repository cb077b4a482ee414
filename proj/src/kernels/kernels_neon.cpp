// NEON kernel variant for aarch64. Same reduction and polynomial scheme as
// the AVX2 table, two lanes wide. NEON is baseline on aarch64 so there is no
// runtime feature probe.

#if defined(__aarch64__)

#include "kernels_internal.hpp"

#include <arm_neon.h>
#include <cmath>
#include <cstdint>
#include <limits>

namespace pscore::kernels {
namespace {

inline float64x2_t exp2d(float64x2_t x) {
    const float64x2_t log2e = vdupq_n_f64(1.4426950408889634073599);
    const float64x2_t c1 = vdupq_n_f64(6.93145751953125e-1);
    const float64x2_t c2 = vdupq_n_f64(1.42860682030941723212e-6);

    const float64x2_t p0 = vdupq_n_f64(1.26177193074810590878e-4);
    const float64x2_t p1 = vdupq_n_f64(3.02994407707441961300e-2);
    const float64x2_t p2 = vdupq_n_f64(9.99999999999999999910e-1);
    const float64x2_t q0 = vdupq_n_f64(3.00198505138664455042e-6);
    const float64x2_t q1 = vdupq_n_f64(2.52448340349684104192e-3);
    const float64x2_t q2 = vdupq_n_f64(2.27265548208155028766e-1);
    const float64x2_t q3 = vdupq_n_f64(2.00000000000000000005e0);

    const float64x2_t hi = vdupq_n_f64(709.782712893384);
    const float64x2_t lo = vdupq_n_f64(-746.0);

    const uint64x2_t not_nan = vceqq_f64(x, x);
    const uint64x2_t inf_mask = vcgtq_f64(x, hi);

    float64x2_t xc = vminq_f64(vmaxq_f64(x, lo), hi);

    const float64x2_t n = vrndnq_f64(vmulq_f64(xc, log2e));
    float64x2_t r = vfmsq_f64(xc, n, c1);
    r = vfmsq_f64(r, n, c2);

    const float64x2_t rr = vmulq_f64(r, r);
    float64x2_t px = vfmaq_f64(p1, p0, rr);
    px = vfmaq_f64(p2, px, rr);
    px = vmulq_f64(px, r);
    float64x2_t qx = vfmaq_f64(q1, q0, rr);
    qx = vfmaq_f64(q2, qx, rr);
    qx = vfmaq_f64(q3, qx, rr);
    const float64x2_t ratio = vdivq_f64(px, vsubq_f64(qx, px));
    float64x2_t e = vfmaq_f64(vdupq_n_f64(1.0), vdupq_n_f64(2.0), ratio);

    const int64x2_t ni = vcvtq_s64_f64(n);
    const int64x2_t biased = vaddq_s64(ni, vdupq_n_s64(2048));
    const int64x2_t n1 = vsubq_s64(
        vreinterpretq_s64_u64(vshrq_n_u64(vreinterpretq_u64_s64(biased), 1)),
        vdupq_n_s64(1024));
    const int64x2_t n2 = vsubq_s64(ni, n1);
    const int64x2_t bias = vdupq_n_s64(1023);
    const float64x2_t s1 =
        vreinterpretq_f64_s64(vshlq_n_s64(vaddq_s64(n1, bias), 52));
    const float64x2_t s2 =
        vreinterpretq_f64_s64(vshlq_n_s64(vaddq_s64(n2, bias), 52));
    e = vmulq_f64(vmulq_f64(e, s1), s2);

    e = vbslq_f64(inf_mask, vdupq_n_f64(std::numeric_limits<double>::infinity()), e);
    e = vbslq_f64(not_nan, e, x);
    return e;
}

inline float64x2_t log2d(float64x2_t x) {
    const uint64x2_t bits = vreinterpretq_u64_f64(x);
    int64x2_t ei = vsubq_s64(
        vreinterpretq_s64_u64(vandq_u64(vshrq_n_u64(bits, 52), vdupq_n_u64(0x7ff))),
        vdupq_n_s64(1022));
    float64x2_t m = vreinterpretq_f64_u64(
        vorrq_u64(vandq_u64(bits, vdupq_n_u64(0x000fffffffffffffULL)),
                  vdupq_n_u64(0x3fe0000000000000ULL)));

    const uint64x2_t below = vcltq_f64(m, vdupq_n_f64(0.70710678118654752440));
    ei = vsubq_s64(ei, vreinterpretq_s64_u64(vshrq_n_u64(below, 63)));
    m = vbslq_f64(below, vaddq_f64(m, m), m);
    const float64x2_t z = vsubq_f64(m, vdupq_n_f64(1.0));

    const float64x2_t P0 = vdupq_n_f64(1.01875663804580931796e-4);
    const float64x2_t P1 = vdupq_n_f64(4.97494994976747001425e-1);
    const float64x2_t P2 = vdupq_n_f64(4.70579119878881725854e0);
    const float64x2_t P3 = vdupq_n_f64(1.44989225341610930846e1);
    const float64x2_t P4 = vdupq_n_f64(1.79368678507819816313e1);
    const float64x2_t P5 = vdupq_n_f64(7.70838733755885391666e0);
    const float64x2_t Q0 = vdupq_n_f64(1.12873587189167450590e1);
    const float64x2_t Q1 = vdupq_n_f64(4.52279145837532221105e1);
    const float64x2_t Q2 = vdupq_n_f64(8.29875266912776603211e1);
    const float64x2_t Q3 = vdupq_n_f64(7.11544750618563894466e1);
    const float64x2_t Q4 = vdupq_n_f64(2.31251620126765340583e1);

    float64x2_t p = vfmaq_f64(P1, P0, z);
    p = vfmaq_f64(P2, p, z);
    p = vfmaq_f64(P3, p, z);
    p = vfmaq_f64(P4, p, z);
    p = vfmaq_f64(P5, p, z);
    float64x2_t q = vaddq_f64(z, Q0);
    q = vfmaq_f64(Q1, q, z);
    q = vfmaq_f64(Q2, q, z);
    q = vfmaq_f64(Q3, q, z);
    q = vfmaq_f64(Q4, q, z);

    const float64x2_t zz = vmulq_f64(z, z);
    float64x2_t y = vmulq_f64(vmulq_f64(z, zz), vdivq_f64(p, q));
    y = vfmsq_f64(y, vdupq_n_f64(0.5), zz);

    const float64x2_t e = vcvtq_f64_s64(ei);
    float64x2_t res = vaddq_f64(z, y);
    res = vfmsq_f64(res, e, vdupq_n_f64(2.121944400546905827679e-4));
    res = vfmaq_f64(res, e, vdupq_n_f64(0.693359375));
    return res;
}

inline double hsum(float64x2_t v) { return vgetq_lane_f64(v, 0) + vgetq_lane_f64(v, 1); }
inline double hmax(float64x2_t v) {
    return std::max(vgetq_lane_f64(v, 0), vgetq_lane_f64(v, 1));
}

void shifted_sq_affine_neon(const double* x, std::size_t n, double mu,
                            double scale, double coeff, double* out) {
    const float64x2_t vmu = vdupq_n_f64(mu);
    const float64x2_t vs = vdupq_n_f64(scale);
    const float64x2_t vc = vdupq_n_f64(coeff);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vmu);
        vst1q_f64(out + i, vfmsq_f64(vc, vmulq_f64(vs, d), d));
    }
    for (; i < n; ++i) {
        const double d = x[i] - mu;
        out[i] = coeff - scale * d * d;
    }
}

void logsumexp_columns_neon(const double* rows, std::size_t k, std::size_t n,
                            double* lse) {
    const float64x2_t ninf = vdupq_n_f64(-std::numeric_limits<double>::infinity());
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t m = vld1q_f64(rows + i);
        for (std::size_t c = 1; c < k; ++c) m = vmaxq_f64(m, vld1q_f64(rows + c * n + i));
        float64x2_t s = vdupq_n_f64(0.0);
        for (std::size_t c = 0; c < k; ++c)
            s = vaddq_f64(s, exp2d(vsubq_f64(vld1q_f64(rows + c * n + i), m)));
        // lanes whose max is -inf hold all-zero terms; m + log(s) would be NaN
        const float64x2_t res = vaddq_f64(m, log2d(s));
        const uint64x2_t empty = vceqq_f64(m, ninf);
        vst1q_f64(lse + i, vbslq_f64(empty, m, res));
    }
    for (; i < n; ++i) {
        double m = rows[i];
        for (std::size_t c = 1; c < k; ++c) m = std::max(m, rows[c * n + i]);
        if (m == -std::numeric_limits<double>::infinity()) {
            lse[i] = m;
            continue;
        }
        double s = 0.0;
        for (std::size_t c = 0; c < k; ++c) s += std::exp(rows[c * n + i] - m);
        lse[i] = m + std::log(s);
    }
}

void exp_sub_neon(const double* a, const double* b, std::size_t n, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(out + i, exp2d(vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i))));
    for (; i < n; ++i) out[i] = std::exp(a[i] - b[i]);
}

void exp_batch_neon(const double* x, std::size_t n, double* out) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, exp2d(vld1q_f64(x + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void weighted_moments_neon(const double* w, const double* x, std::size_t n,
                           double* m0, double* m1, double* m2) {
    float64x2_t s0 = vdupq_n_f64(0.0);
    float64x2_t s1 = vdupq_n_f64(0.0);
    float64x2_t s2 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t wi = vld1q_f64(w + i);
        const float64x2_t xi = vld1q_f64(x + i);
        const float64x2_t wx = vmulq_f64(wi, xi);
        s0 = vaddq_f64(s0, wi);
        s1 = vaddq_f64(s1, wx);
        s2 = vfmaq_f64(s2, wx, xi);
    }
    double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2);
    for (; i < n; ++i) {
        t0 += w[i];
        t1 += w[i] * x[i];
        t2 += w[i] * x[i] * x[i];
    }
    *m0 = t0;
    *m1 = t1;
    *m2 = t2;
}

double max_value_neon(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 2) {
        float64x2_t vm = vld1q_f64(x);
        for (i = 2; i + 2 <= n; i += 2) vm = vmaxq_f64(vm, vld1q_f64(x + i));
        m = hmax(vm);
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

double exp_shift_sum_neon(const double* x, std::size_t n, double shift) {
    const float64x2_t vs = vdupq_n_f64(shift);
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        acc = vaddq_f64(acc, exp2d(vsubq_f64(vld1q_f64(x + i), vs)));
    double s = hsum(acc);
    for (; i < n; ++i) s += std::exp(x[i] - shift);
    return s;
}

double sum_neon(const double* x, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

} // namespace

const Ops& neon() {
    static const Ops ops = {
        "neon",
        &shifted_sq_affine_neon,
        &logsumexp_columns_neon,
        &exp_sub_neon,
        &exp_batch_neon,
        &weighted_moments_neon,
        &max_value_neon,
        &exp_shift_sum_neon,
        &sum_neon,
    };
    return ops;
}

} // namespace pscore::kernels

#endif // aarch64

// AVX2+FMA kernel variant. Only entered after the dispatcher has confirmed
// CPU support; everything here assumes avx2 and fma are available.

#if defined(__x86_64__) || defined(__i386__)

#include "kernels_internal.hpp"

#include <cmath>
#include <cstdint>
#include <immintrin.h>
#include <limits>

namespace pscore::kernels {
namespace {

// ---- int64 <-> double lane conversions (valid for |v| < 2^51) ----

const __m256i kMagicBits = _mm256_set1_epi64x(0x4338000000000000LL);
const double kMagic = 6755399441055744.0; // 2^52 + 2^51

inline __m256d i64_to_f64(__m256i v) {
    const __m256i x = _mm256_add_epi64(v, kMagicBits);
    return _mm256_sub_pd(_mm256_castsi256_pd(x), _mm256_set1_pd(kMagic));
}

inline __m256i f64_to_i64(__m256d v) {
    const __m256d x = _mm256_add_pd(v, _mm256_set1_pd(kMagic));
    return _mm256_sub_epi64(_mm256_castpd_si256(x), kMagicBits);
}

// ---- exp on 4 lanes ----
//
// Range reduction x = n*ln2 + r with |r| <= ln2/2, then the Cephes rational
// approximation e^r = 1 + 2 r P(r^2) / (Q(r^2) - r P(r^2)), scaled by 2^n in
// two steps so gradual underflow keeps working. Overflow saturates to +inf,
// NaN propagates.

inline __m256d exp4(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
    const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);

    const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
    const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
    const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
    const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
    const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
    const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
    const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);

    const __m256d hi = _mm256_set1_pd(709.782712893384);
    const __m256d lo = _mm256_set1_pd(-746.0);

    const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
    const __m256d inf_mask = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);

    // Clamp so the integer part of the reduction stays in a safe range;
    // x <= -746 underflows to zero through the final scaling anyway.
    __m256d xc = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

    const __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e),
                                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, c1, xc);
    r = _mm256_fnmadd_pd(n, c2, r);

    const __m256d rr = _mm256_mul_pd(r, r);
    __m256d px = _mm256_fmadd_pd(p0, rr, p1);
    px = _mm256_fmadd_pd(px, rr, p2);
    px = _mm256_mul_pd(px, r);
    __m256d qx = _mm256_fmadd_pd(q0, rr, q1);
    qx = _mm256_fmadd_pd(qx, rr, q2);
    qx = _mm256_fmadd_pd(qx, rr, q3);
    const __m256d ratio = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
    __m256d e = _mm256_fmadd_pd(_mm256_set1_pd(2.0), ratio, _mm256_set1_pd(1.0));

    // 2^n in two halves: n1 = floor(n/2), n2 = n - n1, both within the
    // normal exponent range.
    const __m256i ni = f64_to_i64(n);
    const __m256i biased = _mm256_add_epi64(ni, _mm256_set1_epi64x(2048));
    const __m256i n1 = _mm256_sub_epi64(_mm256_srli_epi64(biased, 1),
                                        _mm256_set1_epi64x(1024));
    const __m256i n2 = _mm256_sub_epi64(ni, n1);
    const __m256i bias = _mm256_set1_epi64x(1023);
    const __m256d s1 = _mm256_castsi256_pd(
        _mm256_slli_epi64(_mm256_add_epi64(n1, bias), 52));
    const __m256d s2 = _mm256_castsi256_pd(
        _mm256_slli_epi64(_mm256_add_epi64(n2, bias), 52));
    e = _mm256_mul_pd(_mm256_mul_pd(e, s1), s2);

    e = _mm256_blendv_pd(e, _mm256_set1_pd(std::numeric_limits<double>::infinity()),
                         inf_mask);
    e = _mm256_blendv_pd(e, x, nan_mask);
    return e;
}

// ---- log on 4 lanes (positive normal inputs) ----
//
// frexp-style decomposition into m * 2^e with m in [sqrt(1/2), sqrt(2)),
// then the Cephes rational approximation of log(1+z) around z = m - 1.

inline __m256d log4(__m256d x) {
    const __m256i mant_mask = _mm256_set1_epi64x(0x000fffffffffffffLL);
    const __m256i half_bits = _mm256_set1_epi64x(0x3fe0000000000000LL);

    const __m256i bits = _mm256_castpd_si256(x);
    __m256i ei = _mm256_sub_epi64(
        _mm256_and_si256(_mm256_srli_epi64(bits, 52), _mm256_set1_epi64x(0x7ff)),
        _mm256_set1_epi64x(1022));
    __m256d m = _mm256_castsi256_pd(
        _mm256_or_si256(_mm256_and_si256(bits, mant_mask), half_bits)); // [0.5, 1)

    const __m256d sqrth = _mm256_set1_pd(0.70710678118654752440);
    const __m256d below = _mm256_cmp_pd(m, sqrth, _CMP_LT_OQ);
    // e -= 1 and m *= 2 where m < sqrt(1/2)
    ei = _mm256_sub_epi64(ei, _mm256_srli_epi64(_mm256_castpd_si256(below), 63));
    m = _mm256_blendv_pd(m, _mm256_add_pd(m, m), below);
    const __m256d z = _mm256_sub_pd(m, _mm256_set1_pd(1.0));

    const __m256d P0 = _mm256_set1_pd(1.01875663804580931796e-4);
    const __m256d P1 = _mm256_set1_pd(4.97494994976747001425e-1);
    const __m256d P2 = _mm256_set1_pd(4.70579119878881725854e0);
    const __m256d P3 = _mm256_set1_pd(1.44989225341610930846e1);
    const __m256d P4 = _mm256_set1_pd(1.79368678507819816313e1);
    const __m256d P5 = _mm256_set1_pd(7.70838733755885391666e0);
    const __m256d Q0 = _mm256_set1_pd(1.12873587189167450590e1);
    const __m256d Q1 = _mm256_set1_pd(4.52279145837532221105e1);
    const __m256d Q2 = _mm256_set1_pd(8.29875266912776603211e1);
    const __m256d Q3 = _mm256_set1_pd(7.11544750618563894466e1);
    const __m256d Q4 = _mm256_set1_pd(2.31251620126765340583e1);

    __m256d p = _mm256_fmadd_pd(P0, z, P1);
    p = _mm256_fmadd_pd(p, z, P2);
    p = _mm256_fmadd_pd(p, z, P3);
    p = _mm256_fmadd_pd(p, z, P4);
    p = _mm256_fmadd_pd(p, z, P5);
    __m256d q = _mm256_add_pd(z, Q0);
    q = _mm256_fmadd_pd(q, z, Q1);
    q = _mm256_fmadd_pd(q, z, Q2);
    q = _mm256_fmadd_pd(q, z, Q3);
    q = _mm256_fmadd_pd(q, z, Q4);

    const __m256d zz = _mm256_mul_pd(z, z);
    __m256d y = _mm256_mul_pd(_mm256_mul_pd(z, zz), _mm256_div_pd(p, q));
    y = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), zz, y);

    const __m256d e = i64_to_f64(ei);
    __m256d res = _mm256_add_pd(z, y);
    res = _mm256_fnmadd_pd(e, _mm256_set1_pd(2.121944400546905827679e-4), res);
    res = _mm256_fmadd_pd(e, _mm256_set1_pd(0.693359375), res);
    return res;
}

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d m = _mm_max_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

// ---- kernel entry points ----

void shifted_sq_affine_avx2(const double* x, std::size_t n, double mu,
                            double scale, double coeff, double* out) {
    const __m256d vmu = _mm256_set1_pd(mu);
    const __m256d vs = _mm256_set1_pd(scale);
    const __m256d vc = _mm256_set1_pd(coeff);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), vmu);
        _mm256_storeu_pd(out + i, _mm256_fnmadd_pd(_mm256_mul_pd(vs, d), d, vc));
    }
    for (; i < n; ++i) {
        const double d = x[i] - mu;
        out[i] = coeff - scale * d * d;
    }
}

void logsumexp_columns_avx2(const double* rows, std::size_t k, std::size_t n,
                            double* lse) {
    const __m256d ninf = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d m = _mm256_loadu_pd(rows + i);
        for (std::size_t c = 1; c < k; ++c)
            m = _mm256_max_pd(m, _mm256_loadu_pd(rows + c * n + i));
        __m256d s = _mm256_setzero_pd();
        for (std::size_t c = 0; c < k; ++c)
            s = _mm256_add_pd(s, exp4(_mm256_sub_pd(_mm256_loadu_pd(rows + c * n + i), m)));
        // lanes whose max is -inf hold all-zero terms; m + log(s) would be NaN
        const __m256d res = _mm256_add_pd(m, log4(s));
        const __m256d empty = _mm256_cmp_pd(m, ninf, _CMP_EQ_OQ);
        _mm256_storeu_pd(lse + i, _mm256_blendv_pd(res, m, empty));
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

void exp_sub_avx2(const double* a, const double* b, std::size_t n, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i,
                         exp4(_mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i))));
    for (; i < n; ++i) out[i] = std::exp(a[i] - b[i]);
}

void exp_batch_avx2(const double* x, std::size_t n, double* out) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, exp4(_mm256_loadu_pd(x + i)));
    for (; i < n; ++i) out[i] = std::exp(x[i]);
}

void weighted_moments_avx2(const double* w, const double* x, std::size_t n,
                           double* m0, double* m1, double* m2) {
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d wi = _mm256_loadu_pd(w + i);
        const __m256d xi = _mm256_loadu_pd(x + i);
        const __m256d wx = _mm256_mul_pd(wi, xi);
        s0 = _mm256_add_pd(s0, wi);
        s1 = _mm256_add_pd(s1, wx);
        s2 = _mm256_fmadd_pd(wx, xi, s2);
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

double max_value_avx2(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        m = hmax(vm);
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

double exp_shift_sum_avx2(const double* x, std::size_t n, double shift) {
    const __m256d vs = _mm256_set1_pd(shift);
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(_mm256_loadu_pd(x + i), vs)));
    double s = hsum(acc);
    for (; i < n; ++i) s += std::exp(x[i] - shift);
    return s;
}

double sum_avx2(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double s = hsum(acc);
    for (; i < n; ++i) s += x[i];
    return s;
}

} // namespace

const Ops& avx2() {
    static const Ops ops = {
        "avx2",
        &shifted_sq_affine_avx2,
        &logsumexp_columns_avx2,
        &exp_sub_avx2,
        &exp_batch_avx2,
        &weighted_moments_avx2,
        &max_value_avx2,
        &exp_shift_sum_avx2,
        &sum_avx2,
    };
    return ops;
}

} // namespace pscore::kernels

#endif // x86

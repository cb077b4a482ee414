#pragma once

#include <cstddef>
#include <vector>

namespace pscore::kernels {

// Data-parallel inner loops shared by the density fits, the log-pdf batch
// evaluators and the quadrature code. Each operation has a scalar reference
// implementation and, where the target supports it, a SIMD variant (AVX2+FMA
// on x86-64, NEON on aarch64). The active table is chosen once at startup
// from CPU capabilities; PSCORE_KERNELS=scalar|avx2|neon overrides it.
//
// Semantics are defined by the scalar implementation. SIMD variants may
// reassociate reductions and use polynomial exp/log, so results agree to a
// few ulp rather than bit-for-bit; the equivalence test suite pins that down.
struct Ops {
    const char* name;

    // out[i] = coeff - scale * (x[i] - mu)^2
    void (*shifted_sq_affine)(const double* x, std::size_t n, double mu,
                              double scale, double coeff, double* out);

    // lse[i] = log(sum_c exp(rows[c*n + i])) for k row-major rows.
    // Rows must be finite. k >= 1.
    void (*logsumexp_columns)(const double* rows, std::size_t k, std::size_t n,
                              double* lse);

    // out[i] = exp(a[i] - b[i]); out may alias a.
    void (*exp_sub)(const double* a, const double* b, std::size_t n, double* out);

    // out[i] = exp(x[i]); out may alias x.
    void (*exp_batch)(const double* x, std::size_t n, double* out);

    // m0 = sum w[i], m1 = sum w[i]*x[i], m2 = sum w[i]*x[i]^2
    void (*weighted_moments)(const double* w, const double* x, std::size_t n,
                             double* m0, double* m1, double* m2);

    // Maximum element; -inf for n == 0.
    double (*max_value)(const double* x, std::size_t n);

    // sum_i exp(x[i] - shift)
    double (*exp_shift_sum)(const double* x, std::size_t n, double shift);

    // Plain sum.
    double (*sum)(const double* x, std::size_t n);
};

// Always-available reference implementation.
const Ops& scalar();

// Best table for this machine (honours the PSCORE_KERNELS override).
const Ops& active();

// Every table this build can run here, scalar first. Used by the
// equivalence tests.
const std::vector<const Ops*>& available();

} // namespace pscore::kernels

#include <doctest.h>

#include "pscore/kernels.hpp"
#include "pscore/rng.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <string>
#include <vector>

namespace ker = pscore::kernels;

namespace {

// Variant tables must agree with the scalar reference to a few ulp. The
// absolute floor covers the subnormal band of exp where one ulp is a large
// relative step.
void check_close(double ref, double got, double rel, double abs_floor = 1e-300) {
    if (std::isnan(ref)) {
        CHECK(std::isnan(got));
        return;
    }
    if (std::isinf(ref)) {
        CHECK(ref == got);
        return;
    }
    const double scale = std::max(std::fabs(ref), std::fabs(got));
    CHECK(std::fabs(ref - got) <= std::max(rel * scale, abs_floor));
}

std::vector<double> random_values(pscore::Rng& rng, std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

// Sizes straddling the vector width, including empty and odd tails.
const std::size_t kSizes[] = {0, 1, 2, 3, 4, 5, 7, 8, 15, 64, 257, 1000};

} // namespace

TEST_CASE("scalar table is always available and first") {
    const auto& tables = ker::available();
    REQUIRE(!tables.empty());
    CHECK(std::string(tables[0]->name) == "scalar");
    for (std::size_t i = 0; i < tables.size(); ++i)
        for (std::size_t j = i + 1; j < tables.size(); ++j)
            CHECK(std::string(tables[i]->name) != tables[j]->name);
    // active() must be one of the available tables
    const ker::Ops& act = ker::active();
    bool found = false;
    for (const auto* t : tables) found = found || (t == &act);
    CHECK(found);
}

TEST_CASE("shifted_sq_affine matches scalar") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(101);
    for (const auto* t : ker::available()) {
        for (std::size_t n : kSizes) {
            const auto x = random_values(rng, n, -50.0, 50.0);
            std::vector<double> a(n), b(n);
            ref.shifted_sq_affine(x.data(), n, 1.25, 0.5, -0.9189, a.data());
            t->shifted_sq_affine(x.data(), n, 1.25, 0.5, -0.9189, b.data());
            for (std::size_t i = 0; i < n; ++i) check_close(a[i], b[i], 1e-13);
        }
    }
}

TEST_CASE("exp_batch matches scalar on random input") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(102);
    for (const auto* t : ker::available()) {
        for (std::size_t n : kSizes) {
            const auto x = random_values(rng, n, -700.0, 700.0);
            std::vector<double> a(n), b(n);
            ref.exp_batch(x.data(), n, a.data());
            t->exp_batch(x.data(), n, b.data());
            for (std::size_t i = 0; i < n; ++i) check_close(a[i], b[i], 1e-12);
        }
    }
}

TEST_CASE("exp_batch edge cases: overflow, underflow, nan, inf") {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double inf = std::numeric_limits<double>::infinity();
    const std::vector<double> x = {
        0.0,    -0.0,   1.0,     -1.0,   709.0,  709.7,  709.9,  710.0,
        1000.0, inf,    -700.0,  -708.3, -708.5, -710.0, -720.0, -730.0,
        -740.0, -744.0, -745.0,  -745.1, -746.0, -800.0, -inf,   nan,
        1e-300, -1e-300, 0.5,    -0.5,   2.5,    -37.4,  88.0,   -87.3,
    };
    std::vector<double> a(x.size()), b(x.size());
    ker::scalar().exp_batch(x.data(), x.size(), a.data());
    for (const auto* t : ker::available()) {
        t->exp_batch(x.data(), x.size(), b.data());
        for (std::size_t i = 0; i < x.size(); ++i) {
            INFO("table=", t->name, " x=", x[i]);
            check_close(a[i], b[i], 1e-12);
        }
    }
    // sanity against libm semantics, not just self-consistency
    CHECK(a[0] == 1.0);
    CHECK(a[9] == inf);
    CHECK(std::isnan(a[23]));
    CHECK(a[22] == 0.0);
    CHECK(a[7] == inf);   // 710 overflows
    CHECK(a[21] == 0.0);  // -800 underflows to zero
    CHECK(a[18] > 0.0);   // -745 is still representable (subnormal)
}

TEST_CASE("exp_sub matches scalar") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(103);
    for (const auto* t : ker::available()) {
        for (std::size_t n : kSizes) {
            const auto x = random_values(rng, n, -40.0, 10.0);
            const auto y = random_values(rng, n, -5.0, 5.0);
            std::vector<double> a(n), b(n);
            ref.exp_sub(x.data(), y.data(), n, a.data());
            t->exp_sub(x.data(), y.data(), n, b.data());
            for (std::size_t i = 0; i < n; ++i) check_close(a[i], b[i], 1e-12);
        }
    }
}

TEST_CASE("logsumexp_columns matches scalar") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(104);
    for (const auto* t : ker::available()) {
        for (std::size_t k : {std::size_t(1), std::size_t(2), std::size_t(3), std::size_t(8)}) {
            for (std::size_t n : kSizes) {
                const auto rows = random_values(rng, k * n, -80.0, 5.0);
                std::vector<double> a(n), b(n);
                ref.logsumexp_columns(rows.data(), k, n, a.data());
                t->logsumexp_columns(rows.data(), k, n, b.data());
                for (std::size_t i = 0; i < n; ++i) check_close(a[i], b[i], 1e-12);
            }
        }
    }
}

TEST_CASE("logsumexp_columns with one row is exact") {
    pscore::Rng rng(105);
    const std::size_t n = 33;
    const auto rows = random_values(rng, n, -300.0, 300.0);
    for (const auto* t : ker::available()) {
        std::vector<double> out(n);
        t->logsumexp_columns(rows.data(), 1, n, out.data());
        for (std::size_t i = 0; i < n; ++i) CHECK(out[i] == rows[i]);
    }
}

TEST_CASE("logsumexp_columns handles an all -inf column") {
    const double ninf = -std::numeric_limits<double>::infinity();
    const std::size_t k = 2, n = 3;
    // middle column is -inf in both rows
    const std::vector<double> rows = {0.0, ninf, -1.0, -2.0, ninf, -3.0};
    for (const auto* t : ker::available()) {
        std::vector<double> out(n);
        t->logsumexp_columns(rows.data(), k, n, out.data());
        CHECK(out[1] == ninf);
        CHECK(std::isfinite(out[0]));
        CHECK(std::isfinite(out[2]));
    }
}

TEST_CASE("weighted_moments matches scalar") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(106);
    for (const auto* t : ker::available()) {
        for (std::size_t n : kSizes) {
            auto w = random_values(rng, n, 0.0, 1.0);
            const auto x = random_values(rng, n, -10.0, 10.0);
            double a0, a1, a2, b0, b1, b2;
            ref.weighted_moments(w.data(), x.data(), n, &a0, &a1, &a2);
            t->weighted_moments(w.data(), x.data(), n, &b0, &b1, &b2);
            check_close(a0, b0, 1e-12);
            check_close(a1, b1, 1e-11);
            check_close(a2, b2, 1e-11);
        }
    }
}

TEST_CASE("max_value matches scalar and handles empty") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(107);
    for (const auto* t : ker::available()) {
        CHECK(t->max_value(nullptr, 0) == -std::numeric_limits<double>::infinity());
        for (std::size_t n : kSizes) {
            if (n == 0) continue;
            const auto x = random_values(rng, n, -1e6, 1e6);
            CHECK(t->max_value(x.data(), n) == ref.max_value(x.data(), n));
        }
    }
}

TEST_CASE("exp_shift_sum and sum match scalar") {
    const auto& ref = ker::scalar();
    pscore::Rng rng(108);
    for (const auto* t : ker::available()) {
        for (std::size_t n : kSizes) {
            const auto x = random_values(rng, n, -60.0, 0.0);
            check_close(ref.exp_shift_sum(x.data(), n, -3.0),
                        t->exp_shift_sum(x.data(), n, -3.0), 1e-12);
            check_close(ref.sum(x.data(), n), t->sum(x.data(), n), 1e-12);
        }
    }
}

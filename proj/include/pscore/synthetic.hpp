// Benchmark scenarios with known conditional posteriors. Every reference
// model kind reuses the same per-cell latents, truths, and noise draws for a
// given seed, so model kinds differ only in how they condition, never in the
// data they are judged against.

#pragma once

#include "pscore/dataset.hpp"

#include <cstddef>
#include <cstdint>
#include <string>

namespace pscore {

// gaussian_shift: x ~ N(0, sigma_x^2), y ~ N(x, sigma^2); the only family
// with closed-form expected scores. bimodal: y ~ even mixture of
// N(x - 1, sigma^2) and N(x + 1, sigma^2), for multi-component fits and
// ordering checks only.
enum class ScenarioFamily { gaussian_shift, bimodal };

struct ScenarioSpec {
    std::size_t n_cells = 0;
    std::size_t k_samples = 0;
    double conditioning_sd = 1.0; // sigma_x > 0
    double posterior_sd = 0.5;    // sigma > 0
    std::uint64_t seed = 0;
    ScenarioFamily family = ScenarioFamily::gaussian_shift;
};

enum class ReferenceModel { oracle, marginal_only, shuffled, overconfident, shifted };

// overconfident scales the posterior width by width_factor (> 0); shifted
// displaces the posterior mean by offset. Both are ignored by other kinds.
struct ReferenceModelKind {
    ReferenceModel kind = ReferenceModel::oracle;
    double width_factor = 1.0;
    double offset = 0.0;

    static ReferenceModelKind oracle() { return {ReferenceModel::oracle, 1.0, 0.0}; }
    static ReferenceModelKind marginal_only() {
        return {ReferenceModel::marginal_only, 1.0, 0.0};
    }
    static ReferenceModelKind shuffled() { return {ReferenceModel::shuffled, 1.0, 0.0}; }
    static ReferenceModelKind overconfident(double width_factor) {
        return {ReferenceModel::overconfident, width_factor, 0.0};
    }
    static ReferenceModelKind shifted(double offset) {
        return {ReferenceModel::shifted, 1.0, offset};
    }
};

// Canonical table/model identifier for a kind, e.g. "marginal_only".
std::string model_kind_name(const ReferenceModelKind& model);

// One row per cell under feature "F1", one cell per image. Samples per kind:
// oracle N(x_i, s^2); marginal_only the data marginal; shuffled N(x_pi(i), s^2)
// for a seeded derangement pi; overconfident N(x_i, (w*s)^2); shifted
// N(x_i + d, s^2). Deterministic given spec.seed.
EvaluationTable generate_scenario(const ScenarioSpec& spec, const ReferenceModelKind& model);

// Exact expected info gain under exact densities; gaussian_shift family only.
double expected_ig_closed_form(const ScenarioSpec& spec, const ReferenceModelKind& model);

} // namespace pscore

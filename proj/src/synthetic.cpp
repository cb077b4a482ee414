#include "pscore/synthetic.hpp"

#include "pscore/error.hpp"
#include "pscore/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

namespace pscore {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v))
        throw DomainError(std::string(what) + " must be positive and finite");
}

void validate(const ScenarioSpec& spec, const ReferenceModelKind& model) {
    if (spec.n_cells == 0) throw DomainError("n_cells must be positive");
    check_positive(spec.conditioning_sd, "conditioning_sd");
    check_positive(spec.posterior_sd, "posterior_sd");
    if (model.kind == ReferenceModel::overconfident)
        check_positive(model.width_factor, "width_factor");
    if (model.kind == ReferenceModel::shifted && !std::isfinite(model.offset))
        throw DomainError("offset must be finite");
}

// Uniform random permutation, rejected until it has no fixed point.
std::vector<std::size_t> seeded_derangement(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> p(n);
    while (true) {
        std::iota(p.begin(), p.end(), 0);
        for (std::size_t j = n - 1; j > 0; --j)
            std::swap(p[j], p[rng.uniform_int(j + 1)]);
        bool fixed = false;
        for (std::size_t i = 0; i < n; ++i)
            if (p[i] == i) {
                fixed = true;
                break;
            }
        if (!fixed) return p;
    }
}

} // namespace

std::string model_kind_name(const ReferenceModelKind& model) {
    switch (model.kind) {
        case ReferenceModel::oracle: return "oracle";
        case ReferenceModel::marginal_only: return "marginal_only";
        case ReferenceModel::shuffled: return "shuffled";
        case ReferenceModel::overconfident: return "overconfident";
        case ReferenceModel::shifted: return "shifted";
    }
    throw DomainError("unknown reference model kind");
}

EvaluationTable generate_scenario(const ScenarioSpec& spec, const ReferenceModelKind& model) {
    validate(spec, model);
    // the dataset invariant needs two samples per cell to define a spread
    if (spec.k_samples < 2) throw DomainError("k_samples must be at least 2");
    if (model.kind == ReferenceModel::shuffled && spec.n_cells < 2)
        throw DomainError("a derangement needs at least 2 cells");

    const std::size_t n = spec.n_cells;
    const double sx = spec.conditioning_sd;
    const double s = spec.posterior_sd;
    const double marginal_sd = std::hypot(sx, s);
    const bool bimodal = spec.family == ScenarioFamily::bimodal;

    // latents and truths come from per-cell streams that no model kind can
    // perturb; every kind sees the same data
    std::vector<double> latents(n), truths(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng lat(derive_seed(spec.seed, "latent", std::to_string(i)));
        latents[i] = lat.normal(0.0, sx);
        double mode = latents[i];
        if (bimodal) mode += lat.uniform() < 0.5 ? -1.0 : 1.0;
        truths[i] = lat.normal(mode, s);
    }

    std::vector<std::size_t> source(n);
    std::iota(source.begin(), source.end(), 0);
    if (model.kind == ReferenceModel::shuffled)
        source = seeded_derangement(n, derive_seed(spec.seed, "derangement"));

    std::vector<CellRecord> records;
    records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng smp(derive_seed(spec.seed, "samples", std::to_string(i)));
        CellRecord r;
        r.image_id = "img" + std::to_string(i);
        r.cell_id = "c0";
        r.feature = FeatureId{"F1", ""};
        r.true_value = truths[i];
        r.predicted_samples.resize(spec.k_samples);
        for (double& v : r.predicted_samples) {
            const double sign = bimodal ? (smp.uniform() < 0.5 ? -1.0 : 1.0) : 0.0;
            const double z = smp.normal();
            switch (model.kind) {
                case ReferenceModel::oracle:
                    v = latents[i] + sign + s * z;
                    break;
                case ReferenceModel::marginal_only:
                    v = sign + marginal_sd * z;
                    break;
                case ReferenceModel::shuffled:
                    v = latents[source[i]] + sign + s * z;
                    break;
                case ReferenceModel::overconfident:
                    v = latents[i] + sign + model.width_factor * s * z;
                    break;
                case ReferenceModel::shifted:
                    v = latents[i] + model.offset + sign + s * z;
                    break;
            }
        }
        records.push_back(std::move(r));
    }
    return EvaluationTable::from_records(model_kind_name(model), std::move(records));
}

double expected_ig_closed_form(const ScenarioSpec& spec, const ReferenceModelKind& model) {
    validate(spec, model);
    if (spec.family != ScenarioFamily::gaussian_shift)
        throw DomainError("closed-form expected info gain exists only for the "
                          "gaussian_shift scenario family");

    const double s2 = spec.posterior_sd * spec.posterior_sd;
    const double sx2 = spec.conditioning_sd * spec.conditioning_sd;
    const double vm = sx2 + s2;                                    // marginal variance
    const double ref = -0.5 * std::log(kTwoPi * std::numbers::e * vm); // marginal avg loglik
    switch (model.kind) {
        case ReferenceModel::oracle:
            return 0.5 * std::log(vm / s2);
        case ReferenceModel::marginal_only:
            return 0.0;
        case ReferenceModel::overconfident: {
            const double w2 = model.width_factor * model.width_factor;
            return (-0.5 * std::log(kTwoPi * w2 * s2) - 1.0 / (2.0 * w2)) - ref;
        }
        case ReferenceModel::shuffled:
            return (-0.5 * std::log(kTwoPi * s2) - (s2 + 2.0 * sx2) / (2.0 * s2)) - ref;
        case ReferenceModel::shifted:
            return 0.5 * std::log(vm / s2) -
                   model.offset * model.offset / (2.0 * s2);
    }
    throw DomainError("unknown reference model kind");
}

} // namespace pscore

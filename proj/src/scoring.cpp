#include "pscore/scoring.hpp"

#include "pscore/divergence.hpp"
#include "pscore/error.hpp"
#include "pscore/parallel.hpp"
#include "pscore/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pscore {

namespace {

std::string cell_tag(const CellRecord& r) {
    return "(" + r.image_id + ", " + r.cell_id + ", " + r.feature.id + ")";
}

std::vector<const CellRecord*> feature_cells(const EvaluationTable& table,
                                             const std::string& feature_id) {
    table.counts(feature_id); // throws on unknown feature
    std::vector<const CellRecord*> cells;
    for (const CellRecord& r : table.records())
        if (r.feature.id == feature_id) cells.push_back(&r);
    return cells;
}

FittedDensity fit_marginal(std::span<const double> values, const DensityConfig& config,
                           std::uint64_t seed) {
    return fit_density(values, config, seed).density;
}

std::vector<std::size_t> bin_counts(std::span<const double> values, double lo, double hi,
                                    std::size_t bins) {
    std::vector<std::size_t> counts(bins, 0);
    const double width = (hi - lo) / static_cast<double>(bins);
    for (const double v : values) {
        auto b = static_cast<std::ptrdiff_t>((v - lo) / width);
        b = std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1);
        ++counts[static_cast<std::size_t>(b)];
    }
    return counts;
}

} // namespace

std::vector<DensityFit> fit_cell_posteriors(const EvaluationTable& table,
                                            const std::string& feature_id,
                                            const DensityConfig& config,
                                            std::uint64_t seed, unsigned threads) {
    const auto cells = feature_cells(table, feature_id);
    std::vector<DensityFit> fits(cells.size());
    parallel_for(cells.size(), threads, [&](std::size_t i) {
        const CellRecord& r = *cells[i];
        const std::uint64_t cell_seed =
            derive_seed(seed, "cell-fit", r.image_id + '\x1f' + r.cell_id, feature_id);
        try {
            fits[i] = fit_density(r.predicted_samples, config, cell_seed);
        } catch (const Error& e) {
            throw Error("cell " + cell_tag(r) + ": " + e.what());
        }
    });
    return fits;
}

double marginal_kld_metric(const EvaluationTable& table, const std::string& feature_id,
                           const ScoreConfig& config) {
    const std::vector<double> truths = pool_true_values(table, feature_id);
    const std::vector<double> predicted = pool_predicted_samples(
        table, feature_id, config.pool_cap, derive_seed(config.seed, "pool-pred", feature_id));
    const FittedDensity p_true = fit_marginal(
        truths, config.marginal_density, derive_seed(config.seed, "marginal-true", feature_id));
    const FittedDensity p_model =
        fit_marginal(predicted, config.marginal_density,
                     derive_seed(config.seed, "marginal-model", feature_id));
    return kld_quadrature(p_true, p_model, config.kld_grid_points);
}

double rank_of_true(double true_value, std::span<const double> samples) {
    if (samples.empty()) throw DomainError("rank_of_true needs at least one sample");
    std::size_t below = 0, ties = 0;
    for (const double s : samples) {
        if (s < true_value) ++below;
        else if (s == true_value) ++ties;
    }
    const double r = static_cast<double>(below) + 0.5 * static_cast<double>(ties);
    return 100.0 * r / static_cast<double>(samples.size());
}

double rank_distance_metric(const EvaluationTable& table, const std::string& feature_id) {
    const auto cells = feature_cells(table, feature_id);
    std::vector<double> ranks(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
        ranks[i] = rank_of_true(cells[i]->true_value, cells[i]->predicted_samples);
    return wasserstein1_to_uniform(ranks);
}

std::pair<double, std::vector<double>> avg_log_likelihood(
    const EvaluationTable& table, const std::string& feature_id,
    std::span<const DensityFit> posteriors) {
    const auto cells = feature_cells(table, feature_id);
    if (cells.size() != posteriors.size())
        throw DomainError("posterior count " + std::to_string(posteriors.size()) +
                          " does not match cell count " + std::to_string(cells.size()));
    std::vector<double> per_cell(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i)
        per_cell[i] = log_pdf(posteriors[i].density, cells[i]->true_value);
    double sum = 0.0;
    for (const double v : per_cell) sum += v;
    return {sum / static_cast<double>(per_cell.size()), std::move(per_cell)};
}

std::pair<double, std::vector<double>> reference_log_likelihood(
    const EvaluationTable& table, const std::string& feature_id,
    const DensityConfig& marginal_config, std::uint64_t seed) {
    const std::vector<double> truths = pool_true_values(table, feature_id);
    const FittedDensity marginal =
        fit_marginal(truths, marginal_config, derive_seed(seed, "marginal-true", feature_id));
    std::vector<double> per_cell(truths.size());
    log_pdf_batch(marginal, truths, per_cell.data());
    double sum = 0.0;
    for (const double v : per_cell) sum += v;
    return {sum / static_cast<double>(per_cell.size()), std::move(per_cell)};
}

FeatureScore score_feature(const EvaluationTable& table, const std::string& feature_id,
                           const ScoreConfig& config) {
    try {
        const auto cells = feature_cells(table, feature_id);
        const std::size_t n = cells.size();

        std::vector<DensityFit> fits = fit_cell_posteriors(
            table, feature_id, config.cell_density, config.seed, config.threads);

        const std::vector<double> truths = pool_true_values(table, feature_id);
        FittedDensity ref_marginal =
            fit_marginal(truths, config.marginal_density,
                         derive_seed(config.seed, "marginal-true", feature_id));
        const std::vector<double> predicted =
            pool_predicted_samples(table, feature_id, config.pool_cap,
                                   derive_seed(config.seed, "pool-pred", feature_id));
        FittedDensity model_marginal =
            fit_marginal(predicted, config.marginal_density,
                         derive_seed(config.seed, "marginal-model", feature_id));

        FeatureScore out;
        out.cells.resize(n);
        std::vector<double> ranks(n), logliks(n), refs(n);
        log_pdf_batch(ref_marginal, truths, refs.data());
        for (std::size_t i = 0; i < n; ++i) {
            const CellRecord& r = *cells[i];
            CellScore& cs = out.cells[i];
            cs.image_id = r.image_id;
            cs.cell_id = r.cell_id;
            cs.rank_normalized = rank_of_true(r.true_value, r.predicted_samples);
            cs.loglik_posterior = log_pdf(fits[i].density, r.true_value);
            cs.loglik_reference = refs[i];
            cs.degenerate_fit = fits[i].degenerate;
            cs.posterior = std::move(fits[i].density);
            ranks[i] = cs.rank_normalized;
            logliks[i] = cs.loglik_posterior;
        }

        FeatureMetricReport& rep = out.report;
        for (const FeatureId& f : table.features())
            if (f.id == feature_id) rep.feature = f;
        rep.model_name = table.model_name();
        rep.n_cells = n;
        rep.rank_w1 = wasserstein1_to_uniform(ranks);
        rep.marginal_kld =
            kld_quadrature(ref_marginal, model_marginal, config.kld_grid_points);

        double sum_ll = 0.0, sum_ref = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            sum_ll += logliks[i];
            sum_ref += refs[i];
        }
        rep.avg_loglik = sum_ll / static_cast<double>(n);
        rep.ref_loglik = sum_ref / static_cast<double>(n);
        rep.info_gain = rep.avg_loglik - rep.ref_loglik;

        rep.rank_hist = bin_counts(ranks, 0.0, 100.0, 20);
        double lo = *std::min_element(logliks.begin(), logliks.end());
        double hi = *std::max_element(logliks.begin(), logliks.end());
        if (lo == hi) {
            lo -= 0.5;
            hi += 0.5;
        }
        rep.loglik_hist.counts = bin_counts(logliks, lo, hi, 50);
        rep.loglik_hist.edges.resize(51);
        for (std::size_t i = 0; i <= 50; ++i)
            rep.loglik_hist.edges[i] =
                lo + (hi - lo) * static_cast<double>(i) / 50.0;
        out.true_marginal = std::move(ref_marginal);
        out.model_marginal = std::move(model_marginal);
        return out;
    } catch (const DomainError& e) {
        throw DomainError("feature " + feature_id + ": " + e.what());
    }
}

FeatureMetricReport info_gain(const EvaluationTable& table, const std::string& feature_id,
                              const ScoreConfig& config) {
    return score_feature(table, feature_id, config).report;
}

} // namespace pscore

// The three per-feature metrics over an evaluation table: KLD between the
// true and predicted feature marginals, Wasserstein-1 rank calibration, and
// average log-likelihood against the in-split marginal reference (their
// difference is the information gain).

#pragma once

#include "pscore/dataset.hpp"
#include "pscore/density.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pscore {

struct CellScore {
    std::string image_id;
    std::string cell_id;
    double rank_normalized = 0.0;  // in [0, 100]
    double loglik_posterior = 0.0; // ln of this cell's fitted posterior at the true value
    double loglik_reference = 0.0; // ln of the marginal reference at the true value
    bool degenerate_fit = false;
    FittedDensity posterior;
};

struct Histogram {
    std::vector<double> edges;       // counts.size() + 1 ascending values
    std::vector<std::size_t> counts;
};

struct FeatureMetricReport {
    FeatureId feature;
    std::string model_name;
    std::size_t n_cells = 0;
    double marginal_kld = 0.0;
    double rank_w1 = 0.0;
    double avg_loglik = 0.0;
    double ref_loglik = 0.0;
    double info_gain = 0.0; // always avg_loglik - ref_loglik
    std::vector<std::size_t> rank_hist; // 20 equal bins over [0, 100]
    Histogram loglik_hist;              // 50 bins over the observed range
};

struct ScoreConfig {
    DensityConfig cell_density;     // per-cell posteriors: BIC over k <= 3
    DensityConfig marginal_density; // pooled marginals: BIC over k <= 8
    std::size_t pool_cap = kDefaultPoolCap;
    std::size_t kld_grid_points = 4096;
    std::uint64_t seed = 0;
    unsigned threads = 1;

    ScoreConfig() { marginal_density.k_max = 8; }
};

// One guarded density per cell of the feature, in table order, each fitted
// from that cell's samples only. Cell seeds derive from (seed, cell key), so
// results are independent of record order and thread count. Fit errors are
// annotated with the cell key.
std::vector<DensityFit> fit_cell_posteriors(const EvaluationTable& table,
                                            const std::string& feature_id,
                                            const DensityConfig& config,
                                            std::uint64_t seed, unsigned threads = 1);

// D(true marginal || model marginal): both sides fitted with the marginal
// density config, the model side on capped pooled samples.
double marginal_kld_metric(const EvaluationTable& table, const std::string& feature_id,
                           const ScoreConfig& config);

// r = #{samples < y} + 0.5 * #{samples == y}, scaled to [0, 100].
double rank_of_true(double true_value, std::span<const double> samples);

// W1 between the per-cell rank distribution and Uniform(0, 100).
double rank_distance_metric(const EvaluationTable& table, const std::string& feature_id);

// Mean and per-cell values of ln posterior(true value); posteriors must be
// aligned with the feature's cells in table order.
std::pair<double, std::vector<double>> avg_log_likelihood(
    const EvaluationTable& table, const std::string& feature_id,
    std::span<const DensityFit> posteriors);

// Mean and per-cell values of ln marginal(true value), the marginal being
// fitted to this split's pooled true values.
std::pair<double, std::vector<double>> reference_log_likelihood(
    const EvaluationTable& table, const std::string& feature_id,
    const DensityConfig& marginal_config, std::uint64_t seed);

struct FeatureScore {
    FeatureMetricReport report;
    std::vector<CellScore> cells;  // table order
    FittedDensity true_marginal;   // fitted to the pooled true values
    FittedDensity model_marginal;  // fitted to the capped pooled samples
};

// Full per-feature scoring: cell posteriors, rank distance, marginal KLD,
// log-likelihoods, info gain, and report histograms.
FeatureScore score_feature(const EvaluationTable& table, const std::string& feature_id,
                           const ScoreConfig& config);

// score_feature without the per-cell detail.
FeatureMetricReport info_gain(const EvaluationTable& table, const std::string& feature_id,
                              const ScoreConfig& config);

} // namespace pscore

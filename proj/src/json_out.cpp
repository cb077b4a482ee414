#include "pscore/json_out.hpp"

namespace pscore {

nlohmann::ordered_json density_to_json(const FittedDensity& density) {
    nlohmann::ordered_json out;
    if (const GaussianMixture* g = density.gmm()) {
        out["type"] = "gmm";
        nlohmann::ordered_json comps = nlohmann::ordered_json::array();
        for (const auto& c : g->components) {
            nlohmann::ordered_json jc;
            jc["weight"] = c.weight;
            jc["mean"] = c.mean;
            jc["variance"] = c.variance;
            comps.push_back(std::move(jc));
        }
        out["params"] = {{"components", std::move(comps)}};
    } else {
        const KernelDensity* k = density.kde();
        out["type"] = "kde";
        out["params"] = {{"points", k->points}, {"bandwidth", k->bandwidth}};
    }
    out["guard"] = {{"eps", density.guard.eps}, {"lo", density.guard.lo}, {"hi", density.guard.hi}};
    return out;
}

nlohmann::ordered_json report_to_json(const FeatureMetricReport& report) {
    nlohmann::ordered_json out;
    out["model"] = report.model_name;
    out["feature"] = report.feature.id;
    out["n_cells"] = report.n_cells;
    out["marginal_kld"] = report.marginal_kld;
    out["rank_w1"] = report.rank_w1;
    out["avg_loglik"] = report.avg_loglik;
    out["ref_loglik"] = report.ref_loglik;
    out["info_gain"] = report.info_gain;
    out["rank_hist"] = report.rank_hist;
    out["loglik_hist"] = {{"edges", report.loglik_hist.edges},
                          {"counts", report.loglik_hist.counts}};
    return out;
}

nlohmann::ordered_json cell_score_to_json(const CellScore& cell) {
    nlohmann::ordered_json out;
    out["image_id"] = cell.image_id;
    out["cell_id"] = cell.cell_id;
    out["rank_normalized"] = cell.rank_normalized;
    out["loglik_posterior"] = cell.loglik_posterior;
    out["loglik_reference"] = cell.loglik_reference;
    out["degenerate_fit"] = cell.degenerate_fit;
    out["posterior"] = density_to_json(cell.posterior);
    return out;
}

} // namespace pscore

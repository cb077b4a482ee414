// JSON views of domain objects, used by score dumps and reports.

#pragma once

#include "pscore/density.hpp"
#include "pscore/scoring.hpp"

#include <json.hpp>

namespace pscore {

// {"type":"gmm"|"kde", "params":..., "guard":{"eps":...,"lo":...,"hi":...}}
nlohmann::ordered_json density_to_json(const FittedDensity& density);

// {"model":..., "feature":..., "n_cells":..., "marginal_kld":..., "rank_w1":...,
//  "avg_loglik":..., "ref_loglik":..., "info_gain":..., "rank_hist":[...],
//  "loglik_hist":{"edges":[...],"counts":[...]}}
nlohmann::ordered_json report_to_json(const FeatureMetricReport& report);

// One score-dump row: identifiers, rank, log-likelihoods, degeneracy flag,
// and the fitted posterior.
nlohmann::ordered_json cell_score_to_json(const CellScore& cell);

} // namespace pscore

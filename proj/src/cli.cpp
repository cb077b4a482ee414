#include "pscore/cli.hpp"

#include "pscore/dataset.hpp"
#include "pscore/error.hpp"
#include "pscore/json_out.hpp"
#include "pscore/parallel.hpp"
#include "pscore/scoring.hpp"
#include "pscore/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pscore {

namespace {

using nlohmann::ordered_json;

// bad invocation (exit 2), as opposed to a failed run (exit 1)
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

unsigned threads_from_env() {
    const char* env = std::getenv("POSTERIOR_SCORE_THREADS");
    if (env == nullptr) return resolve_thread_count(0);
    unsigned v = 0;
    const char* end = env + std::strlen(env);
    const auto [ptr, ec] = std::from_chars(env, end, v);
    if (ec != std::errc() || ptr != end)
        throw UsageError(std::string("POSTERIOR_SCORE_THREADS must be a non-negative "
                                     "integer, got '") + env + "'");
    return resolve_thread_count(v);
}

std::string sanitize_for_filename(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (const char c : s)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ||
                c == '_')
                   ? c
                   : '_';
    return out;
}

std::string pair_stem(const std::string& model, const std::string& feature) {
    return sanitize_for_filename(model) + "_" + sanitize_for_filename(feature);
}

std::string fixed3(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

// ---- summary table (Fig. 5 shape: rows = metric x model, columns = features)

const std::vector<std::pair<std::string, std::string>> kMetricLabels = {
    {"marginal_kld", "Marg. KLD (↓)"},
    {"rank_w1", "Rank W1 (↓)"},
    {"info_gain", "Info gain (↑)"},
};

double metric_value(const FeatureMetricReport& r, const std::string& metric) {
    if (metric == "marginal_kld") return r.marginal_kld;
    if (metric == "rank_w1") return r.rank_w1;
    return r.info_gain;
}

ordered_json build_summary(const std::vector<FeatureMetricReport>& reports,
                           const std::vector<std::string>& features,
                           const std::vector<std::string>& models) {
    ordered_json out;
    out["features"] = features;
    out["models"] = models;
    ordered_json rows = ordered_json::array();
    for (const auto& [metric, label] : kMetricLabels) {
        for (const std::string& model : models) {
            ordered_json row;
            row["metric"] = metric;
            row["model"] = model;
            ordered_json values;
            for (const std::string& feature : features)
                for (const FeatureMetricReport& r : reports)
                    if (r.model_name == model && r.feature.id == feature)
                        values[feature] = metric_value(r, metric);
            row["values"] = std::move(values);
            rows.push_back(std::move(row));
        }
    }
    out["rows"] = std::move(rows);
    return out;
}

std::string render_table_md(const std::vector<FeatureMetricReport>& reports,
                            const std::vector<std::string>& features,
                            const std::vector<std::string>& models) {
    std::string md = "| Metric | Model |";
    for (const std::string& f : features) md += " " + f + " |";
    md += "\n|---|---|";
    for (std::size_t i = 0; i < features.size(); ++i) md += "---:|";
    md += "\n";
    for (const auto& [metric, label] : kMetricLabels) {
        for (const std::string& model : models) {
            md += "| " + label + " | " + model + " |";
            for (const std::string& feature : features) {
                const FeatureMetricReport* found = nullptr;
                for (const FeatureMetricReport& r : reports)
                    if (r.model_name == model && r.feature.id == feature) found = &r;
                md += found ? " " + fixed3(metric_value(*found, metric)) + " |" : " - |";
            }
            md += "\n";
        }
    }
    return md;
}

// ---- score

struct ScoreOptions {
    std::string input;
    std::string format;
    std::string features = "all";
    std::string density = "gmm";
    std::size_t k_max = 8;
    std::uint64_t seed = 0;
    std::string out;
};

ordered_json density_grid_json(const std::string& model, const std::string& feature,
                               const FittedDensity& truth, const FittedDensity& fitted) {
    const double lo = std::min(truth.guard.lo, fitted.guard.lo);
    const double hi = std::max(truth.guard.hi, fitted.guard.hi);
    constexpr std::size_t kPoints = 512;
    std::vector<double> ys(kPoints), tp(kPoints), mp(kPoints);
    for (std::size_t i = 0; i < kPoints; ++i)
        ys[i] = lo + (hi - lo) * static_cast<double>(i) / (kPoints - 1);
    log_pdf_batch(truth, ys, tp.data());
    log_pdf_batch(fitted, ys, mp.data());
    for (double& v : tp) v = std::exp(v);
    for (double& v : mp) v = std::exp(v);
    ordered_json out;
    out["model"] = model;
    out["feature"] = feature;
    out["y"] = ys;
    out["true_pdf"] = tp;
    out["model_pdf"] = mp;
    return out;
}

std::vector<std::string> split_features(const std::string& spec) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = spec.find(',', start);
        const std::string tok = spec.substr(start, pos - start);
        if (tok.empty()) throw UsageError("--features contains an empty feature id");
        out.push_back(tok);
        if (pos == std::string::npos) return out;
        start = pos + 1;
    }
}

int cmd_score(const ScoreOptions& o) {
    const TableFormat fmt =
        o.format.empty()
            ? format_from_path(o.input)
            : (o.format == "csv" ? TableFormat::csv : TableFormat::jsonl);
    const std::vector<EvaluationTable> tables = load_tables(o.input, fmt);

    const bool all_features = o.features == "all";
    std::vector<std::string> wanted;
    if (!all_features) {
        wanted = split_features(o.features);
        for (const EvaluationTable& t : tables)
            for (const std::string& f : wanted)
                if (!t.has_feature(f))
                    throw Error("feature " + f + " is not present in the table for model '" +
                                t.model_name() + "'");
    }

    ScoreConfig config;
    config.seed = o.seed;
    config.threads = threads_from_env();
    config.marginal_density.k_max = o.k_max;
    config.cell_density.k_max = std::min<std::size_t>(o.k_max, config.cell_density.k_max);
    if (o.density == "kde") {
        config.cell_density.kind = EstimatorKind::kde;
        config.marginal_density.kind = EstimatorKind::kde;
    }

    std::filesystem::create_directories(o.out);
    const std::filesystem::path out_dir(o.out);

    std::vector<FeatureMetricReport> reports;
    std::vector<std::string> models, feature_order;
    for (const EvaluationTable& table : tables) {
        models.push_back(table.model_name());
        std::vector<std::string> feats;
        if (all_features)
            for (const FeatureId& f : table.features()) feats.push_back(f.id);
        else
            feats = wanted;
        for (const std::string& fid : feats) {
            if (std::find(feature_order.begin(), feature_order.end(), fid) ==
                feature_order.end())
                feature_order.push_back(fid);
            FeatureScore score = score_feature(table, fid, config);
            const std::string stem = pair_stem(table.model_name(), fid);

            atomic_write_text((out_dir / ("report_" + stem + ".json")).string(),
                              report_to_json(score.report).dump(2) + "\n");

            std::string cells;
            for (const CellScore& c : score.cells) cells += cell_score_to_json(c).dump() + "\n";
            atomic_write_text((out_dir / ("cells_" + stem + ".jsonl")).string(), cells);

            atomic_write_text(
                (out_dir / ("density_grid_" + stem + ".json")).string(),
                density_grid_json(table.model_name(), fid, score.true_marginal,
                                  score.model_marginal)
                        .dump(2) +
                    "\n");

            std::cout << "model=" << table.model_name() << " feature=" << fid
                      << " n_cells=" << score.report.n_cells
                      << " marginal_kld=" << format_double(score.report.marginal_kld)
                      << " rank_w1=" << format_double(score.report.rank_w1)
                      << " info_gain=" << format_double(score.report.info_gain) << "\n";
            reports.push_back(std::move(score.report));
        }
    }

    atomic_write_text((out_dir / "summary.json").string(),
                      build_summary(reports, feature_order, models).dump(2) + "\n");
    return 0;
}

// ---- synth

struct SynthOptions {
    std::string model;
    std::size_t cells = 0;
    std::size_t samples = 0;
    double width_factor = 0.0;
    double offset = 0.0;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthOptions& o, bool width_given, bool offset_given) {
    ReferenceModelKind kind;
    if (o.model == "oracle") kind = ReferenceModelKind::oracle();
    else if (o.model == "marginal") kind = ReferenceModelKind::marginal_only();
    else if (o.model == "shuffled") kind = ReferenceModelKind::shuffled();
    else if (o.model == "overconfident") {
        if (!width_given)
            throw UsageError("--model overconfident requires --width-factor");
        kind = ReferenceModelKind::overconfident(o.width_factor);
    } else {
        if (!offset_given) throw UsageError("--model shifted requires --offset");
        kind = ReferenceModelKind::shifted(o.offset);
    }
    if (width_given && kind.kind != ReferenceModel::overconfident)
        throw UsageError("--width-factor only applies to --model overconfident");
    if (offset_given && kind.kind != ReferenceModel::shifted)
        throw UsageError("--offset only applies to --model shifted");

    ScenarioSpec spec;
    spec.n_cells = o.cells;
    spec.k_samples = o.samples;
    spec.seed = o.seed;

    const EvaluationTable table = generate_scenario(spec, kind);
    const std::filesystem::path out_path(o.out);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    write_table(table, o.out, TableFormat::csv);

    std::cout << "expected info gain: " << format_double(expected_ig_closed_form(spec, kind))
              << "\n";
    std::cout << "wrote " << table.records().size() << " cells to " << o.out << "\n";
    return 0;
}

// ---- report

struct ReportOptions {
    std::string summaries;
    std::string out;
};

FeatureMetricReport parse_report_json(const ordered_json& j, const std::string& where) {
    try {
        FeatureMetricReport r;
        r.model_name = j.at("model").get<std::string>();
        r.feature = FeatureId{j.at("feature").get<std::string>(), ""};
        r.n_cells = j.at("n_cells").get<std::size_t>();
        r.marginal_kld = j.at("marginal_kld").get<double>();
        r.rank_w1 = j.at("rank_w1").get<double>();
        r.avg_loglik = j.at("avg_loglik").get<double>();
        r.ref_loglik = j.at("ref_loglik").get<double>();
        r.info_gain = j.at("info_gain").get<double>();
        r.rank_hist = j.at("rank_hist").get<std::vector<std::size_t>>();
        r.loglik_hist.edges = j.at("loglik_hist").at("edges").get<std::vector<double>>();
        r.loglik_hist.counts =
            j.at("loglik_hist").at("counts").get<std::vector<std::size_t>>();
        if (r.rank_hist.size() != 20 || r.loglik_hist.counts.size() + 1 != r.loglik_hist.edges.size())
            throw Error("histogram shapes are inconsistent");
        return r;
    } catch (const ordered_json::exception& e) {
        throw Error("invalid summary '" + where + "': " + e.what());
    } catch (const Error& e) {
        throw Error("invalid summary '" + where + "': " + e.what());
    }
}

ordered_json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    try {
        return ordered_json::parse(in);
    } catch (const ordered_json::exception& e) {
        throw Error("invalid JSON in '" + path.string() + "': " + e.what());
    }
}

std::string histogram_csv(std::span<const double> edges, std::span<const std::size_t> counts) {
    std::string csv = "bin_lo,bin_hi,count\n";
    for (std::size_t i = 0; i < counts.size(); ++i) {
        csv += format_double(edges[i]) + "," + format_double(edges[i + 1]) + "," +
               std::to_string(counts[i]) + "\n";
    }
    return csv;
}

int cmd_report(const ReportOptions& o) {
    const std::filesystem::path dir(o.summaries);
    std::vector<std::filesystem::path> report_files, grid_files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.ends_with(".json") && name.starts_with("report_"))
            report_files.push_back(entry.path());
        else if (name.ends_with(".json") && name.starts_with("density_grid_"))
            grid_files.push_back(entry.path());
    }
    std::sort(report_files.begin(), report_files.end());
    std::sort(grid_files.begin(), grid_files.end());
    if (report_files.empty())
        throw Error("no report_*.json summaries found in '" + o.summaries + "'");

    std::vector<FeatureMetricReport> reports;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& path : report_files) {
        FeatureMetricReport r = parse_report_json(read_json_file(path), path.string());
        if (!seen.insert({r.model_name, r.feature.id}).second)
            throw Error("duplicate summaries for model '" + r.model_name + "', feature '" +
                        r.feature.id + "'");
        reports.push_back(std::move(r));
    }

    std::set<std::string> feature_set, model_set;
    for (const FeatureMetricReport& r : reports) {
        feature_set.insert(r.feature.id);
        model_set.insert(r.model_name);
    }
    const std::vector<std::string> features(feature_set.begin(), feature_set.end());
    const std::vector<std::string> models(model_set.begin(), model_set.end());

    std::filesystem::create_directories(o.out);
    const std::filesystem::path out_dir(o.out);

    atomic_write_text((out_dir / "table.md").string(),
                      render_table_md(reports, features, models));
    atomic_write_text((out_dir / "summary.json").string(),
                      build_summary(reports, features, models).dump(2) + "\n");

    for (const FeatureMetricReport& r : reports) {
        const std::string stem = pair_stem(r.model_name, r.feature.id);
        std::vector<double> rank_edges(21);
        for (std::size_t i = 0; i <= 20; ++i) rank_edges[i] = 5.0 * static_cast<double>(i);
        atomic_write_text((out_dir / ("rank_hist_" + stem + ".csv")).string(),
                          histogram_csv(rank_edges, r.rank_hist));
        atomic_write_text((out_dir / ("loglik_hist_" + stem + ".csv")).string(),
                          histogram_csv(r.loglik_hist.edges, r.loglik_hist.counts));
    }

    for (const auto& path : grid_files) {
        const ordered_json j = read_json_file(path);
        try {
            const auto model = j.at("model").get<std::string>();
            const auto feature = j.at("feature").get<std::string>();
            const auto ys = j.at("y").get<std::vector<double>>();
            const auto tp = j.at("true_pdf").get<std::vector<double>>();
            const auto mp = j.at("model_pdf").get<std::vector<double>>();
            if (ys.size() != tp.size() || ys.size() != mp.size())
                throw Error("grid arrays are misaligned");
            std::string csv = "y,true_pdf,model_pdf\n";
            for (std::size_t i = 0; i < ys.size(); ++i)
                csv += format_double(ys[i]) + "," + format_double(tp[i]) + "," +
                       format_double(mp[i]) + "\n";
            atomic_write_text(
                (out_dir / ("density_grid_" + pair_stem(model, feature) + ".csv")).string(),
                csv);
        } catch (const ordered_json::exception& e) {
            throw Error("invalid density grid '" + path.string() + "': " + e.what());
        }
    }

    std::cout << "wrote table.md and " << reports.size()
              << " histogram pairs covering " << models.size() << " models x "
              << features.size() << " features to " << o.out << "\n";
    return 0;
}

} // namespace

int run(std::vector<std::string> args) {
    CLI::App app{"Posterior scoring for per-cell feature predictions", "posterior_score"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "TOML config file; command-line flags override its values");

    ScoreOptions so;
    CLI::App* score = app.add_subcommand("score", "Score an evaluation table");
    score->add_option("--input", so.input, "evaluation table (CSV or JSONL)")
        ->required()
        ->check(CLI::ExistingFile);
    score->add_option("--format", so.format, "input format; default: inferred from extension")
        ->check(CLI::IsMember({"csv", "jsonl"}));
    score->add_option("--features", so.features,
                      "'all' or a comma-separated list of feature ids");
    score->add_option("--density", so.density, "per-cell and marginal estimator")
        ->check(CLI::IsMember({"gmm", "kde"}));
    score->add_option("--k-max", so.k_max, "BIC search cap for mixture fits")
        ->check(CLI::PositiveNumber);
    score->add_option("--seed", so.seed, "master seed");
    score->add_option("--out", so.out, "output directory")->required();

    SynthOptions sy;
    CLI::App* synth = app.add_subcommand("synth", "Generate a benchmark table");
    synth->add_option("--model", sy.model, "reference model kind")
        ->required()
        ->check(CLI::IsMember({"oracle", "marginal", "shuffled", "overconfident", "shifted"}));
    synth->add_option("--cells", sy.cells, "number of cells")
        ->required()
        ->check(CLI::PositiveNumber);
    synth->add_option("--samples", sy.samples, "samples per cell")
        ->required()
        ->check(CLI::PositiveNumber);
    CLI::Option* width_opt = synth->add_option(
        "--width-factor", sy.width_factor, "posterior width scale (overconfident only)");
    CLI::Option* offset_opt =
        synth->add_option("--offset", sy.offset, "posterior mean shift (shifted only)");
    synth->add_option("--seed", sy.seed, "master seed");
    synth->add_option("--out", sy.out, "output CSV path")->required();

    ReportOptions ro;
    CLI::App* report = app.add_subcommand("report", "Render summaries to markdown and CSV");
    report->add_option("--summaries", ro.summaries, "directory of score outputs")
        ->required()
        ->check(CLI::ExistingDirectory);
    report->add_option("--out", ro.out, "output directory")->required();

    std::reverse(args.begin(), args.end());
    try {
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help and friends
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        if (score->parsed()) return cmd_score(so);
        if (synth->parsed()) return cmd_synth(sy, width_opt->count() > 0, offset_opt->count() > 0);
        return cmd_report(ro);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace pscore

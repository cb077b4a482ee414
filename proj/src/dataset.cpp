#include "pscore/dataset.hpp"

#include "pscore/error.hpp"
#include "pscore/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <system_error>

#include <json.hpp>

namespace pscore {

namespace {

constexpr const char* kCsvHeader = "model,image_id,cell_id,feature,true_value,samples";

[[noreturn]] void fail_at(const std::string& path, std::size_t line, const std::string& msg) {
    throw ParseError(path, line, msg);
}

double parse_double(std::string_view tok, const std::string& path, std::size_t line,
                    const char* what) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size())
        fail_at(path, line, std::string("bad ") + what + " '" + std::string(tok) + "'");
    return v;
}

void split_into(std::string_view s, char sep, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

struct RawRow {
    std::string model;
    CellRecord record;
    std::size_t line;
};

std::vector<RawRow> read_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");

    std::vector<RawRow> rows;
    std::string line;
    std::vector<std::string_view> fields, toks;
    std::size_t lineno = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (line.empty()) continue;
        if (!saw_header) {
            if (line != kCsvHeader)
                fail_at(path, lineno, std::string("expected header '") + kCsvHeader + "'");
            saw_header = true;
            continue;
        }
        split_into(line, ',', fields);
        if (fields.size() != 6)
            fail_at(path, lineno, "expected 6 columns, got " + std::to_string(fields.size()));
        RawRow row;
        row.line = lineno;
        row.model = std::string(fields[0]);
        row.record.image_id = std::string(fields[1]);
        row.record.cell_id = std::string(fields[2]);
        row.record.feature.id = std::string(fields[3]);
        row.record.true_value = parse_double(fields[4], path, lineno, "true_value");
        split_into(fields[5], ';', toks);
        row.record.predicted_samples.reserve(toks.size());
        for (const auto tok : toks)
            row.record.predicted_samples.push_back(parse_double(tok, path, lineno, "sample"));
        rows.push_back(std::move(row));
    }
    if (!saw_header) fail_at(path, 1, "missing header");
    return rows;
}

std::vector<RawRow> read_jsonl(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open file");

    static const std::set<std::string> kKeys = {"model",   "image_id",   "cell_id",
                                                "feature", "true_value", "samples"};
    std::vector<RawRow> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
        if (line.empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail_at(path, lineno, std::string("invalid JSON: ") + e.what());
        }
        if (!obj.is_object()) fail_at(path, lineno, "expected a JSON object");
        for (const auto& [key, _] : obj.items())
            if (!kKeys.count(key)) fail_at(path, lineno, "unknown key '" + key + "'");
        for (const auto& key : kKeys)
            if (!obj.contains(key)) fail_at(path, lineno, "missing key '" + key + "'");

        RawRow row;
        row.line = lineno;
        try {
            row.model = obj.at("model").get<std::string>();
            row.record.image_id = obj.at("image_id").get<std::string>();
            row.record.cell_id = obj.at("cell_id").get<std::string>();
            row.record.feature.id = obj.at("feature").get<std::string>();
            if (!obj.at("true_value").is_number())
                fail_at(path, lineno, "true_value must be a number");
            row.record.true_value = obj.at("true_value").get<double>();
            const auto& samples = obj.at("samples");
            if (!samples.is_array()) fail_at(path, lineno, "samples must be an array");
            row.record.predicted_samples.reserve(samples.size());
            for (const auto& s : samples) {
                if (!s.is_number()) fail_at(path, lineno, "samples must contain only numbers");
                row.record.predicted_samples.push_back(s.get<double>());
            }
        } catch (const nlohmann::json::type_error& e) {
            fail_at(path, lineno, std::string("bad field type: ") + e.what());
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_row_csv(std::string& out, const std::string& model, const CellRecord& r) {
    out += model;
    out += ',';
    out += r.image_id;
    out += ',';
    out += r.cell_id;
    out += ',';
    out += r.feature.id;
    out += ',';
    out += format_double(r.true_value);
    out += ',';
    for (std::size_t k = 0; k < r.predicted_samples.size(); ++k) {
        if (k) out += ';';
        out += format_double(r.predicted_samples[k]);
    }
    out += '\n';
}

void check_identifier(const std::string& s, const char* what) {
    if (s.empty()) throw DomainError(std::string(what) + " must not be empty");
    if (s.find_first_of(",;\"\n\r") != std::string::npos)
        throw DomainError(std::string(what) + " '" + s + "' contains a separator character");
}

} // namespace

std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void atomic_write_text(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open '" + tmp + "' for writing");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw Error("cannot rename '" + tmp + "' to '" + path + "'");
    }
}

void EvaluationTable::build_index(const std::vector<std::size_t>* lines,
                                  const std::string& path) {
    auto complain = [&](std::size_t rec_idx, const std::string& msg) -> void {
        if (lines) fail_at(path, (*lines)[rec_idx], msg);
        throw DomainError(msg);
    };

    feature_order_.clear();
    counts_.clear();
    std::map<std::string, std::vector<std::string>> image_order; // feature -> images
    std::set<std::string> keys;
    for (std::size_t idx = 0; idx < records_.size(); ++idx) {
        const CellRecord& r = records_[idx];
        if (r.feature.id.empty()) complain(idx, "feature id must not be empty");
        if (r.predicted_samples.size() < 2)
            complain(idx, "cell (" + r.image_id + ", " + r.cell_id + ", " + r.feature.id +
                              ") has " + std::to_string(r.predicted_samples.size()) +
                              " samples; at least 2 are required");
        if (!std::isfinite(r.true_value))
            complain(idx, "non-finite true_value for cell (" + r.image_id + ", " + r.cell_id +
                              ", " + r.feature.id + ")");
        for (const double s : r.predicted_samples)
            if (!std::isfinite(s))
                complain(idx, "non-finite sample for cell (" + r.image_id + ", " + r.cell_id +
                                  ", " + r.feature.id + ")");

        std::string key = r.image_id + '\x1f' + r.cell_id + '\x1f' + r.feature.id;
        if (!keys.insert(std::move(key)).second)
            complain(idx, "duplicate (image_id, cell_id, feature) key (" + r.image_id + ", " +
                              r.cell_id + ", " + r.feature.id + ")");

        auto it = counts_.find(r.feature.id);
        if (it == counts_.end()) {
            feature_order_.push_back(r.feature);
            FeatureCounts c;
            c.samples_per_cell = r.predicted_samples.size();
            it = counts_.emplace(r.feature.id, std::move(c)).first;
        } else if (r.predicted_samples.size() != it->second.samples_per_cell) {
            complain(idx, "inconsistent sample count for feature " + r.feature.id + ": got " +
                              std::to_string(r.predicted_samples.size()) + ", expected " +
                              std::to_string(it->second.samples_per_cell));
        }
        FeatureCounts& c = it->second;
        auto& imgs = image_order[r.feature.id];
        if (imgs.empty() || imgs.back() != r.image_id) {
            auto seen = std::find(imgs.begin(), imgs.end(), r.image_id);
            if (seen == imgs.end()) {
                imgs.push_back(r.image_id);
                c.cells_per_image.push_back(0);
                ++c.images;
                ++c.cells_per_image.back();
            } else {
                ++c.cells_per_image[static_cast<std::size_t>(seen - imgs.begin())];
            }
        } else {
            ++c.cells_per_image.back();
        }
        ++c.cells;
    }
}

EvaluationTable EvaluationTable::from_records(std::string model_name,
                                              std::vector<CellRecord> records) {
    EvaluationTable t;
    t.model_name_ = std::move(model_name);
    t.records_ = std::move(records);
    t.build_index(nullptr, "");
    return t;
}

bool EvaluationTable::has_feature(const std::string& feature_id) const {
    return counts_.count(feature_id) != 0;
}

const FeatureCounts& EvaluationTable::counts(const std::string& feature_id) const {
    const auto it = counts_.find(feature_id);
    if (it == counts_.end())
        throw DomainError("unknown feature '" + feature_id + "' in table for model '" +
                          model_name_ + "'");
    return it->second;
}

TableFormat format_from_path(const std::string& path) {
    const auto dot = path.find_last_of('.');
    const std::string ext = dot == std::string::npos ? "" : path.substr(dot);
    if (ext == ".csv") return TableFormat::csv;
    if (ext == ".jsonl") return TableFormat::jsonl;
    throw DomainError("cannot infer table format from '" + path +
                      "'; expected a .csv or .jsonl extension");
}

std::vector<EvaluationTable> load_tables(const std::string& path, TableFormat format) {
    std::vector<RawRow> rows =
        format == TableFormat::csv ? read_csv(path) : read_jsonl(path);

    std::vector<std::string> model_order;
    std::map<std::string, std::size_t> model_index;
    for (const RawRow& row : rows) {
        if (!model_index.count(row.model)) {
            model_index.emplace(row.model, model_order.size());
            model_order.push_back(row.model);
        }
    }

    std::vector<EvaluationTable> tables;
    tables.reserve(model_order.size());
    std::vector<std::vector<std::size_t>> lines(model_order.size());
    for (std::size_t m = 0; m < model_order.size(); ++m) {
        EvaluationTable t;
        t.model_name_ = model_order[m];
        tables.push_back(std::move(t));
    }
    for (RawRow& row : rows) {
        const std::size_t m = model_index.at(row.model);
        tables[m].records_.push_back(std::move(row.record));
        lines[m].push_back(row.line);
    }
    for (std::size_t m = 0; m < tables.size(); ++m)
        tables[m].build_index(&lines[m], path);
    return tables;
}

EvaluationTable parse_table(const std::string& path, TableFormat format) {
    std::vector<EvaluationTable> tables = load_tables(path, format);
    if (tables.empty()) throw ParseError(path + ": file contains no records");
    if (tables.size() > 1) {
        std::string names;
        for (const auto& t : tables) {
            if (!names.empty()) names += ", ";
            names += t.model_name();
        }
        throw ParseError(path + ": file contains " + std::to_string(tables.size()) +
                         " models (" + names + "); expected exactly one");
    }
    return std::move(tables.front());
}

void write_tables(const std::vector<EvaluationTable>& tables, const std::string& path,
                  TableFormat format) {
    for (const EvaluationTable& t : tables) {
        check_identifier(t.model_name(), "model name");
        for (const CellRecord& r : t.records()) {
            check_identifier(r.image_id, "image_id");
            check_identifier(r.cell_id, "cell_id");
            check_identifier(r.feature.id, "feature id");
        }
    }

    std::string out;
    if (format == TableFormat::csv) {
        out += kCsvHeader;
        out += '\n';
        for (const EvaluationTable& t : tables)
            for (const CellRecord& r : t.records()) write_row_csv(out, t.model_name(), r);
    } else {
        for (const EvaluationTable& t : tables) {
            for (const CellRecord& r : t.records()) {
                nlohmann::ordered_json obj;
                obj["model"] = t.model_name();
                obj["image_id"] = r.image_id;
                obj["cell_id"] = r.cell_id;
                obj["feature"] = r.feature.id;
                obj["true_value"] = r.true_value;
                obj["samples"] = r.predicted_samples;
                out += obj.dump();
                out += '\n';
            }
        }
    }
    atomic_write_text(path, out);
}

void write_table(const EvaluationTable& table, const std::string& path, TableFormat format) {
    write_tables({table}, path, format);
}

std::vector<double> pool_true_values(const EvaluationTable& table,
                                     const std::string& feature_id) {
    const FeatureCounts& c = table.counts(feature_id); // throws on unknown feature
    std::vector<double> out;
    out.reserve(c.cells);
    for (const CellRecord& r : table.records())
        if (r.feature.id == feature_id) out.push_back(r.true_value);
    return out;
}

std::vector<double> pool_predicted_samples(const EvaluationTable& table,
                                           const std::string& feature_id, std::size_t cap,
                                           std::uint64_t seed) {
    const FeatureCounts& c = table.counts(feature_id);
    if (cap < c.cells)
        throw DomainError("pooling cap " + std::to_string(cap) + " is smaller than the cell count " +
                          std::to_string(c.cells) + " for feature " + feature_id);

    const std::size_t k = c.samples_per_cell;
    const std::size_t per_cell =
        c.cells * k <= cap ? k : std::min(k, (cap + c.cells - 1) / c.cells);

    std::vector<double> out;
    out.reserve(c.cells * per_cell);
    std::vector<std::size_t> idx(k);
    for (const CellRecord& r : table.records()) {
        if (r.feature.id != feature_id) continue;
        if (per_cell == k) {
            out.insert(out.end(), r.predicted_samples.begin(), r.predicted_samples.end());
            continue;
        }
        // partial Fisher-Yates, seeded by cell identity so record order and
        // thread schedule cannot change the draw
        Rng rng(derive_seed(seed, "pool", r.image_id + '\x1f' + r.cell_id, feature_id));
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (std::size_t j = 0; j < per_cell; ++j) {
            const std::size_t swap = j + rng.uniform_int(k - j);
            std::swap(idx[j], idx[swap]);
        }
        std::sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(per_cell));
        for (std::size_t j = 0; j < per_cell; ++j)
            out.push_back(r.predicted_samples[idx[j]]);
    }
    return out;
}

} // namespace pscore

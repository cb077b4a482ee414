// Evaluation data model: per-cell ground-truth values plus the list of
// samples a model predicted for that cell, grouped by feature.

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pscore {

// `label` is display metadata; identity and file round trips use `id` only.
struct FeatureId {
    std::string id;
    std::string label;

    friend bool operator==(const FeatureId& a, const FeatureId& b) {
        return a.id == b.id;
    }
};

struct CellRecord {
    std::string image_id;
    std::string cell_id;
    FeatureId feature;
    double true_value = 0.0;
    std::vector<double> predicted_samples; // K >= 2, shared K per feature

    friend bool operator==(const CellRecord& a, const CellRecord& b) {
        return a.image_id == b.image_id && a.cell_id == b.cell_id &&
               a.feature == b.feature && a.true_value == b.true_value &&
               a.predicted_samples == b.predicted_samples;
    }
};

struct FeatureCounts {
    std::size_t images = 0;                   // M
    std::vector<std::size_t> cells_per_image; // N_i, image first-appearance order
    std::size_t cells = 0;                    // N
    std::size_t samples_per_cell = 0;         // K
};

enum class TableFormat { csv, jsonl };

// Immutable after construction; concurrent reads are safe.
class EvaluationTable {
public:
    // Validates every invariant: K >= 2, finite values, unique
    // (image, cell, feature) keys, consistent K per feature.
    static EvaluationTable from_records(std::string model_name,
                                        std::vector<CellRecord> records);

    const std::string& model_name() const { return model_name_; }
    const std::vector<CellRecord>& records() const { return records_; }

    // Features in first-appearance order.
    const std::vector<FeatureId>& features() const { return feature_order_; }
    bool has_feature(const std::string& feature_id) const;
    const FeatureCounts& counts(const std::string& feature_id) const;

    friend bool operator==(const EvaluationTable& a, const EvaluationTable& b) {
        return a.model_name_ == b.model_name_ && a.records_ == b.records_;
    }

private:
    friend std::vector<EvaluationTable> load_tables(const std::string&, TableFormat);

    EvaluationTable() = default;
    void build_index(const std::vector<std::size_t>* lines, const std::string& path);

    std::string model_name_;
    std::vector<CellRecord> records_;
    std::vector<FeatureId> feature_order_;
    std::map<std::string, FeatureCounts> counts_;
};

// Picks the format from the file extension (".csv" or ".jsonl").
TableFormat format_from_path(const std::string& path);

// Parses a file that contains exactly one model. Multi-model files are an
// error here; use load_tables to split them.
EvaluationTable parse_table(const std::string& path, TableFormat format);

// Splits a file into one table per model value, in first-appearance order.
std::vector<EvaluationTable> load_tables(const std::string& path, TableFormat format);

// Serializes tables row by row (concatenated in the given order) with
// shortest round-trip number rendering. Writes are atomic: a temp file in
// the target directory is renamed over the destination.
void write_tables(const std::vector<EvaluationTable>& tables, const std::string& path,
                  TableFormat format);
void write_table(const EvaluationTable& table, const std::string& path,
                 TableFormat format);

// All true values of one feature, length N, in record order.
std::vector<double> pool_true_values(const EvaluationTable& table,
                                     const std::string& feature_id);

// All predicted samples of one feature. If N*K exceeds cap, each cell
// contributes ceil(cap/N) samples drawn without replacement, seeded per cell
// so the result is independent of record order. Requires cap >= N.
std::vector<double> pool_predicted_samples(const EvaluationTable& table,
                                           const std::string& feature_id,
                                           std::size_t cap, std::uint64_t seed);

inline constexpr std::size_t kDefaultPoolCap = 1000000;

// Shortest decimal string that round-trips the exact double.
std::string format_double(double v);

// Writes content through a temp file in the target directory, then renames
// it over path; readers never observe a partial file.
void atomic_write_text(const std::string& path, const std::string& content);

} // namespace pscore

#pragma once

// Per-seed run records to an averaged results table, plus JSON round-tripping
// of the records written next to each run.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "sparselab/executor.hpp"
#include "sparselab/plan.hpp"

namespace sparselab {

/// All records of one (technique, seed) plan execution.
struct TechniqueRuns {
    Technique technique = Technique::MP;
    std::uint64_t seed = 0;
    std::vector<RunRecord> records;
};

struct TableCell {
    bool present = false;
    double accuracy = 0.0;
    double loss = 0.0;
    bool best_accuracy = false;
    bool best_loss = false;
};

struct TableRow {
    double sparsity = 0.0;
    std::uint64_t memory_bytes = 0;
    std::vector<TableCell> cells;  // one per technique, in column order
};

struct ResultsTable {
    std::vector<Technique> techniques;
    std::vector<std::uint64_t> seeds;
    std::vector<TableRow> rows;  // ascending sparsity
};

/// Each cell is the mean over exactly the given seeds of the selected
/// checkpoint's metrics. A (technique, sparsity) pair missing for any seed
/// leaves the cell empty. Memory comes from the first column with the row.
ResultsTable build_table(const std::vector<Technique>& techniques,
                         const std::vector<std::uint64_t>& seeds,
                         const std::vector<TechniqueRuns>& runs);

/// Fixed-width markdown. Best accuracy (max) and loss (min) per row are
/// marked with '*'; ties are all marked.
std::string emit_table(const ResultsTable& table);

nlohmann::json to_json(const ResultsTable& table);
nlohmann::json to_json(const RunRecord& record);
RunRecord record_from_json(const nlohmann::json& j);

/// The max|w| at the start of each run, one line per run.
std::string emit_weight_growth(const std::vector<RunRecord>& records);

}  // namespace sparselab

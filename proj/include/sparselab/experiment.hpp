#pragma once

// Config-driven experiments and the artifact directory they produce:
//
//   <out>/config.txt                    canonical config
//   <out>/results.md, results.json      table averaged over seeds
//   <out>/seed-<s>/<TECH>/records.json  one RunRecord per run
//   <out>/seed-<s>/<TECH>/*.ckpt        init, per-run rewind and final checkpoints
//   <out>/seed-<s>/<TECH>/final.ckpt    last run's final checkpoint
//   <out>/seed-<s>/<TECH>/final.spm     sparse final model
//   <out>/seed-<s>/<TECH>/memory.json   memory report of the final model
//   <out>/FAILED                        present only after a failed run

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "sparselab/config.hpp"
#include "sparselab/results.hpp"

namespace sparselab {

struct ExperimentResult {
    ResultsTable table;
    std::vector<TechniqueRuns> runs;
    std::filesystem::path output_dir;
};

/// Runs every (seed, technique) plan in seed order and writes the artifacts.
/// On failure writes <out>/FAILED with the reason and rethrows. progress may
/// be null.
ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress = nullptr);

std::filesystem::path technique_dir(const std::filesystem::path& out, std::uint64_t seed,
                                    Technique technique);
std::string checkpoint_file_name(const std::string& checkpoint_id);

/// Rebuilds the table and memory summary from an artifact directory.
std::string report_directory(const std::filesystem::path& out);

/// Re-checks checksums, mask invariants, sparsity bookkeeping and the sparse
/// model against the final checkpoint. Returns one line per problem.
std::vector<std::string> verify_directory(const std::filesystem::path& out,
                                          std::ostream* progress = nullptr);

}  // namespace sparselab

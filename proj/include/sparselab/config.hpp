#pragma once

// Experiment configuration: a flat `key = value` text format.
//
//   # comment
//   technique       = SLT, MP        (comma list; table columns follow this order)
//   target_sparsity = 0.9
//   task            = copy
//   run_steps       = 3000
//
// Blank lines and '#' comments are ignored. Every problem in a file is
// collected and reported together, each with its line number.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparselab/executor.hpp"
#include "sparselab/model.hpp"
#include "sparselab/plan.hpp"
#include "sparselab/sparse_store.hpp"
#include "sparselab/tasks.hpp"

namespace sparselab {

struct ExperimentConfig {
    std::vector<Technique> techniques;
    double target_sparsity = 0.0;
    Task task = Task::Copy;
    std::size_t run_steps = 0;
    double rewind_fraction = 0.05;
    /// 0 selects the default of 2% of run_steps.
    std::size_t prune_interval = 0;
    std::vector<std::uint64_t> seeds{1, 2};
    std::string output_dir = "runs";

    ModelConfig model;
    std::size_t batch_size = 16;
    std::size_t seq_len = 8;
    double base_lr = 0.1;
    double warmup_fraction = 0.02;
    double ramp_fraction = 0.8;
    double eval_fraction = 0.05;
    std::size_t eval_batches = 4;
    std::size_t eval_batch_size = 32;
    RewindSource rewind_source = RewindSource::LastIteration;
    bool direct_jump = false;
    StorageWidths widths;

    std::size_t effective_prune_interval() const;
    PlanOptions plan_options() const;
    TrainingSetup training_setup(std::uint64_t seed) const;
    PrunePlan plan_for(Technique technique) const;

    bool operator==(const ExperimentConfig&) const = default;
};

/// Throws ConfigError with every problem found, one per line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical form: every key, fixed order, shortest round-trip numbers.
std::string emit_config(const ExperimentConfig& cfg);

struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<double> target_sparsity;
    std::optional<std::string> technique;
};

/// Applies command-line overrides and re-validates.
void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& overrides);

/// output_dir, placed under $SPARSELAB_OUTPUT_ROOT when that is set and the
/// directory is relative.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

inline constexpr const char* kOutputRootEnv = "SPARSELAB_OUTPUT_ROOT";

}  // namespace sparselab

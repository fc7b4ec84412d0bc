#pragma once

// Runs a PrunePlan: one training run per plan step, with optimizer reset,
// rewind-checkpoint capture, mask computation from the converged model, and
// rewinding between runs.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sparselab/checkpoint.hpp"
#include "sparselab/plan.hpp"
#include "sparselab/sparse_store.hpp"
#include "sparselab/tasks.hpp"

namespace sparselab {

struct TrainingSetup {
    ModelConfig model;
    Task task = Task::Copy;
    std::size_t batch_size = 16;
    std::size_t seq_len = 8;
    AdamConfig adam{0.9, 0.98, 1e-9, 0.1, 1};
    /// Warmup per run as a fraction of run steps; w = max(1, round(f · steps)).
    double warmup_fraction = 0.02;
    /// Metrics are recorded every eval_fraction of a run (and at its end).
    double eval_fraction = 0.05;
    std::size_t eval_batches = 4;
    std::size_t eval_batch_size = 32;
    StorageWidths widths;
    std::uint64_t seed = 1;
};

struct CheckpointMetrics {
    std::size_t step = 0;
    double loss = 0.0;
    double token_accuracy = 0.0;
    double sparsity = 0.0;
    double max_abs_weight = 0.0;
    double mean_abs_weight = 0.0;
};

struct RunRecord {
    std::size_t run_index = 0;
    PlanStep step;
    std::vector<CheckpointMetrics> checkpoints;
    /// Index into checkpoints of the selected ("best") model.
    std::size_t selected = 0;
    double start_max_abs_weight = 0.0;
    double start_mean_abs_weight = 0.0;
    std::string rewind_checkpoint_id;
    std::string final_checkpoint_id;
    std::uint64_t memory_dense_bytes = 0;
    std::uint64_t memory_bytes = 0;
    std::vector<std::string> log;

    const CheckpointMetrics& best() const { return checkpoints.at(selected); }
};

/// θ_t ⊙ m with an optional sign transform, and a fresh optimizer with t = 0.
struct RewoundState {
    ParamRegistry params;
    OptimizerState optimizer;
};
RewoundState rewind(const Checkpoint& ckpt, const MaskSet& m, Transform transform,
                    std::uint64_t transform_seed = 0);

/// Magnitude mask of the converged params, chained on prior. Throws
/// MonotonicityError unless next_sparsity exceeds the prior's sparsity.
MaskSet mask_from_converged(const Checkpoint& ckpt, double next_sparsity, const MaskSet& prior);

/// Hooks for persistence and for tests that audit run transitions.
class PlanObserver {
public:
    virtual ~PlanObserver() = default;
    /// Params, optimizer and mask just before the first update of a run. For
    /// rewound runs, source is the checkpoint the params were taken from.
    virtual void on_run_start(std::size_t /*run*/, const PlanStep& /*step*/,
                              const ParamRegistry& /*params*/, const OptimizerState& /*opt*/,
                              const MaskSet& /*mask*/, const Checkpoint* /*source*/) {}
    /// After the update, any pruning, and mask enforcement of one step.
    virtual void on_step(std::size_t /*run*/, std::size_t /*step*/, const ParamRegistry& /*params*/,
                         const MaskSet& /*mask*/) {}
    virtual void on_checkpoint(std::size_t /*run*/, const Checkpoint& /*ckpt*/, bool /*is_rewind*/) {}
};

struct PlanResult {
    std::vector<RunRecord> records;
    Checkpoint final_checkpoint;
};

PlanResult execute_plan(const PrunePlan& plan, const TrainingSetup& setup,
                        PlanObserver* observer = nullptr);

/// Selection rule for the reported model of a run: gradual runs pick among
/// their last four checkpoints (earlier ones have not reached the target),
/// other runs among all. Highest accuracy wins, then lowest loss, then the earliest.
std::size_t select_best(const std::vector<CheckpointMetrics>& checkpoints, RunMode mode);

}  // namespace sparselab

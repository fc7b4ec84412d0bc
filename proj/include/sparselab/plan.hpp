#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sparselab/pruning.hpp"

namespace sparselab {

enum class Technique { MP, LT, SLT, CLT, SLT_MP, MP_SLT, CLT_RANDOM_SIGN };

std::string_view to_string(Technique t);
/// Accepts the names printed by to_string (case-insensitive, '-' or '_').
Technique parse_technique(std::string_view name);

/// Where a run takes its starting weights from.
enum class RewindTo {
    None,     // continue from the current model (first run of a plan)
    Initial,  // θ_0, the untrained model
    Early,    // θ_t, the rewind checkpoint of an earlier run
};

enum class Transform { None, Clt, RandomSign };
enum class RunMode { FixedMask, Gradual };

/// Which run's θ_t an Early rewind uses.
enum class RewindSource {
    LastIteration,  // the run that produced the mask being applied (default)
    DenseRun,       // always the first, dense run
};

std::string_view to_string(RewindTo r);
std::string_view to_string(Transform t);
std::string_view to_string(RunMode m);
std::string_view to_string(RewindSource s);
RewindSource parse_rewind_source(std::string_view name);

struct PlanStep {
    std::size_t run_steps = 0;
    double target_sparsity = 0.0;
    RewindTo rewind_to = RewindTo::None;
    Transform transform = Transform::None;
    RunMode mode = RunMode::FixedMask;
    std::optional<PruneSchedule> schedule;  // present iff mode == Gradual

    bool operator==(const PlanStep&) const = default;
};

struct PlanOptions {
    std::size_t run_steps = 3000;
    /// Step of every run at which θ_t is captured.
    std::size_t rewind_step = 150;
    std::size_t prune_interval = 60;
    /// Fraction of a gradual run over which the cubic schedule ramps.
    double ramp_fraction = 0.8;
    RewindSource rewind_source = RewindSource::LastIteration;
    /// Skip the ladder: one sparse run straight at the target.
    bool direct = false;

    /// rewind_step = 5% and prune_interval = 2% of run_steps.
    static PlanOptions for_run_steps(std::size_t run_steps);
};

struct PrunePlan {
    Technique technique = Technique::MP;
    double target_sparsity = 0.0;
    std::size_t rewind_step = 0;
    RewindSource rewind_source = RewindSource::LastIteration;
    std::vector<PlanStep> steps;

    std::size_t run_count() const { return steps.size(); }
    /// Throws ContractError if sparsities do not strictly increase or a
    /// step's schedule presence disagrees with its mode.
    void validate() const;
    /// Human-readable listing, one line per run.
    std::string describe() const;
};

/// Expands a technique into its sequence of training runs. Throws
/// ConfigError for targets off the sparsity ladder.
PrunePlan make_plan(Technique technique, double target_sparsity, const PlanOptions& options);
PrunePlan make_plan(Technique technique, double target_sparsity, std::size_t run_steps,
                    std::size_t rewind_step);

}  // namespace sparselab

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparselab/model.hpp"
#include "sparselab/optim.hpp"

namespace sparselab {

/// One binary keep-tensor (1 keep, 0 pruned) per prunable parameter, in
/// registry order.
class MaskSet {
public:
    struct Entry {
        std::string name;
        Tensor keep;
    };

    MaskSet() = default;

    /// All-ones mask covering exactly the prunable entries of reg.
    static MaskSet ones(const ParamRegistry& reg);

    void add(std::string name, Tensor keep);

    std::span<const Entry> entries() const { return entries_; }
    std::span<Entry> entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    const Entry* find(const std::string& name) const;
    const Entry& at(const std::string& name) const;

    std::size_t total_count() const;
    std::size_t pruned_count() const;
    /// pruned / total over every covered element; 0 for an empty set.
    double sparsity() const;
    std::size_t pruned_count(const std::string& name) const;

    /// Throws ContractError unless names, order and shapes match the prunable entries of reg.
    void check_covers(const ParamRegistry& reg) const;
    bool covers(const ParamRegistry& reg) const;

    /// Every kept entry of *this is also kept in other.
    bool keep_subset_of(const MaskSet& other) const;
    bool bitwise_equal(const MaskSet& other) const;

private:
    std::vector<Entry> entries_;
};

struct PruneSchedule {
    double s0 = 0.0;
    double sT = 0.0;
    std::size_t ramp_steps = 1;
    std::size_t prune_interval = 1;

    /// Throws ConfigError for s0 ≥ sT, out-of-range values or interval > ramp.
    void validate() const;
    bool operator==(const PruneSchedule&) const = default;
};

/// Cubic gradual-pruning target: sT + min(0, (s0 − sT)(1 − t/ramp)³).
double target_sparsity(std::size_t t, const PruneSchedule& sched);

/// Per-layer magnitude mask. Each prunable parameter gets exactly
/// round_half_even(sparsity · n) pruned entries; entries pruned in prior stay
/// pruned, and among the survivors the smallest |value| go first, lower flat
/// index first on ties. Throws MonotonicityError when a layer would need to
/// un-prune entries of prior.
MaskSet magnitude_mask(const ParamRegistry& reg, double sparsity, const MaskSet& prior);

/// θ ⊙ m: masked entries become exactly 0.0, others are untouched.
void apply_mask(ParamRegistry& reg, const MaskSet& m);

/// Called after every optimizer step of a masked run; same contract as apply_mask.
void enforce_mask_after_step(ParamRegistry& reg, const MaskSet& m);

/// Zeroes the Adam moments of masked entries so they cannot carry a pruned
/// weight's history into later steps.
void mask_optimizer_moments(OptimizerState& state, const ParamRegistry& reg, const MaskSet& m);

/// √(6 / (fan_in + fan_out)).
double alpha_for_layer(std::size_t fan_in, std::size_t fan_out);

/// Survivors become sign(p)·α_l (sign(0) taken as +), masked entries 0.0.
/// Non-prunable parameters are left alone.
void clt_transform(ParamRegistry& reg, const MaskSet& m);

/// Survivors become ±α_l with an independent fair sign per entry drawn from seed.
void random_sign_transform(ParamRegistry& reg, const MaskSet& m, std::uint64_t seed);

/// The iterative target sequence 0.1 … 0.8 (10-point steps), 0.85, 0.9, 0.95, 0.98.
std::span<const double> full_ladder();
bool on_ladder(double target);
/// Ladder prefix ending at target; ConfigError when target is not a ladder level.
std::vector<double> sparsity_ladder(double target);

/// Fraction of prunable entries that are exactly zero.
double measured_sparsity(const ParamRegistry& reg);

/// Largest and mean absolute value over prunable entries.
std::pair<double, double> weight_magnitude(const ParamRegistry& reg);

/// Every masked entry of reg is exactly 0.0.
bool respects_mask(const ParamRegistry& reg, const MaskSet& m);

}  // namespace sparselab

#pragma once

#include <cstddef>
#include <vector>

#include "sparselab/model.hpp"

namespace sparselab {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    double base_lr = 1.0;
    std::size_t warmup = 1;

    bool operator==(const AdamConfig&) const = default;
};

/// Step counter plus Adam moments, one buffer per registry entry in registry order.
struct OptimizerState {
    std::size_t step = 0;
    AdamConfig hp;
    std::vector<std::vector<double>> first;
    std::vector<std::vector<double>> second;

    static OptimizerState for_registry(const ParamRegistry& reg, const AdamConfig& hp);
    bool bitwise_equal(const OptimizerState& other) const;
};

/// base / max(t, w): flat through the warmup, then inverse-linear decay.
double lr(std::size_t t, std::size_t warmup, double base);

/// One bias-corrected Adam update using each parameter's accumulated grad,
/// with step size lr(state.step, warmup, base_lr). Increments state.step.
void optimizer_step(ParamRegistry& reg, OptimizerState& state);

/// t = 0 and every moment zeroed.
void reset_optimizer(OptimizerState& state);

}  // namespace sparselab

#include "sparselab/optim.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

#include "sparselab/errors.hpp"

namespace sparselab {

OptimizerState OptimizerState::for_registry(const ParamRegistry& reg, const AdamConfig& hp) {
    if (hp.warmup == 0) {
        throw ConfigError("optimizer warmup must be at least 1 step");
    }
    OptimizerState s;
    s.hp = hp;
    for (const auto& e : reg.entries()) {
        s.first.emplace_back(e.tensor.size(), 0.0);
        s.second.emplace_back(e.tensor.size(), 0.0);
    }
    return s;
}

bool OptimizerState::bitwise_equal(const OptimizerState& other) const {
    auto same = [](const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b) {
        if (a.size() != b.size()) {
            return false;
        }
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i].size() != b[i].size()) {
                return false;
            }
            for (std::size_t k = 0; k < a[i].size(); ++k) {
                if (std::bit_cast<std::uint64_t>(a[i][k]) != std::bit_cast<std::uint64_t>(b[i][k])) {
                    return false;
                }
            }
        }
        return true;
    };
    return step == other.step && hp == other.hp && same(first, other.first) &&
           same(second, other.second);
}

double lr(std::size_t t, std::size_t warmup, double base) {
    return base / static_cast<double>(std::max(t, warmup));
}

void optimizer_step(ParamRegistry& reg, OptimizerState& state) {
    auto entries = reg.entries();
    if (state.first.size() != entries.size() || state.second.size() != entries.size()) {
        throw ContractError("optimizer state does not match the registry");
    }
    const auto& hp = state.hp;
    const double step_size = lr(state.step, hp.warmup, hp.base_lr);
    const double t1 = static_cast<double>(state.step + 1);
    const double c1 = 1.0 - std::pow(hp.beta1, t1);
    const double c2 = 1.0 - std::pow(hp.beta2, t1);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto& tensor = entries[i].tensor;
        if (!tensor.has_grad()) {
            throw ContractError("missing gradient for parameter " + entries[i].name);
        }
        auto& m = state.first[i];
        auto& v = state.second[i];
        if (m.size() != tensor.size() || v.size() != tensor.size()) {
            throw ContractError("moment buffer shape mismatch for " + entries[i].name);
        }
        const auto g = std::as_const(tensor).grad();
        auto p = tensor.values();
        for (std::size_t k = 0; k < p.size(); ++k) {
            m[k] = hp.beta1 * m[k] + (1.0 - hp.beta1) * g[k];
            v[k] = hp.beta2 * v[k] + (1.0 - hp.beta2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            p[k] -= step_size * m_hat / (std::sqrt(v_hat) + hp.eps);
        }
    }
    ++state.step;
}

void reset_optimizer(OptimizerState& state) {
    state.step = 0;
    for (auto& m : state.first) {
        std::fill(m.begin(), m.end(), 0.0);
    }
    for (auto& v : state.second) {
        std::fill(v.begin(), v.end(), 0.0);
    }
}

}  // namespace sparselab

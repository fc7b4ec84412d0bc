#include "sparselab/pruning.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>

#include "sparselab/errors.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

namespace {

constexpr std::array<double, 12> kLadder = {0.1, 0.2, 0.3,  0.4, 0.5,  0.6,
                                            0.7, 0.8, 0.85, 0.9, 0.95, 0.98};
constexpr double kLadderTolerance = 1e-9;

std::size_t count_pruned(const Tensor& keep) {
    return static_cast<std::size_t>(
        std::count(keep.values().begin(), keep.values().end(), 0.0));
}

// round(x) with ties to even, independent of the current FP rounding mode.
std::size_t round_half_even(double x) {
    const double fl = std::floor(x);
    const double diff = x - fl;
    auto r = static_cast<std::size_t>(fl);
    if (diff > 0.5 || (diff == 0.5 && r % 2 == 1)) {
        ++r;
    }
    return r;
}

}  // namespace

// ---- MaskSet ------------------------------------------------------------

MaskSet MaskSet::ones(const ParamRegistry& reg) {
    MaskSet m;
    for (const auto& e : reg.entries()) {
        if (e.prunable) {
            m.entries_.push_back(
                Entry{e.name, Tensor(e.tensor.shape(), std::vector<double>(e.tensor.size(), 1.0))});
        }
    }
    return m;
}

void MaskSet::add(std::string name, Tensor keep) {
    if (find(name) != nullptr) {
        throw ContractError("duplicate mask entry: " + name);
    }
    for (double v : keep.values()) {
        if (v != 0.0 && v != 1.0) {
            throw ContractError("mask entry " + name + " is not binary");
        }
    }
    entries_.push_back(Entry{std::move(name), std::move(keep)});
}

const MaskSet::Entry* MaskSet::find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &*it;
}

const MaskSet::Entry& MaskSet::at(const std::string& name) const {
    const auto* e = find(name);
    if (e == nullptr) {
        throw ContractError("mask has no entry for " + name);
    }
    return *e;
}

std::size_t MaskSet::total_count() const {
    return std::accumulate(entries_.begin(), entries_.end(), std::size_t{0},
                           [](std::size_t acc, const Entry& e) { return acc + e.keep.size(); });
}

std::size_t MaskSet::pruned_count() const {
    return std::accumulate(entries_.begin(), entries_.end(), std::size_t{0},
                           [](std::size_t acc, const Entry& e) { return acc + count_pruned(e.keep); });
}

double MaskSet::sparsity() const {
    const auto total = total_count();
    return total == 0 ? 0.0 : static_cast<double>(pruned_count()) / static_cast<double>(total);
}

std::size_t MaskSet::pruned_count(const std::string& name) const {
    return count_pruned(at(name).keep);
}

void MaskSet::check_covers(const ParamRegistry& reg) const {
    std::size_t i = 0;
    for (const auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        if (i >= entries_.size() || entries_[i].name != e.name) {
            throw ContractError("mask does not cover parameter " + e.name);
        }
        if (entries_[i].keep.shape() != e.tensor.shape()) {
            throw ContractError("mask shape " + shape_str(entries_[i].keep.shape()) +
                                " does not match " + e.name + " " + shape_str(e.tensor.shape()));
        }
        ++i;
    }
    if (i != entries_.size()) {
        throw ContractError("mask covers entries that are not prunable parameters");
    }
}

bool MaskSet::covers(const ParamRegistry& reg) const {
    try {
        check_covers(reg);
        return true;
    } catch (const ContractError&) {
        return false;
    }
}

bool MaskSet::keep_subset_of(const MaskSet& other) const {
    if (entries_.size() != other.entries_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto a = entries_[i].keep.values();
        const auto b = other.entries_[i].keep.values();
        if (entries_[i].name != other.entries_[i].name || a.size() != b.size()) {
            return false;
        }
        for (std::size_t k = 0; k < a.size(); ++k) {
            if (a[k] == 1.0 && b[k] != 1.0) {
                return false;
            }
        }
    }
    return true;
}

bool MaskSet::bitwise_equal(const MaskSet& other) const {
    return keep_subset_of(other) && other.keep_subset_of(*this);
}

// ---- schedule -----------------------------------------------------------

void PruneSchedule::validate() const {
    std::vector<std::string> problems;
    if (!(s0 >= 0.0 && s0 < 1.0)) {
        problems.push_back("s0 must lie in [0, 1)");
    }
    if (!(sT > 0.0 && sT <= 1.0)) {
        problems.push_back("sT must lie in (0, 1]");
    }
    if (!(s0 < sT)) {
        problems.push_back("s0 must be below sT");
    }
    if (ramp_steps == 0 || prune_interval == 0) {
        problems.push_back("ramp_steps and prune_interval must be positive");
    } else if (prune_interval > ramp_steps) {
        problems.push_back("prune_interval must not exceed ramp_steps");
    }
    if (!problems.empty()) {
        std::string msg = "invalid prune schedule:";
        for (const auto& p : problems) {
            msg += " " + p + ";";
        }
        throw ConfigError(msg);
    }
}

double target_sparsity(std::size_t t, const PruneSchedule& sched) {
    const double remaining =
        1.0 - static_cast<double>(t) / static_cast<double>(sched.ramp_steps);
    const double cubic = (sched.s0 - sched.sT) * (remaining * remaining * remaining);
    return sched.sT + std::min(0.0, cubic);
}

// ---- masks --------------------------------------------------------------

MaskSet magnitude_mask(const ParamRegistry& reg, double sparsity, const MaskSet& prior) {
    if (!(sparsity >= 0.0 && sparsity <= 1.0)) {
        throw ContractError("sparsity must lie in [0, 1]");
    }
    prior.check_covers(reg);
    MaskSet out;
    std::vector<std::size_t> order;
    for (const auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        const Tensor& prior_keep = prior.at(e.name).keep;
        const std::size_t n = e.tensor.size();
        const std::size_t want = std::min(n, round_half_even(sparsity * static_cast<double>(n)));
        const std::size_t already = count_pruned(prior_keep);
        if (want < already) {
            throw MonotonicityError("sparsity " + std::to_string(sparsity) + " would un-prune " +
                                    std::to_string(already - want) + " entries of " + e.name);
        }
        Tensor keep = prior_keep.clone();
        const auto pk = prior_keep.values();
        const auto vals = e.tensor.values();
        order.clear();
        for (std::size_t k = 0; k < n; ++k) {
            if (pk[k] == 1.0) {
                order.push_back(k);
            }
        }
        const std::size_t extra = want - already;
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(extra),
                          order.end(), [&](std::size_t a, std::size_t b) {
                              const double ma = std::abs(vals[a]);
                              const double mb = std::abs(vals[b]);
                              return ma < mb || (ma == mb && a < b);
                          });
        auto kv = keep.values();
        for (std::size_t i = 0; i < extra; ++i) {
            kv[order[i]] = 0.0;
        }
        out.add(e.name, std::move(keep));
    }
    return out;
}

void apply_mask(ParamRegistry& reg, const MaskSet& m) {
    m.check_covers(reg);
    for (auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        const auto keep = m.at(e.name).keep.values();
        auto v = e.tensor.values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (keep[k] == 0.0) {
                v[k] = 0.0;
            }
        }
    }
}

void enforce_mask_after_step(ParamRegistry& reg, const MaskSet& m) { apply_mask(reg, m); }

void mask_optimizer_moments(OptimizerState& state, const ParamRegistry& reg, const MaskSet& m) {
    m.check_covers(reg);
    const auto entries = reg.entries();
    if (state.first.size() != entries.size()) {
        throw ContractError("optimizer state does not match the registry");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (!entries[i].prunable) {
            continue;
        }
        const auto keep = m.at(entries[i].name).keep.values();
        for (std::size_t k = 0; k < keep.size(); ++k) {
            if (keep[k] == 0.0) {
                state.first[i][k] = 0.0;
                state.second[i][k] = 0.0;
            }
        }
    }
}

// ---- transforms ---------------------------------------------------------

double alpha_for_layer(std::size_t fan_in, std::size_t fan_out) {
    if (fan_in == 0 || fan_out == 0) {
        throw ContractError("alpha_for_layer: fan_in and fan_out must be positive");
    }
    return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void clt_transform(ParamRegistry& reg, const MaskSet& m) {
    m.check_covers(reg);
    for (auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        const double alpha = alpha_for_layer(e.fan_in, e.fan_out);
        const auto keep = m.at(e.name).keep.values();
        auto v = e.tensor.values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            v[k] = keep[k] == 0.0 ? 0.0 : (v[k] < 0.0 ? -alpha : alpha);
        }
    }
}

void random_sign_transform(ParamRegistry& reg, const MaskSet& m, std::uint64_t seed) {
    m.check_covers(reg);
    Rng rng(seed);
    for (auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        const double alpha = alpha_for_layer(e.fan_in, e.fan_out);
        const auto keep = m.at(e.name).keep.values();
        auto v = e.tensor.values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (keep[k] == 0.0) {
                v[k] = 0.0;
            } else {
                v[k] = (rng.next() >> 63) != 0 ? -alpha : alpha;
            }
        }
    }
}

// ---- ladder -------------------------------------------------------------

std::span<const double> full_ladder() { return kLadder; }

bool on_ladder(double target) {
    return std::any_of(kLadder.begin(), kLadder.end(),
                       [&](double s) { return std::abs(s - target) < kLadderTolerance; });
}

std::vector<double> sparsity_ladder(double target) {
    std::vector<double> out;
    for (double s : kLadder) {
        out.push_back(s);
        if (std::abs(s - target) < kLadderTolerance) {
            return out;
        }
    }
    throw ConfigError("target sparsity " + std::to_string(target) +
                      " is not on the ladder (0.1..0.8 in steps of 0.1, 0.85, 0.9, 0.95, 0.98)");
}

// ---- measurements -------------------------------------------------------

double measured_sparsity(const ParamRegistry& reg) {
    std::size_t zeros = 0, total = 0;
    for (const auto& e : reg.entries()) {
        if (e.prunable) {
            total += e.tensor.size();
            zeros += static_cast<std::size_t>(
                std::count(e.tensor.values().begin(), e.tensor.values().end(), 0.0));
        }
    }
    return total == 0 ? 0.0 : static_cast<double>(zeros) / static_cast<double>(total);
}

std::pair<double, double> weight_magnitude(const ParamRegistry& reg) {
    double mx = 0.0, total = 0.0;
    std::size_t n = 0;
    for (const auto& e : reg.entries()) {
        if (e.prunable) {
            for (double v : e.tensor.values()) {
                mx = std::max(mx, std::abs(v));
                total += std::abs(v);
            }
            n += e.tensor.size();
        }
    }
    return {mx, n == 0 ? 0.0 : total / static_cast<double>(n)};
}

bool respects_mask(const ParamRegistry& reg, const MaskSet& m) {
    if (!m.covers(reg)) {
        return false;
    }
    for (const auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        const auto keep = m.at(e.name).keep.values();
        const auto v = e.tensor.values();
        for (std::size_t k = 0; k < v.size(); ++k) {
            if (keep[k] == 0.0 && std::bit_cast<std::uint64_t>(v[k]) != 0) {
                return false;
            }
        }
    }
    return true;
}

}  // namespace sparselab

#include "sparselab/plan.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sparselab/errors.hpp"

namespace sparselab {

namespace {

// Switch point between the SLT and MP phases of SLT-MP / MP-SLT.
constexpr double kHandoffSparsity = 0.6;
constexpr double kSltMpFirstJump = 0.5;

std::string normalize(std::string_view name) {
    std::string out;
    for (char c : name) {
        out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return out;
}

PlanStep dense_step(std::size_t run_steps) {
    return PlanStep{run_steps, 0.0, RewindTo::None, Transform::None, RunMode::FixedMask, std::nullopt};
}

PlanStep gradual_step(std::size_t run_steps, double s0, double sT, RewindTo rewind,
                      const PlanOptions& o, std::size_t ramp) {
    PruneSchedule sched{s0, sT, ramp, o.prune_interval};
    sched.validate();
    return PlanStep{run_steps, sT, rewind, Transform::None, RunMode::Gradual, sched};
}

PlanStep fixed_step(std::size_t run_steps, double s, RewindTo rewind, Transform transform) {
    return PlanStep{run_steps, s, rewind, transform, RunMode::FixedMask, std::nullopt};
}

}  // namespace

std::string_view to_string(Technique t) {
    switch (t) {
        case Technique::MP:
            return "MP";
        case Technique::LT:
            return "LT";
        case Technique::SLT:
            return "SLT";
        case Technique::CLT:
            return "CLT";
        case Technique::SLT_MP:
            return "SLT-MP";
        case Technique::MP_SLT:
            return "MP-SLT";
        case Technique::CLT_RANDOM_SIGN:
            return "CLT-RANDOM-SIGN";
    }
    return "MP";
}

Technique parse_technique(std::string_view name) {
    const auto n = normalize(name);
    for (auto t : {Technique::MP, Technique::LT, Technique::SLT, Technique::CLT, Technique::SLT_MP,
                   Technique::MP_SLT, Technique::CLT_RANDOM_SIGN}) {
        if (normalize(to_string(t)) == n) {
            return t;
        }
    }
    throw ConfigError("unknown technique '" + std::string(name) +
                      "' (expected MP, LT, SLT, CLT, SLT-MP, MP-SLT or CLT-RANDOM-SIGN)");
}

std::string_view to_string(RewindTo r) {
    switch (r) {
        case RewindTo::None:
            return "none";
        case RewindTo::Initial:
            return "initial";
        case RewindTo::Early:
            return "early";
    }
    return "none";
}

std::string_view to_string(Transform t) {
    switch (t) {
        case Transform::None:
            return "none";
        case Transform::Clt:
            return "clt";
        case Transform::RandomSign:
            return "random-sign";
    }
    return "none";
}

std::string_view to_string(RunMode m) { return m == RunMode::Gradual ? "gradual" : "fixed-mask"; }

std::string_view to_string(RewindSource s) {
    return s == RewindSource::DenseRun ? "dense" : "last";
}

RewindSource parse_rewind_source(std::string_view name) {
    if (name == "last") {
        return RewindSource::LastIteration;
    }
    if (name == "dense") {
        return RewindSource::DenseRun;
    }
    throw ConfigError("unknown rewind source '" + std::string(name) + "' (expected last or dense)");
}

PlanOptions PlanOptions::for_run_steps(std::size_t run_steps) {
    PlanOptions o;
    o.run_steps = run_steps;
    o.rewind_step = run_steps / 20;
    o.prune_interval = std::max<std::size_t>(1, run_steps / 50);
    return o;
}

void PrunePlan::validate() const {
    if (steps.empty()) {
        throw ContractError("plan has no steps");
    }
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        if (s.run_steps == 0) {
            throw ContractError("plan step " + std::to_string(i) + " has no training steps");
        }
        if ((s.mode == RunMode::Gradual) != s.schedule.has_value()) {
            throw ContractError("plan step " + std::to_string(i) +
                                ": schedule must be present exactly for gradual runs");
        }
        if (i > 0 && !(s.target_sparsity > steps[i - 1].target_sparsity)) {
            throw ContractError("plan target sparsities must strictly increase (step " +
                                std::to_string(i) + ")");
        }
        if (i > 0 && s.rewind_to == RewindTo::None) {
            throw ContractError("plan step " + std::to_string(i) + " must rewind");
        }
    }
}

std::string PrunePlan::describe() const {
    std::ostringstream os;
    char buf[160];
    std::snprintf(buf, sizeof buf, "technique %s  target %.2f  runs %zu  rewind_step %zu  rewind_source %s\n",
                  std::string(to_string(technique)).c_str(), target_sparsity, steps.size(),
                  rewind_step, std::string(to_string(rewind_source)).c_str());
    os << buf;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const auto& s = steps[i];
        std::snprintf(buf, sizeof buf, "  run %2zu  %-10s  sparsity %.2f  rewind %-7s  transform %-11s  steps %zu",
                      i, std::string(to_string(s.mode)).c_str(), s.target_sparsity,
                      std::string(to_string(s.rewind_to)).c_str(),
                      std::string(to_string(s.transform)).c_str(), s.run_steps);
        os << buf;
        if (s.schedule) {
            std::snprintf(buf, sizeof buf, "  schedule s0=%.2f sT=%.2f ramp=%zu interval=%zu",
                          s.schedule->s0, s.schedule->sT, s.schedule->ramp_steps,
                          s.schedule->prune_interval);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

PrunePlan make_plan(Technique technique, double target_sparsity, const PlanOptions& o) {
    if (o.run_steps == 0) {
        throw ConfigError("run_steps must be positive");
    }
    if (o.rewind_step >= o.run_steps) {
        throw ConfigError("rewind_step must be smaller than run_steps");
    }
    if (!(o.ramp_fraction > 0.0 && o.ramp_fraction <= 1.0)) {
        throw ConfigError("ramp_fraction must lie in (0, 1]");
    }
    const auto ramp = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(o.ramp_fraction * static_cast<double>(o.run_steps))));
    if (o.prune_interval == 0 || o.prune_interval > ramp) {
        throw ConfigError("prune_interval must lie in [1, ramp steps]");
    }
    const auto ladder = sparsity_ladder(target_sparsity);
    const auto levels = o.direct ? std::vector<double>{ladder.back()} : ladder;
    const double target = ladder.back();
    const std::size_t n = o.run_steps;

    PrunePlan plan;
    plan.technique = technique;
    plan.target_sparsity = target;
    plan.rewind_step = o.rewind_step;
    plan.rewind_source = o.rewind_source;
    auto& steps = plan.steps;

    switch (technique) {
        case Technique::MP:
            steps.push_back(gradual_step(n, 0.0, target, RewindTo::None, o, ramp));
            break;
        case Technique::LT:
        case Technique::SLT:
        case Technique::CLT:
        case Technique::CLT_RANDOM_SIGN: {
            const RewindTo rewind = technique == Technique::LT ? RewindTo::Initial : RewindTo::Early;
            const Transform transform = technique == Technique::CLT ? Transform::Clt
                                        : technique == Technique::CLT_RANDOM_SIGN
                                            ? Transform::RandomSign
                                            : Transform::None;
            steps.push_back(dense_step(n));
            for (double s : levels) {
                steps.push_back(fixed_step(n, s, rewind, transform));
            }
            break;
        }
        case Technique::SLT_MP: {
            steps.push_back(dense_step(n));
            if (target < kSltMpFirstJump) {
                steps.push_back(fixed_step(n, target, RewindTo::Early, Transform::None));
                break;
            }
            steps.push_back(fixed_step(n, kSltMpFirstJump, RewindTo::Early, Transform::None));
            if (target >= kHandoffSparsity - 1e-9) {
                steps.push_back(fixed_step(n, kHandoffSparsity, RewindTo::Early, Transform::None));
            }
            if (target > kHandoffSparsity + 1e-9) {
                steps.push_back(gradual_step(n, kHandoffSparsity, target, RewindTo::Early, o, ramp));
            }
            break;
        }
        case Technique::MP_SLT: {
            if (target <= kHandoffSparsity + 1e-9) {
                steps.push_back(gradual_step(n, 0.0, target, RewindTo::None, o, ramp));
                break;
            }
            steps.push_back(gradual_step(n, 0.0, kHandoffSparsity, RewindTo::None, o, ramp));
            for (double s : levels) {
                if (s > kHandoffSparsity + 1e-9) {
                    steps.push_back(fixed_step(n, s, RewindTo::Early, Transform::None));
                }
            }
            break;
        }
    }
    plan.validate();
    return plan;
}

PrunePlan make_plan(Technique technique, double target_sparsity, std::size_t run_steps,
                    std::size_t rewind_step) {
    auto o = PlanOptions::for_run_steps(run_steps);
    o.rewind_step = rewind_step;
    return make_plan(technique, target_sparsity, o);
}

}  // namespace sparselab

#include "sparselab/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>

#include "sparselab/errors.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

namespace {

constexpr std::size_t kGradualCandidates = 4;

std::string fmt(const char* f, double a, double b) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a, b);
    return buf;
}

std::vector<TokenBatch> held_out_batches(const TrainingSetup& s) {
    std::vector<TokenBatch> out;
    const auto stream = mix_seed(s.seed, kHeldOutStream);
    for (std::size_t i = 0; i < s.eval_batches; ++i) {
        out.push_back(generate_task_batch(s.task, stream, i, s.eval_batch_size, s.seq_len,
                                          s.model.vocab_size));
    }
    return out;
}

CheckpointMetrics measure(std::size_t step, const TrainingSetup& setup, const ParamRegistry& reg,
                          const std::vector<TokenBatch>& held_out) {
    const auto eval = evaluate(setup.model, reg, held_out);
    const auto [mx, mean] = weight_magnitude(reg);
    return CheckpointMetrics{step, eval.loss, eval.token_accuracy, measured_sparsity(reg), mx, mean};
}

std::string run_id(std::size_t run, const char* what) {
    return "run" + std::to_string(run) + "/" + what;
}

}  // namespace

RewoundState rewind(const Checkpoint& ckpt, const MaskSet& m, Transform transform,
                    std::uint64_t transform_seed) {
    m.check_covers(ckpt.params);
    RewoundState out{ckpt.params.clone(), OptimizerState::for_registry(ckpt.params, ckpt.optimizer.hp)};
    apply_mask(out.params, m);
    switch (transform) {
        case Transform::None:
            break;
        case Transform::Clt:
            clt_transform(out.params, m);
            break;
        case Transform::RandomSign:
            random_sign_transform(out.params, m, transform_seed);
            break;
    }
    return out;
}

MaskSet mask_from_converged(const Checkpoint& ckpt, double next_sparsity, const MaskSet& prior) {
    if (!(next_sparsity > prior.sparsity())) {
        throw MonotonicityError("next sparsity " + std::to_string(next_sparsity) +
                                " does not exceed the prior mask's " +
                                std::to_string(prior.sparsity()));
    }
    return magnitude_mask(ckpt.params, next_sparsity, prior);
}

std::size_t select_best(const std::vector<CheckpointMetrics>& cps, RunMode mode) {
    if (cps.empty()) {
        throw ContractError("select_best: no checkpoints");
    }
    std::size_t first = 0;
    if (mode == RunMode::Gradual && cps.size() > kGradualCandidates) {
        first = cps.size() - kGradualCandidates;
    }
    std::size_t best = first;
    for (std::size_t i = first + 1; i < cps.size(); ++i) {
        const auto& c = cps[i];
        const auto& b = cps[best];
        if (c.token_accuracy > b.token_accuracy ||
            (c.token_accuracy == b.token_accuracy && c.loss < b.loss)) {
            best = i;
        }
    }
    return best;
}

PlanResult execute_plan(const PrunePlan& plan, const TrainingSetup& setup, PlanObserver* observer) {
    plan.validate();
    if (setup.seq_len == 0 || setup.seq_len > setup.model.max_seq_len) {
        throw LengthError("seq_len " + std::to_string(setup.seq_len) + " outside [1, max_seq_len=" +
                          std::to_string(setup.model.max_seq_len) + "]");
    }
    ModelConfig model_cfg = setup.model;
    model_cfg.seed = setup.seed;
    const auto held_out = held_out_batches(setup);

    ParamRegistry reg = build_model(model_cfg);
    MaskSet mask = MaskSet::ones(reg);
    double mask_target = 0.0;  // nominal sparsity the current mask was built for

    auto warmup_for = [&](std::size_t steps) {
        return std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(setup.warmup_fraction * static_cast<double>(steps))));
    };
    AdamConfig hp = setup.adam;
    hp.warmup = warmup_for(plan.steps.front().run_steps);
    OptimizerState opt = OptimizerState::for_registry(reg, hp);

    const Checkpoint initial = Checkpoint::snapshot("init", "", reg, opt, nullptr);
    if (observer) {
        observer->on_checkpoint(0, initial, false);
    }
    std::optional<Checkpoint> dense_rewind;
    std::optional<Checkpoint> last_rewind;
    std::optional<Checkpoint> last_final;

    PlanResult result;
    for (std::size_t r = 0; r < plan.steps.size(); ++r) {
        const PlanStep& step = plan.steps[r];
        RunRecord rec;
        rec.run_index = r;
        rec.step = step;
        hp.warmup = warmup_for(step.run_steps);

        // Choose the starting point of this run.
        const Checkpoint* source = nullptr;
        std::string lineage = r == 0 ? initial.id : last_final->id;
        if (step.rewind_to != RewindTo::None) {
            double start_sparsity = step.mode == RunMode::Gradual ? step.schedule->s0
                                                                  : step.target_sparsity;
            if (start_sparsity > mask_target + 1e-12) {
                MaskSet next = mask_from_converged(*last_final, start_sparsity, mask);
                rec.log.push_back(fmt("mask %.4f -> %.4f from converged model", mask.sparsity(),
                                      next.sparsity()));
                mask = std::move(next);
                mask_target = start_sparsity;
            }
            if (step.rewind_to == RewindTo::Initial) {
                source = &initial;
            } else if (plan.rewind_source == RewindSource::DenseRun) {
                source = &*dense_rewind;
            } else {
                source = &*last_rewind;
            }
            const auto transform_seed = mix_seed(setup.seed, 0xC17ULL + r);
            auto rewound = rewind(*source, mask, step.transform, transform_seed);
            reg = std::move(rewound.params);
            opt = std::move(rewound.optimizer);
            lineage = source->id;
            rec.log.push_back("rewind to " + source->id + " transform " +
                              std::string(to_string(step.transform)));
        }
        opt.hp = hp;
        reset_optimizer(opt);
        apply_mask(reg, mask);
        mask_optimizer_moments(opt, reg, mask);

        const auto [start_max, start_mean] = weight_magnitude(reg);
        rec.start_max_abs_weight = start_max;
        rec.start_mean_abs_weight = start_mean;
        if (observer) {
            observer->on_run_start(r, step, reg, opt, mask, source);
        }

        const auto train_stream = mix_seed(mix_seed(setup.seed, kTrainStream), r);
        const std::size_t eval_every = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(setup.eval_fraction *
                                                     static_cast<double>(step.run_steps))));
        std::optional<Checkpoint> rewind_ckpt;
        for (std::size_t k = 0; k < step.run_steps; ++k) {
            if (k == plan.rewind_step) {
                rewind_ckpt = Checkpoint::snapshot(run_id(r, "rewind"), lineage, reg, opt, &mask);
            }
            const auto batch = generate_task_batch(setup.task, train_stream, k, setup.batch_size,
                                                   setup.seq_len, setup.model.vocab_size);
            Tape tape;
            reg.zero_grad();
            const Tensor loss = forward_loss(tape, model_cfg, reg, batch);
            if (!std::isfinite(loss.item())) {
                throw NumericError("non-finite training loss in run " + std::to_string(r) +
                                   " at step " + std::to_string(k));
            }
            tape.backward(loss);
            optimizer_step(reg, opt);

            if (step.mode == RunMode::Gradual) {
                const auto& sched = *step.schedule;
                const std::size_t t = k + 1;
                if (t % sched.prune_interval == 0 || t == sched.ramp_steps) {
                    const double s = target_sparsity(t, sched);
                    if (s > mask_target) {
                        mask = magnitude_mask(reg, s, mask);
                        mask_target = s;
                        mask_optimizer_moments(opt, reg, mask);
                    }
                }
            }
            enforce_mask_after_step(reg, mask);
            if (observer) {
                observer->on_step(r, k, reg, mask);
            }
            if ((k + 1) % eval_every == 0 || k + 1 == step.run_steps) {
                rec.checkpoints.push_back(measure(k + 1, setup, reg, held_out));
            }
        }
        if (!rewind_ckpt) {
            rewind_ckpt = Checkpoint::snapshot(run_id(r, "rewind"), lineage, reg, opt, &mask);
        }
        Checkpoint final_ckpt = Checkpoint::snapshot(run_id(r, "final"), lineage, reg, opt, &mask);
        rec.selected = select_best(rec.checkpoints, step.mode);
        rec.rewind_checkpoint_id = rewind_ckpt->id;
        rec.final_checkpoint_id = final_ckpt.id;
        const auto memory = report_model_memory(reg, mask, setup.widths);
        rec.memory_dense_bytes = memory.dense_total;
        rec.memory_bytes = memory.chosen_total;
        rec.log.push_back(fmt("final sparsity %.4f, max|w| %.4f", measured_sparsity(reg),
                              weight_magnitude(reg).first));
        if (observer) {
            observer->on_checkpoint(r, *rewind_ckpt, true);
            observer->on_checkpoint(r, final_ckpt, false);
        }
        if (r == 0) {
            dense_rewind = *rewind_ckpt;
        }
        last_rewind = std::move(rewind_ckpt);
        last_final = std::move(final_ckpt);
        result.records.push_back(std::move(rec));
    }
    result.final_checkpoint = std::move(*last_final);
    return result;
}

}  // namespace sparselab

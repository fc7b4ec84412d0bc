#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "sparselab/errors.hpp"
#include "sparselab/model.hpp"
#include "sparselab/optim.hpp"
#include "sparselab/tasks.hpp"
#include "test_util.hpp"

using namespace sparselab;

namespace {

// Hand inventory of the default architecture (d=64, ff=256, V=32, L=16, 2+2 layers).
struct Inventory {
    std::size_t prunable = 0;
    std::size_t total = 0;
    std::size_t matrices = 0;
};

Inventory hand_inventory(std::size_t V, std::size_t d, std::size_t ff, std::size_t L, std::size_t layers) {
    Inventory inv;
    auto matrix = [&](std::size_t r, std::size_t c) {
        inv.prunable += r * c;
        inv.total += r * c;
        ++inv.matrices;
    };
    auto vec = [&](std::size_t n) { inv.total += n; };
    auto linear = [&](std::size_t in, std::size_t out) {
        matrix(in, out);
        vec(out);
    };
    auto norm = [&] { vec(2 * d); };
    auto attention = [&] {
        for (int i = 0; i < 4; ++i) {
            linear(d, d);
        }
    };
    matrix(V, d);  // token embedding
    matrix(L, d);  // position embedding
    for (std::size_t l = 0; l < layers; ++l) {
        norm();
        attention();
        norm();
        linear(d, ff);
        linear(ff, d);
    }
    norm();
    for (std::size_t l = 0; l < layers; ++l) {
        norm();
        attention();  // self
        norm();
        attention();  // cross
        norm();
        linear(d, ff);
        linear(ff, d);
    }
    norm();
    linear(d, V);
    return inv;
}

}  // namespace

TEST_CASE("model config validation aggregates every problem") {
    ModelConfig c;
    c.d_model = 30;
    c.n_heads = 4;
    c.vocab_size = 0;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("n_heads") != std::string::npos);
        CHECK(msg.find("vocab_size") != std::string::npos);
    }
    ModelConfig ok;
    CHECK(ok.head_dim() == 16);
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("registry layout matches the hand inventory") {
    const ModelConfig cfg;
    const auto reg = build_model(cfg);
    const auto inv = hand_inventory(32, 64, 256, 16, 2);
    CHECK(inv.total == 238880);
    CHECK(inv.prunable == 234496);
    CHECK(reg.total_count() == inv.total);
    CHECK(reg.prunable_count() == inv.prunable);
    std::size_t matrices = 0;
    std::set<std::string> names;
    for (const auto& e : reg.entries()) {
        CHECK(names.insert(e.name).second);
        CHECK(e.prunable == (e.tensor.rank() >= 2));
        if (e.prunable) {
            ++matrices;
            CHECK(e.fan_in > 0);
            CHECK(e.fan_out > 0);
        }
    }
    CHECK(matrices == inv.matrices);
    CHECK(static_cast<double>(reg.prunable_count()) / static_cast<double>(reg.total_count()) >= 0.95);
    CHECK(reg.find("enc.0.attn.q.weight") != nullptr);
    CHECK(reg.find("dec.1.cross.o.bias") != nullptr);
    CHECK_FALSE(reg.at("enc.norm.gain").prunable);
}

TEST_CASE("initialization is seeded, bounded and layer-scaled") {
    ModelConfig cfg;
    const auto a = build_model(cfg);
    const auto b = build_model(cfg);
    CHECK(a.bitwise_equal(b));
    cfg.seed = 2;
    CHECK_FALSE(a.bitwise_equal(build_model(cfg)));
    for (const auto& e : a.entries()) {
        if (!e.prunable) {
            continue;
        }
        const double lim = glorot_limit(e.fan_in, e.fan_out);
        for (double v : e.tensor.values()) {
            CHECK(std::abs(v) <= lim);
        }
    }
    CHECK(glorot_limit(64, 256) == doctest::Approx(std::sqrt(6.0 / 320.0)));
}

TEST_CASE("untrained loss is close to ln V") {
    const ModelConfig cfg;
    const auto reg = build_model(cfg);
    const auto batch = generate_task_batch(Task::Copy, 3, 0, 16, 8, cfg.vocab_size);
    Tape tape;
    const double loss = forward_loss(tape, cfg, reg, batch).item();
    CHECK(std::abs(loss - std::log(32.0)) <= 0.1 * std::log(32.0));
}

TEST_CASE("identical rows produce identical logits") {
    const auto cfg = testutil::tiny_model();
    const auto reg = build_model(cfg);
    TokenBatch batch{2, 4, 4, {1, 3, 5, 7, 1, 3, 5, 7}, {2, 2, 4, 6, 2, 2, 4, 6}};
    Tape tape;
    const auto logits = forward_logits(tape, cfg, reg, batch);
    const auto v = logits.values();
    const auto half = v.size() / 2;
    CHECK(std::equal(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(half),
                     v.begin() + static_cast<std::ptrdiff_t>(half)));
}

TEST_CASE("forward rejects bad batches") {
    const auto cfg = testutil::tiny_model();
    const auto reg = build_model(cfg);
    Tape tape;
    TokenBatch too_long{1, 9, 1, std::vector<int>(9, 1), {1}};
    CHECK_THROWS_AS(forward_logits(tape, cfg, reg, too_long), LengthError);
    TokenBatch bad_id{1, 1, 1, {8}, {1}};
    CHECK_THROWS_AS(forward_logits(tape, cfg, reg, bad_id), IndexError);
    TokenBatch ragged{2, 1, 1, {1}, {1, 1}};
    CHECK_THROWS_AS(forward_logits(tape, cfg, reg, ragged), DimensionError);
}

TEST_CASE("learning-rate schedule") {
    CHECK(lr(0, 100, 1.0) == 0.01);
    CHECK(lr(100, 100, 1.0) == 0.01);
    CHECK(lr(400, 100, 1.0) == 0.0025);
    for (std::size_t t = 0; t < 100; ++t) {
        CHECK(lr(t, 100, 1.0) == lr(0, 100, 1.0));
    }
    for (std::size_t t = 100; t < 2000; ++t) {
        CHECK(lr(t + 1, 100, 1.0) < lr(t, 100, 1.0));
    }
}

TEST_CASE("optimizer step: zero gradient, single-step hand value, missing gradient") {
    ParamRegistry reg;
    reg.add("p", Tensor({1}, {0.5}));
    auto st = OptimizerState::for_registry(reg, AdamConfig{0.9, 0.98, 1e-9, 1.0, 10});
    CHECK(st.first.size() == 1);
    CHECK(st.first[0].size() == 1);

    reg.at("p").tensor.ensure_grad();
    reg.zero_grad();
    optimizer_step(reg, st);
    CHECK(reg.at("p").tensor.values()[0] == 0.5);
    CHECK(st.step == 1);

    // Fresh state, g = 1: m̂ = v̂ = 1, so Δ = −lr(0)·1/(1+ε).
    reset_optimizer(st);
    reg.at("p").tensor.grad()[0] = 1.0;
    optimizer_step(reg, st);
    const double expected = 0.5 - (1.0 / 10.0) * (1.0 / (1.0 + 1e-9));
    CHECK(reg.at("p").tensor.values()[0] == doctest::Approx(expected).epsilon(1e-15));
    CHECK(reg.at("p").tensor.values()[0] < 0.5);

    ParamRegistry no_grad;
    no_grad.add("q", Tensor({1}, {1.0}));
    auto st2 = OptimizerState::for_registry(no_grad, AdamConfig{});
    no_grad.at("q").tensor.clear_grad();
    CHECK_THROWS_AS(optimizer_step(no_grad, st2), ContractError);
    CHECK_THROWS_AS(OptimizerState::for_registry(no_grad, AdamConfig{0.9, 0.98, 1e-9, 1.0, 0}), ConfigError);
}

namespace {

std::pair<ParamRegistry, OptimizerState> train(const ModelConfig& cfg, std::size_t steps,
                                               std::vector<double>* losses = nullptr) {
    auto reg = build_model(cfg);
    auto st = OptimizerState::for_registry(reg, AdamConfig{0.9, 0.98, 1e-9, 0.1, 60});
    for (std::size_t k = 0; k < steps; ++k) {
        const auto batch = generate_task_batch(Task::Copy, 7, k, 16, 6, cfg.vocab_size);
        Tape tape;
        reg.zero_grad();
        const auto loss = forward_loss(tape, cfg, reg, batch);
        if (losses) {
            losses->push_back(loss.item());
        }
        tape.backward(loss);
        optimizer_step(reg, st);
    }
    return {std::move(reg), std::move(st)};
}

}  // namespace

TEST_CASE("training is bitwise reproducible") {
    const auto cfg = testutil::tiny_model();
    auto [a, sa] = train(cfg, 100);
    auto [b, sb] = train(cfg, 100);
    CHECK(a.bitwise_equal(b));
    CHECK(sa.bitwise_equal(sb));
    CHECK(sa.step == 100);
}

TEST_CASE("loss decreases over 200 steps on the copy task") {
    const ModelConfig cfg;
    std::vector<double> losses;
    train(cfg, 200, &losses);
    const auto mean = [&](std::size_t from, std::size_t to) {
        double s = 0.0;
        for (std::size_t i = from; i < to; ++i) {
            s += losses[i];
        }
        return s / static_cast<double>(to - from);
    };
    CHECK(mean(180, 200) < 0.5 * mean(0, 20));
}

TEST_CASE("reset clears the optimizer and restarts the schedule") {
    const auto cfg = testutil::tiny_model();
    auto [reg, st] = train(cfg, 5);
    reset_optimizer(st);
    CHECK(st.step == 0);
    for (const auto& m : st.first) {
        for (double v : m) {
            CHECK(testutil::same_bits(v, 0.0));
        }
    }
    for (const auto& m : st.second) {
        for (double v : m) {
            CHECK(testutil::same_bits(v, 0.0));
        }
    }
    CHECK(lr(st.step, st.hp.warmup, st.hp.base_lr) == st.hp.base_lr / static_cast<double>(st.hp.warmup));
}

TEST_CASE("task batches are deterministic and solve their task") {
    const auto a = generate_task_batch(Task::Copy, 1, 5, 4, 6, 32);
    const auto b = generate_task_batch(Task::Copy, 1, 5, 4, 6, 32);
    CHECK(a.src == b.src);
    CHECK(a.tgt == a.src);
    CHECK(generate_task_batch(Task::Copy, 1, 6, 4, 6, 32).src != a.src);
    CHECK(generate_task_batch(Task::Copy, 2, 5, 4, 6, 32).src != a.src);
    for (int id : a.src) {
        CHECK(id >= 1);
        CHECK(id < 32);
    }
    const auto r = generate_task_batch(Task::Reverse, 1, 5, 4, 6, 32);
    const auto s = generate_task_batch(Task::Sort, 1, 5, 4, 6, 32);
    for (std::size_t row = 0; row < 4; ++row) {
        std::vector<int> src(r.src.begin() + row * 6, r.src.begin() + row * 6 + 6);
        std::vector<int> tgt(r.tgt.begin() + row * 6, r.tgt.begin() + row * 6 + 6);
        std::reverse(src.begin(), src.end());
        CHECK(src == tgt);
        std::vector<int> ssrc(s.src.begin() + row * 6, s.src.begin() + row * 6 + 6);
        std::vector<int> stgt(s.tgt.begin() + row * 6, s.tgt.begin() + row * 6 + 6);
        std::sort(ssrc.begin(), ssrc.end());
        CHECK(ssrc == stgt);
    }
    CHECK(parse_task("reverse") == Task::Reverse);
    CHECK_THROWS_AS(parse_task("shuffle"), ConfigError);
}

TEST_CASE("evaluate reports token accuracy in [0,1]") {
    const auto cfg = testutil::tiny_model();
    const auto reg = build_model(cfg);
    const std::vector<TokenBatch> batches{generate_task_batch(Task::Copy, 1, 0, 4, 5, cfg.vocab_size)};
    const auto r = evaluate(cfg, reg, batches);
    CHECK(r.tokens == 20);
    CHECK(r.token_accuracy >= 0.0);
    CHECK(r.token_accuracy <= 1.0);
    CHECK(std::isfinite(r.loss));
}

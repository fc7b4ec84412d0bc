// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any failure.
//
// Usage: acceptance [criterion numbers...]   (default: all ten)

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "audit_observer.hpp"
#include "gradcheck_cases.hpp"
#include "oracles.hpp"
#include "sparselab/binary_io.hpp"
#include "sparselab/config.hpp"
#include "sparselab/executor.hpp"
#include "sparselab/plan.hpp"
#include "sparselab/pruning.hpp"
#include "sparselab/sparse_store.hpp"
#include "test_util.hpp"

using namespace sparselab;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Each criterion returns a failure message ("" on success) and writes a
// one-line summary of what it measured into detail.
using Criterion = std::function<std::string(std::string& detail)>;

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// ---- 1 ------------------------------------------------------------------

std::string schedule_oracle(std::string& detail) {
    const auto t0 = Clock::now();
    const std::size_t ramp = 800;
    double worst = 0.0;
    std::size_t points = 0;
    for (auto [s0, sT] : {std::pair{0.0, 0.98}, std::pair{0.6, 0.98}, std::pair{0.0, 0.5}}) {
        const PruneSchedule sched{s0, sT, ramp, 10};
        for (std::size_t t = 0; t < 1000; ++t) {
            worst = std::max(worst, std::abs(target_sparsity(t, sched) - oracle::schedule(s0, sT, t, ramp)));
            ++points;
        }
    }
    const double mid = target_sparsity(ramp / 2, PruneSchedule{0.0, 0.98, ramp, 10});
    const double secs = seconds_since(t0);
    detail = fmt("%.0f points, max |err| %.3g, s(ramp/2) = %.15g, %.3f s", static_cast<double>(points), worst, mid,
                 secs);
    if (worst > 1e-12) {
        return "schedule deviates from the exact oracle";
    }
    if (std::abs(mid - 0.8575) > 1e-12) {
        return "mid-ramp value is not 0.8575";
    }
    if (secs >= 1.0) {
        return "runtime exceeds 1 s";
    }
    return "";
}

// ---- 2 ------------------------------------------------------------------

ParamRegistry single_layer(const std::vector<double>& v) {
    ParamRegistry reg;
    reg.add("w", Tensor({1, v.size()}, v), v.size(), 1);
    return reg;
}

std::vector<bool> keep_flags(const MaskSet& m) {
    std::vector<bool> k;
    for (double x : m.at("w").keep.values()) {
        k.push_back(x != 0.0);
    }
    return k;
}

std::string mask_optimality(std::string& detail) {
    const auto t0 = Clock::now();
    Rng rng(77);
    const auto ladder = full_ladder();
    std::size_t tie_layers = 0;
    std::size_t chained = 0;
    for (int layer = 0; layer < 200; ++layer) {
        const std::size_t n = 1 + rng.below(64);
        std::vector<double> v(n);
        // Half the layers draw from a handful of magnitudes so ties are common.
        const bool ties = layer % 2 == 0;
        for (auto& x : v) {
            x = ties ? static_cast<double>(rng.below(4)) * 0.25 * (rng.below(2) ? 1.0 : -1.0) : rng.uniform(-1.0, 1.0);
        }
        tie_layers += ties ? 1 : 0;
        auto reg = single_layer(v);
        const std::size_t i1 = rng.below(ladder.size() - 1);
        const std::size_t i2 = i1 + 1 + rng.below(ladder.size() - 1 - i1);
        const double s1 = ladder[i1];
        const double s2 = ladder[i2];

        const auto m1 = magnitude_mask(reg, s1, MaskSet::ones(reg));
        if (keep_flags(m1) != oracle::brute_mask(v, std::vector<bool>(n, true), s1)) {
            return "layer " + std::to_string(layer) + ": mask differs from the brute-force oracle";
        }
        // Survivors move as if trained, then the next level is chained on m1.
        apply_mask(reg, m1);
        auto w = reg.entries()[0].tensor.values();
        for (auto& x : w) {
            if (x != 0.0) {
                x += ties ? 0.0 : rng.uniform(-0.5, 0.5);
            }
        }
        const std::vector<double> moved(w.begin(), w.end());
        const auto expected = oracle::brute_mask(moved, keep_flags(m1), s2);
        if (expected.empty()) {
            continue;  // rounding made this level no larger than the last
        }
        const auto m2 = magnitude_mask(reg, s2, m1);
        ++chained;
        if (keep_flags(m2) != expected) {
            return "layer " + std::to_string(layer) + ": chained mask differs from the oracle";
        }
        if (!m2.keep_subset_of(m1)) {
            return "layer " + std::to_string(layer) + ": chained mask un-prunes an entry";
        }
    }
    const double secs = seconds_since(t0);
    detail = fmt("200 layers (%.0f tie-heavy), %.0f chained, %.3f s", static_cast<double>(tie_layers),
                 static_cast<double>(chained), secs);
    if (secs >= 5.0) {
        return "runtime exceeds 5 s";
    }
    return "";
}

// ---- 3 ------------------------------------------------------------------

std::string rewind_exactness(std::string& detail) {
    TrainingSetup setup;  // default model, d_model = 64
    setup.task = Task::Copy;
    setup.seed = 1;
    const auto plan = make_plan(Technique::SLT, 0.8, PlanOptions::for_run_steps(100));
    audit::AuditObserver obs(setup.seed);
    const auto result = execute_plan(plan, setup, &obs);
    std::size_t expected_rewinds = 0;
    for (const auto& s : plan.steps) {
        expected_rewinds += s.rewind_to == RewindTo::None ? 0 : 1;
    }
    detail = fmt("d_model %.0f, %.0f runs, %.0f rewound starts audited, %.0f steps checked",
                 static_cast<double>(setup.model.d_model), static_cast<double>(obs.runs),
                 static_cast<double>(obs.rewinds_checked), static_cast<double>(obs.steps));
    if (!obs.failures.empty()) {
        return obs.failures.front();
    }
    if (obs.runs != plan.run_count() || obs.rewinds_checked != expected_rewinds || expected_rewinds + 1 != plan.run_count()) {
        return "not every sparse run was audited";
    }
    if (std::abs(measured_sparsity(result.final_checkpoint.params) - 0.8) > 0.01) {
        return "final sparsity is not 80%";
    }
    return "";
}

// ---- 4 ------------------------------------------------------------------

std::string plan_cardinality(std::string& detail) {
    const auto o = PlanOptions::for_run_steps(3000);
    const auto lt = make_plan(Technique::LT, 0.98, o).run_count();
    const auto sltmp = make_plan(Technique::SLT_MP, 0.98, o).run_count();
    std::size_t mp_max = 0;
    std::size_t mp_min = SIZE_MAX;
    for (double s : full_ladder()) {
        const auto n = make_plan(Technique::MP, s, o).run_count();
        mp_max = std::max(mp_max, n);
        mp_min = std::min(mp_min, n);
    }
    detail = fmt("LT@0.98 %.0f runs, SLT-MP@0.98 %.0f runs, MP %.0f..%.0f runs", static_cast<double>(lt),
                 static_cast<double>(sltmp), static_cast<double>(mp_min), static_cast<double>(mp_max));
    if (lt != 13) {
        return "LT plan does not have 13 runs";
    }
    if (sltmp != 4) {
        return "SLT-MP plan does not have 4 runs";
    }
    if (mp_min != 1 || mp_max != 1) {
        return "MP plan is not a single run";
    }
    return "";
}

// ---- 5 ------------------------------------------------------------------

std::string clt_contract(std::string& detail) {
    auto reg = build_model(ModelConfig{});
    Rng rng(5);
    // A random mask so survivors of every magnitude, including some exact zeros, are present.
    MaskSet mask;
    for (auto& e : reg.entries()) {
        if (!e.prunable) {
            continue;
        }
        Tensor keep = Tensor::zeros(e.tensor.shape());
        auto v = e.tensor.values();
        auto k = keep.values();
        for (std::size_t i = 0; i < k.size(); ++i) {
            k[i] = rng.below(2) ? 1.0 : 0.0;
            if (rng.below(50) == 0) {
                v[i] = 0.0;
            }
        }
        mask.add(e.name, keep);
    }
    const auto before = reg.clone();
    clt_transform(reg, mask);

    double worst_mag = 0.0;
    std::size_t survivors = 0;
    std::size_t zero_survivors = 0;
    for (std::size_t p = 0; p < reg.entries().size(); ++p) {
        const auto& e = reg.entries()[p];
        const auto old = before.entries()[p].tensor.values();
        const auto now = e.tensor.values();
        if (!e.prunable) {
            if (!testutil::bitwise_equal(old, now)) {
                return e.name + ": non-prunable parameter changed";
            }
            continue;
        }
        const double alpha = std::sqrt(6.0 / static_cast<double>(e.fan_in + e.fan_out));
        const auto keep = mask.at(e.name).keep.values();
        for (std::size_t i = 0; i < now.size(); ++i) {
            if (keep[i] == 0.0) {
                if (std::bit_cast<std::uint64_t>(now[i]) != 0) {
                    return e.name + ": masked entry is not +0.0";
                }
                continue;
            }
            ++survivors;
            zero_survivors += old[i] == 0.0 ? 1 : 0;
            worst_mag = std::max(worst_mag, std::abs(std::abs(now[i]) - alpha));
            const bool was_negative = std::signbit(old[i]) && old[i] != 0.0;
            if (std::signbit(now[i]) != was_negative) {
                return e.name + ": sign not preserved";
            }
        }
    }
    const double a1 = alpha_for_layer(4, 4);
    const double a2 = alpha_for_layer(64, 256);
    auto again = reg.clone();
    clt_transform(again, mask);
    detail = fmt("%.0f survivors (%.0f were 0), max ||w|-alpha| %.3g, alpha(4,4) err %.3g", static_cast<double>(survivors),
                 static_cast<double>(zero_survivors), worst_mag, std::abs(a1 - std::sqrt(0.75)));
    if (worst_mag > 1e-15) {
        return "surviving magnitude differs from alpha";
    }
    if (std::abs(a1 - std::sqrt(0.75)) > 1e-12 || std::abs(a2 - std::sqrt(6.0 / 320.0)) > 1e-12) {
        return "alpha does not match its oracle values";
    }
    if (!again.bitwise_equal(reg)) {
        return "transform is not idempotent";
    }
    return "";
}

// ---- 6 ------------------------------------------------------------------

std::string csc_store(std::string& detail) {
    Rng rng(6);
    const double levels[] = {0.0, 0.5, 0.98};
    for (int i = 0; i < 1000; ++i) {
        const double s = levels[i % 3];
        const std::size_t rows = 1 + rng.below(40);
        const std::size_t cols = 1 + rng.below(40);
        Tensor t = testutil::random_tensor(rng, {rows, cols});
        for (auto& x : t.values()) {
            if (rng.uniform() < s) {
                x = 0.0;
            } else if (rng.below(100) == 0) {
                x = -0.0;
            }
        }
        const auto csc = csc_encode(t);
        if (!testutil::bitwise_equal(csc_decode(csc).values(), t.values()) || csc_decode(csc).shape() != t.shape()) {
            return "matrix " + std::to_string(i) + ": round trip is not bitwise exact";
        }
        std::size_t nnz = 0;
        for (double x : t.values()) {
            nnz += std::bit_cast<std::uint64_t>(x) != 0 ? 1 : 0;
        }
        for (std::size_t vw : {2, 4, 8}) {
            for (std::size_t iw : {2, 4, 8}) {
                if (memory_bytes(csc, vw, iw) != oracle::csc_bytes(nnz, cols, vw, iw)) {
                    return "matrix " + std::to_string(i) + ": memory_bytes differs from the closed form";
                }
            }
        }
    }
    const auto manifest = oracle::transformer_base_manifest();
    std::uint64_t params = 0;
    for (const auto& e : manifest) {
        params += shape_size(e.shape);
    }
    const auto rep = report_manifest_memory(manifest, StorageWidths{4, 4});
    const double mib = static_cast<double>(rep.dense_total) / (1024.0 * 1024.0);
    const double rel = std::abs(mib - 234.0) / 234.0;
    detail = fmt("1000 round trips; manifest %.3fM params, %.2f MiB dense (%.2f%% from 234)",
                 static_cast<double>(params) / 1e6, mib, 100.0 * rel);
    if (rep.dense_total != params * 4) {
        return "dense accounting is not 4 bytes per value";
    }
    if (rel > 0.02) {
        return "manifest memory is not within 2% of 234";
    }
    return "";
}

// ---- 7 ------------------------------------------------------------------

double final_accuracy(const RunRecord& r) { return r.checkpoints.back().token_accuracy; }

std::string toy_learning(std::string& detail) {
    const auto t0 = Clock::now();
    TrainingSetup setup;
    setup.task = Task::Copy;
    setup.seed = 1;
    auto o = PlanOptions::for_run_steps(1000);
    o.direct = true;
    // The SLT plan's first run is the dense baseline.
    const auto slt = execute_plan(make_plan(Technique::SLT, 0.5, o), setup);
    const auto mp = execute_plan(make_plan(Technique::MP, 0.5, o), setup);
    const double secs = seconds_since(t0);
    const double dense = final_accuracy(slt.records.front());
    const double slt_acc = final_accuracy(slt.records.back());
    const double mp_acc = final_accuracy(mp.records.back());
    detail = fmt("1000 steps/run: dense %.2f%%, MP@50 %.2f%%, SLT@50 %.2f%%, %.0f s", 100 * dense, 100 * mp_acc,
                 100 * slt_acc, secs);
    if (dense < 0.99) {
        return "dense baseline below 99%";
    }
    if (dense - mp_acc > 0.02) {
        return "MP more than 2 points below dense";
    }
    if (dense - slt_acc > 0.02) {
        return "SLT more than 2 points below dense";
    }
    if (std::abs(measured_sparsity(slt.final_checkpoint.params) - 0.5) > 0.01 ||
        std::abs(measured_sparsity(mp.final_checkpoint.params) - 0.5) > 0.01) {
        return "sparse runs did not reach 50%";
    }
    if (secs >= 15 * 60) {
        return "wall clock exceeds 15 minutes";
    }
    return "";
}

// ---- 8 ------------------------------------------------------------------

// Short enough that neither variant saturates at 100%; at 600 steps both do.
constexpr std::size_t kSignAblationSteps = 300;

std::string sign_ablation(std::string& detail) {
    auto o = PlanOptions::for_run_steps(kSignAblationSteps);
    o.direct = true;
    double clt = 0.0;
    double rs = 0.0;
    std::ostringstream per_seed;
    const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    for (auto seed : seeds) {
        TrainingSetup setup;
        setup.task = Task::Copy;
        setup.seed = seed;
        const double a = final_accuracy(execute_plan(make_plan(Technique::CLT, 0.5, o), setup).records.back());
        const double b =
            final_accuracy(execute_plan(make_plan(Technique::CLT_RANDOM_SIGN, 0.5, o), setup).records.back());
        clt += a;
        rs += b;
        per_seed << " s" << seed << ":" << fmt("%.3f/%.3f", a, b);
    }
    clt /= static_cast<double>(seeds.size());
    rs /= static_cast<double>(seeds.size());
    detail = fmt("%.0f steps/run, mean CLT %.4f vs random-sign %.4f;", static_cast<double>(o.run_steps), clt, rs) +
             per_seed.str();
    if (clt < rs) {
        return "CLT mean accuracy below the random-sign variant";
    }
    return "";
}

// ---- 9 ------------------------------------------------------------------

std::string gradient_checks(std::string& detail) {
    Rng rng(9);
    double worst = 0.0;
    std::string worst_name;
    std::size_t primitives = 0;
    for (const auto& prim : gradcheck::primitives()) {
        ++primitives;
        for (int i = 0; i < 50; ++i) {
            auto inst = prim.make(rng);
            const auto r = gradcheck::check(inst.op, inst.inputs, rng, 1e-5);
            if (r.checked == 0) {
                return prim.name + ": no differentiable inputs";
            }
            if (r.rel_error > worst) {
                worst = r.rel_error;
                worst_name = prim.name;
            }
            if (r.rel_error > 1e-4) {
                return prim.name + fmt(": rel. error %.3g", r.rel_error);
            }
        }
    }
    detail = fmt("%.0f primitives x 50 instances, worst rel. error %.3g", static_cast<double>(primitives), worst) +
             " (" + worst_name + ")";
    return "";
}

// ---- 10 -----------------------------------------------------------------

std::map<std::string, std::vector<std::uint8_t>> tree_bytes(const fs::path& root) {
    std::map<std::string, std::vector<std::uint8_t>> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            files[fs::relative(e.path(), root).string()] = io::read_file(e.path());
        }
    }
    return files;
}

std::string end_to_end_determinism(std::string& detail) {
    testutil::TempDir dir("accept10");
    const auto config = dir.path() / "exp.txt";
    io::write_text(config,
                   "technique = SLT, CLT, MP, SLT-MP\n"
                   "target_sparsity = 0.7\n"
                   "task = copy\n"
                   "run_steps = 40\n"
                   "seeds = 1, 2\n"
                   "output_dir = out\n"
                   "vocab_size = 8\nd_model = 16\nn_heads = 2\nn_layers = 1\nd_ff = 32\nmax_seq_len = 8\n"
                   "batch_size = 8\nseq_len = 5\neval_batches = 1\neval_batch_size = 8\n");
    std::vector<std::map<std::string, std::vector<std::uint8_t>>> trees;
    for (const char* root : {"a", "b"}) {
        const auto cmd = std::string("SPARSELAB_OUTPUT_ROOT='") + (dir.path() / root).string() + "' '" +
                         SPARSELAB_CLI_PATH + "' run -q '" + config.string() + "' >/dev/null";
        if (std::system(cmd.c_str()) != 0) {
            return "run exited with an error";
        }
        trees.push_back(tree_bytes(dir.path() / root / "out"));
    }
    std::size_t tables = 0, ckpts = 0, spms = 0;
    for (const auto& [name, bytes] : trees[0]) {
        const auto it = trees[1].find(name);
        if (it == trees[1].end() || it->second != bytes) {
            return name + " differs between runs";
        }
        const auto ext = fs::path(name).extension();
        tables += name.rfind("results.", 0) == 0 ? 1 : 0;
        ckpts += ext == ".ckpt" ? 1 : 0;
        spms += ext == ".spm" ? 1 : 0;
    }
    detail = fmt("%.0f files identical: %.0f tables, %.0f checkpoints, %.0f sparse models",
                 static_cast<double>(trees[0].size()), static_cast<double>(tables), static_cast<double>(ckpts),
                 static_cast<double>(spms));
    if (trees[0].size() != trees[1].size()) {
        return "output trees have different files";
    }
    if (tables != 2 || ckpts == 0 || spms != 8) {
        return "expected artifacts are missing";
    }
    return "";
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, Criterion>> criteria{
        {"schedule oracle", schedule_oracle},
        {"mask optimality", mask_optimality},
        {"rewind bit-exactness", rewind_exactness},
        {"plan cardinality", plan_cardinality},
        {"CLT contract", clt_contract},
        {"CSC storage", csc_store},
        {"toy-scale learning", toy_learning},
        {"sign ablation", sign_ablation},
        {"gradient checks", gradient_checks},
        {"end-to-end determinism", end_to_end_determinism},
    };
    std::vector<std::size_t> selected;
    for (int i = 1; i < argc; ++i) {
        const int n = std::atoi(argv[i]);
        if (n < 1 || n > static_cast<int>(criteria.size())) {
            std::fprintf(stderr, "unknown criterion '%s'\n", argv[i]);
            return 2;
        }
        selected.push_back(static_cast<std::size_t>(n));
    }
    if (selected.empty()) {
        for (std::size_t n = 1; n <= criteria.size(); ++n) {
            selected.push_back(n);
        }
    }
    int failures = 0;
    for (auto n : selected) {
        const auto& [name, run] = criteria[n - 1];
        std::string detail;
        std::string error;
        try {
            error = run(detail);
        } catch (const std::exception& e) {
            error = std::string("exception: ") + e.what();
        }
        failures += error.empty() ? 0 : 1;
        std::printf("%s criterion %zu (%s): %s%s%s\n", error.empty() ? "PASS" : "FAIL", n, name, detail.c_str(),
                    error.empty() ? "" : " -- ", error.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}

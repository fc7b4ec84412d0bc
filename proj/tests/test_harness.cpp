#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "sparselab/binary_io.hpp"
#include "sparselab/config.hpp"
#include "sparselab/errors.hpp"
#include "sparselab/experiment.hpp"
#include "test_util.hpp"

using namespace sparselab;
namespace fs = std::filesystem;

namespace {

const char* kMinimal = R"(# minimal
technique = SLT
target_sparsity = 0.5
task = copy
run_steps = 3000
)";

std::string tiny_config(const fs::path& out, const std::string& techniques = "MP, SLT") {
    return "technique = " + techniques +
           "\n"
           "target_sparsity = 0.2\n"
           "task = copy\n"
           "run_steps = 30\n"
           "seeds = 1, 2\n"
           "output_dir = " + out.string() +
           "\n"
           "vocab_size = 8\nd_model = 16\nn_heads = 2\nn_layers = 1\nd_ff = 32\nmax_seq_len = 8\n"
           "batch_size = 8\nseq_len = 5\neval_batches = 1\neval_batch_size = 8\n";
}

}  // namespace

TEST_CASE("minimal config gets defaults") {
    const auto c = parse_config(kMinimal);
    CHECK(c.techniques == std::vector<Technique>{Technique::SLT});
    CHECK(c.target_sparsity == 0.5);
    CHECK(c.task == Task::Copy);
    CHECK(c.run_steps == 3000);
    CHECK(c.rewind_fraction == 0.05);
    CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
    CHECK(c.effective_prune_interval() == 60);
    CHECK(c.plan_options().rewind_step == 150);
    CHECK(c.model == ModelConfig{});
    CHECK(c.rewind_source == RewindSource::LastIteration);
}

TEST_CASE("config problems are reported together with line numbers") {
    const std::string text =
        "technique = SLT, FOO\n"
        "target_sparsity = 0.55\n"
        "bogus = 1\n"
        "task = copy\n"
        "task = sort\n"
        "run_steps = many\n"
        "no equals sign\n";
    try {
        parse_config(text);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 1: technique") != std::string::npos);
        CHECK(msg.find("line 3: unknown key 'bogus'") != std::string::npos);
        CHECK(msg.find("line 5: duplicate key 'task'") != std::string::npos);
        CHECK(msg.find("line 6: run_steps") != std::string::npos);
        CHECK(msg.find("line 7: expected 'key = value'") != std::string::npos);
    }
    CHECK_THROWS_WITH_AS(parse_config("technique = MP\n"), doctest::Contains("missing required key 'task'"),
                         ConfigError);
    try {
        parse_config(std::string(kMinimal) + "seq_len = 40\nd_model = 30\nseeds = 3, 3\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("seq_len") != std::string::npos);
        CHECK(msg.find("n_heads") != std::string::npos);
        CHECK(msg.find("duplicate seed") != std::string::npos);
    }
    CHECK_THROWS_WITH_AS(parse_config(std::string(kMinimal) + "target_sparsity = 0.55\n"),
                         doctest::Contains("duplicate"), ConfigError);
}

TEST_CASE("canonical config round trips") {
    auto c = parse_config(kMinimal);
    c.techniques = {Technique::MP_SLT, Technique::CLT_RANDOM_SIGN, Technique::LT};
    c.target_sparsity = 0.95;
    c.base_lr = 0.1;
    c.warmup_fraction = 0.03;
    c.seeds = {7, 1, 18446744073709551615ULL};
    c.rewind_source = RewindSource::DenseRun;
    c.direct_jump = true;
    c.widths = StorageWidths{4, 2};
    c.model.d_model = 32;
    const auto text = emit_config(c);
    const auto back = parse_config(text);
    CHECK(back == c);
    CHECK(emit_config(back) == text);
}

TEST_CASE("command-line overrides") {
    auto c = parse_config(kMinimal);
    apply_overrides(c, ConfigOverrides{9, 0.9, "mp,lt"});
    CHECK(c.seeds == std::vector<std::uint64_t>{9});
    CHECK(c.target_sparsity == 0.9);
    CHECK(c.techniques == std::vector<Technique>{Technique::MP, Technique::LT});
    CHECK_THROWS_AS(apply_overrides(c, ConfigOverrides{std::nullopt, 0.33, std::nullopt}), ConfigError);
}

TEST_CASE("output root from the environment") {
    auto c = parse_config(kMinimal);
    c.output_dir = "exp";
    ::setenv(kOutputRootEnv, "/tmp/root", 1);
    CHECK(resolve_output_dir(c) == fs::path("/tmp/root/exp"));
    c.output_dir = "/abs/exp";
    CHECK(resolve_output_dir(c) == fs::path("/abs/exp"));
    ::unsetenv(kOutputRootEnv);
    c.output_dir = "exp";
    CHECK(resolve_output_dir(c) == fs::path("exp"));
}

TEST_CASE("table emission flags every best cell and orders rows") {
    std::vector<TechniqueRuns> runs;
    auto rec = [](double s, double acc, double loss) {
        RunRecord r;
        r.step.target_sparsity = s;
        r.checkpoints.push_back(CheckpointMetrics{1, loss, acc, s, 0, 0});
        r.memory_bytes = 1000;
        return r;
    };
    runs.push_back({Technique::SLT, 1, {rec(0.0, 1.0, 0.1), rec(0.2, 0.8, 0.4), rec(0.1, 0.9, 0.3)}});
    runs.push_back({Technique::SLT, 2, {rec(0.0, 1.0, 0.1), rec(0.2, 0.6, 0.6), rec(0.1, 0.9, 0.3)}});
    runs.push_back({Technique::MP, 1, {rec(0.2, 0.7, 0.5)}});
    runs.push_back({Technique::MP, 2, {rec(0.2, 0.7, 0.3)}});
    const auto table = build_table({Technique::SLT, Technique::MP}, {1, 2}, runs);
    REQUIRE(table.rows.size() == 3);
    CHECK(table.rows[0].sparsity == 0.0);
    CHECK(table.rows[1].sparsity == 0.1);
    CHECK(table.rows[2].sparsity == 0.2);
    const auto& r = table.rows[2];
    CHECK(r.cells[0].accuracy == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(r.cells[1].accuracy == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(r.cells[0].best_accuracy);
    CHECK(r.cells[1].best_accuracy);
    CHECK(r.cells[0].loss == 0.5);
    CHECK(r.cells[1].loss == 0.4);
    CHECK(r.cells[1].best_loss);
    CHECK_FALSE(r.cells[0].best_loss);
    CHECK_FALSE(table.rows[0].cells[1].present);

    const auto text = emit_table(table);
    const auto first_line = text.substr(0, text.find('\n'));
    CHECK(first_line.find("SLT acc") < first_line.find("MP acc"));
    CHECK(text.find("|       0% |") != std::string::npos);
    CHECK(text.find("| 20% |") == std::string::npos);
    // Fixed width: every table line has the same length.
    std::size_t width = 0;
    std::size_t pos = 0;
    while (pos < text.size() && text[pos] == '|') {
        const auto nl = text.find('\n', pos);
        if (width == 0) {
            width = nl - pos;
        }
        CHECK(nl - pos == width);
        pos = nl + 1;
    }
}

TEST_CASE("run records survive a JSON round trip") {
    RunRecord r;
    r.run_index = 3;
    r.step = PlanStep{100, 0.6, RewindTo::Early, Transform::Clt, RunMode::Gradual, PruneSchedule{0.5, 0.6, 80, 2}};
    r.checkpoints = {{5, 0.123456789012345, 0.5, 0.6, 1.5, 0.1}, {10, 0.1, 0.75, 0.6, 1.6, 0.2}};
    r.selected = 1;
    r.start_max_abs_weight = 0.3;
    r.rewind_checkpoint_id = "run3/rewind";
    r.final_checkpoint_id = "run3/final";
    r.memory_bytes = 17;
    r.memory_dense_bytes = 19;
    r.log = {"a", "b"};
    const auto back = record_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(back.step == r.step);
    CHECK(back.checkpoints[0].loss == r.checkpoints[0].loss);
    CHECK(back.selected == 1);
    CHECK(back.log == r.log);
    CHECK(back.memory_bytes == 17);
    CHECK_THROWS_AS(record_from_json(nlohmann::json::object()), FormatError);
}

TEST_CASE("run, report and verify an experiment end to end") {
    testutil::TempDir dir("exp");
    const auto out = dir.path() / "out";
    const auto cfg = parse_config(tiny_config(out));
    const auto result = run_experiment(cfg);

    CHECK(fs::exists(out / "results.md"));
    CHECK(fs::exists(out / "results.json"));
    CHECK_FALSE(fs::exists(out / "FAILED"));
    for (auto seed : {1, 2}) {
        for (const char* t : {"MP", "SLT"}) {
            const auto d = out / ("seed-" + std::to_string(seed)) / t;
            for (const char* f : {"records.json", "final.ckpt", "final.spm", "memory.json", "run0.final.ckpt"}) {
                CHECK(fs::exists(d / f));
            }
        }
    }
    // Rows 0 (SLT dense), 0.1, 0.2; MP contributes only at its target.
    REQUIRE(result.table.rows.size() == 3);
    CHECK_FALSE(result.table.rows[0].cells[0].present);
    CHECK(result.table.rows[2].cells[0].present);
    CHECK(result.table.rows[2].cells[1].present);

    // Each cell is the mean of the two per-seed selections.
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& a = result.runs[c].records.back().best();
        const auto& b = result.runs[2 + c].records.back().best();
        CHECK(std::abs(result.table.rows[2].cells[c].accuracy - (a.token_accuracy + b.token_accuracy) / 2) <= 1e-12);
        CHECK(std::abs(result.table.rows[2].cells[c].loss - (a.loss + b.loss) / 2) <= 1e-12);
    }

    CHECK(verify_directory(out).empty());
    const auto report = report_directory(out);
    CHECK(report.find(io::read_text(out / "results.md")) == 0);
    CHECK(report.find("stored") != std::string::npos);

    const auto table1 = io::read_text(out / "results.md");
    const auto spm1 = io::read_file(out / "seed-2" / "SLT" / "final.spm");
    run_experiment(cfg);
    CHECK(io::read_text(out / "results.md") == table1);
    CHECK(io::read_file(out / "seed-2" / "SLT" / "final.spm") == spm1);

    // Tampering is detected.
    auto bytes = io::read_file(out / "seed-1" / "SLT" / "run1.final.ckpt");
    bytes[bytes.size() / 2] ^= 0x10;
    io::write_file(out / "seed-1" / "SLT" / "run1.final.ckpt", bytes);
    io::write_text(out / "results.md", table1 + "x");
    const auto problems = verify_directory(out);
    CHECK(problems.size() == 2);
}

TEST_CASE("a failing run leaves a FAILED marker") {
    testutil::TempDir dir("fail");
    const auto out = dir.path() / "out";
    fs::create_directories(out);
    io::write_text(out / "seed-1", "not a directory");
    const auto cfg = parse_config(tiny_config(out, "MP"));
    CHECK_THROWS(run_experiment(cfg));
    CHECK(fs::exists(out / "FAILED"));
    CHECK_FALSE(verify_directory(out).empty());
}

// sparselab: run, plan, report and verify pruning experiments.
//
//   sparselab run <config> [--seed N] [--target-sparsity S] [--technique T[,T...]]
//   sparselab plan <config> [overrides]
//   sparselab report <dir>
//   sparselab verify <dir>
//
// Relative output directories are placed under $SPARSELAB_OUTPUT_ROOT when set.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "sparselab/config.hpp"
#include "sparselab/errors.hpp"
#include "sparselab/experiment.hpp"

namespace {

using namespace sparselab;

struct OverrideFlags {
    std::optional<std::uint64_t> seed;
    std::optional<double> target_sparsity;
    std::optional<std::string> technique;

    void attach(CLI::App* app) {
        app->add_option("--seed", seed, "Run a single seed instead of the configured list");
        app->add_option("--target-sparsity", target_sparsity, "Override target_sparsity");
        app->add_option("--technique", technique, "Override technique (comma list allowed)");
    }

    ExperimentConfig load(const std::string& path) const {
        auto cfg = load_config(path);
        apply_overrides(cfg, ConfigOverrides{seed, target_sparsity, technique});
        return cfg;
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse-training lab: pruning techniques on a toy transformer"};
    app.require_subcommand(1);

    std::string config_path;
    std::string dir;
    OverrideFlags run_flags;
    OverrideFlags plan_flags;
    bool quiet = false;

    auto* run = app.add_subcommand("run", "Train every configured plan and write artifacts");
    run->add_option("config", config_path, "Experiment config file")->required();
    run->add_flag("-q,--quiet", quiet, "Suppress progress output");
    run_flags.attach(run);

    auto* plan = app.add_subcommand("plan", "Print the prune plans without training");
    plan->add_option("config", config_path, "Experiment config file")->required();
    plan_flags.attach(plan);

    auto* report = app.add_subcommand("report", "Re-emit tables and memory from an artifact directory");
    report->add_option("dir", dir, "Artifact directory")->required();

    auto* verify = app.add_subcommand("verify", "Re-check checksums and mask invariants");
    verify->add_option("dir", dir, "Artifact directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) {
            const auto cfg = run_flags.load(config_path);
            const auto result = run_experiment(cfg, quiet ? nullptr : &std::cerr);
            std::cout << emit_table(result.table);
            std::cout << "artifacts: " << result.output_dir.string() << '\n';
            return 0;
        }
        if (*plan) {
            const auto cfg = plan_flags.load(config_path);
            for (auto t : cfg.techniques) {
                std::cout << cfg.plan_for(t).describe();
            }
            return 0;
        }
        if (*report) {
            std::cout << report_directory(dir);
            return 0;
        }
        if (*verify) {
            const auto problems = verify_directory(dir, &std::cerr);
            for (const auto& p : problems) {
                std::cout << "FAIL " << p << '\n';
            }
            std::cout << (problems.empty() ? "OK" : "FAILED") << " (" << problems.size()
                      << " problem" << (problems.size() == 1 ? "" : "s") << ")\n";
            return problems.empty() ? 0 : 1;
        }
    } catch (const ConfigError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

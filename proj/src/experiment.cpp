#include "sparselab/experiment.hpp"

#include <algorithm>
#include <ostream>
#include <sstream>

#include "sparselab/binary_io.hpp"
#include "sparselab/checkpoint.hpp"
#include "sparselab/errors.hpp"
#include "sparselab/executor.hpp"
#include "sparselab/sparse_store.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sparselab {

namespace {

constexpr const char* kFailedMarker = "FAILED";

// Persists every checkpoint the executor produces and reports progress.
class ArtifactWriter : public PlanObserver {
public:
    ArtifactWriter(fs::path dir, std::ostream* progress) : dir_(std::move(dir)), progress_(progress) {}

    void on_run_start(std::size_t run, const PlanStep& step, const ParamRegistry&, const OptimizerState&,
                      const MaskSet& mask, const Checkpoint* source) override {
        if (progress_) {
            *progress_ << "  run " << run << ": " << to_string(step.mode) << " to sparsity "
                       << step.target_sparsity << ", mask sparsity " << mask.sparsity()
                       << (source ? ", rewound from " + source->id : std::string()) << std::endl;
        }
    }

    void on_checkpoint(std::size_t, const Checkpoint& ckpt, bool) override {
        write_checkpoint(dir_ / checkpoint_file_name(ckpt.id), ckpt);
    }

private:
    fs::path dir_;
    std::ostream* progress_;
};

json memory_json(const MemoryReport& r) {
    json items = json::array();
    for (const auto& it : r.items) {
        items.push_back({{"name", it.name},
                         {"dense_bytes", it.dense_bytes},
                         {"csc_bytes", it.csc_bytes},
                         {"encoding", to_string(it.encoding)}});
    }
    return json{{"value_width", r.widths.value_width},
                {"index_width", r.widths.index_width},
                {"dense_total", r.dense_total},
                {"chosen_total", r.chosen_total},
                {"items", std::move(items)}};
}

std::vector<RunRecord> read_records(const fs::path& dir) {
    json j;
    try {
        j = json::parse(io::read_text(dir / "records.json"));
    } catch (const json::exception& e) {
        throw FormatError((dir / "records.json").string() + ": " + e.what());
    }
    std::vector<RunRecord> out;
    for (const auto& r : j.at("runs")) {
        out.push_back(record_from_json(r));
    }
    return out;
}

std::vector<TechniqueRuns> read_all_records(const fs::path& out, const ExperimentConfig& cfg) {
    std::vector<TechniqueRuns> runs;
    for (auto seed : cfg.seeds) {
        for (auto t : cfg.techniques) {
            runs.push_back(TechniqueRuns{t, seed, read_records(technique_dir(out, seed, t))});
        }
    }
    return runs;
}

}  // namespace

fs::path technique_dir(const fs::path& out, std::uint64_t seed, Technique technique) {
    return out / ("seed-" + std::to_string(seed)) / std::string(to_string(technique));
}

std::string checkpoint_file_name(const std::string& id) {
    std::string name = id;
    std::replace(name.begin(), name.end(), '/', '.');
    return name + ".ckpt";
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, std::ostream* progress) {
    ExperimentResult result;
    result.output_dir = resolve_output_dir(cfg);
    const fs::path& out = result.output_dir;
    fs::create_directories(out);
    fs::remove(out / kFailedMarker);
    try {
        io::write_text(out / "config.txt", emit_config(cfg));
        for (auto seed : cfg.seeds) {
            const TrainingSetup setup = cfg.training_setup(seed);
            for (auto technique : cfg.techniques) {
                const PrunePlan plan = cfg.plan_for(technique);
                const fs::path dir = technique_dir(out, seed, technique);
                fs::create_directories(dir);
                if (progress) {
                    *progress << "seed " << seed << " " << to_string(technique) << ": "
                              << plan.steps.size() << " runs" << std::endl;
                }
                ArtifactWriter writer(dir, progress);
                PlanResult pr = execute_plan(plan, setup, &writer);

                json records{{"technique", std::string(to_string(technique))}, {"seed", seed}};
                records["runs"] = json::array();
                for (const auto& rec : pr.records) {
                    records["runs"].push_back(to_json(rec));
                }
                io::write_text(dir / "records.json", records.dump(2) + "\n");
                io::write_text(dir / "weight_growth.txt", emit_weight_growth(pr.records));
                write_checkpoint(dir / "final.ckpt", pr.final_checkpoint);
                write_sparse_model(dir / "final.spm", pr.final_checkpoint.params);
                const auto memory = report_model_memory(pr.final_checkpoint.params,
                                                        *pr.final_checkpoint.mask, cfg.widths);
                io::write_text(dir / "memory.json", memory_json(memory).dump(2) + "\n");
                result.runs.push_back(TechniqueRuns{technique, seed, std::move(pr.records)});
            }
        }
        result.table = build_table(cfg.techniques, cfg.seeds, result.runs);
        io::write_text(out / "results.md", emit_table(result.table));
        io::write_text(out / "results.json", to_json(result.table).dump(2) + "\n");
    } catch (const std::exception& e) {
        io::write_text(out / kFailedMarker, std::string(e.what()) + "\n");
        throw;
    }
    return result;
}

std::string report_directory(const fs::path& out) {
    const auto cfg = load_config(out / "config.txt");
    const auto runs = read_all_records(out, cfg);
    std::ostringstream os;
    os << emit_table(build_table(cfg.techniques, cfg.seeds, runs)) << '\n';
    os << "Final model memory (value width " << cfg.widths.value_width << ", index width "
       << cfg.widths.index_width << "):\n";
    for (const auto& tr : runs) {
        const auto dir = technique_dir(out, tr.seed, tr.technique);
        const auto ckpt = read_checkpoint(dir / "final.ckpt");
        if (!ckpt.mask) {
            throw FormatError((dir / "final.ckpt").string() + ": no mask");
        }
        const auto memory = report_model_memory(ckpt.params, *ckpt.mask, cfg.widths);
        os << "  seed " << tr.seed << " " << to_string(tr.technique) << ": sparsity "
           << measured_sparsity(ckpt.params) << ", dense " << memory.dense_total << " B, stored "
           << memory.chosen_total << " B\n";
    }
    os << "\nStart-of-run max|w|:\n";
    for (const auto& tr : runs) {
        os << "  seed " << tr.seed << " " << to_string(tr.technique) << "\n" << emit_weight_growth(tr.records);
    }
    return os.str();
}

std::vector<std::string> verify_directory(const fs::path& out, std::ostream* progress) {
    std::vector<std::string> problems;
    auto check = [&](bool ok, const fs::path& where, const std::string& what) {
        if (!ok) {
            problems.push_back(where.string() + ": " + what);
        }
    };
    ExperimentConfig cfg;
    try {
        cfg = load_config(out / "config.txt");
    } catch (const std::exception& e) {
        return {(out / "config.txt").string() + ": " + e.what()};
    }
    check(!fs::exists(out / kFailedMarker), out, "run was marked FAILED");

    for (auto seed : cfg.seeds) {
        for (auto technique : cfg.techniques) {
            const auto dir = technique_dir(out, seed, technique);
            try {
                const auto records = read_records(dir);
                std::optional<MaskSet> prev_mask;
                std::optional<Checkpoint> last;
                for (const auto& rec : records) {
                    for (const auto& id : {rec.rewind_checkpoint_id, rec.final_checkpoint_id}) {
                        const auto path = dir / checkpoint_file_name(id);
                        const auto ckpt = read_checkpoint(path);
                        check(ckpt.id == id, path, "checkpoint id mismatch");
                        check(ckpt.mask.has_value(), path, "missing mask");
                        if (ckpt.mask) {
                            check(respects_mask(ckpt.params, *ckpt.mask), path,
                                  "a masked weight is nonzero");
                        }
                    }
                    const auto path = dir / checkpoint_file_name(rec.final_checkpoint_id);
                    auto fin = read_checkpoint(path);
                    check(rec.checkpoints.back().sparsity == measured_sparsity(fin.params), path,
                          "recorded sparsity differs from the measured zero fraction");
                    if (prev_mask && fin.mask) {
                        check(fin.mask->keep_subset_of(*prev_mask), path,
                              "mask is not monotone with the previous run");
                    }
                    prev_mask = fin.mask;
                    last = std::move(fin);
                }
                check(!records.empty(), dir, "no runs recorded");
                const auto final_ckpt = read_checkpoint(dir / "final.ckpt");
                if (last) {
                    check(final_ckpt.bitwise_equal(*last), dir / "final.ckpt",
                          "differs from the last run's final checkpoint");
                }
                const auto sparse = read_sparse_model(dir / "final.spm");
                check(sparse.bitwise_equal(final_ckpt.params), dir / "final.spm",
                      "differs from final.ckpt parameters");
            } catch (const std::exception& e) {
                problems.push_back(dir.string() + ": " + e.what());
            }
            if (progress) {
                *progress << "checked " << dir.string() << std::endl;
            }
        }
    }
    try {
        const auto runs = read_all_records(out, cfg);
        const auto expected = emit_table(build_table(cfg.techniques, cfg.seeds, runs));
        check(io::read_text(out / "results.md") == expected, out / "results.md",
              "does not match the table rebuilt from records");
    } catch (const std::exception& e) {
        problems.push_back((out / "results.md").string() + ": " + e.what());
    }
    return problems;
}

}  // namespace sparselab

#include "sparselab/results.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sparselab/errors.hpp"

namespace sparselab {

namespace {

using nlohmann::json;

constexpr double kSparsityMatch = 1e-9;

std::string printf_str(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

template <typename E>
E enum_from(const std::string& s, std::initializer_list<E> all) {
    for (E e : all) {
        if (to_string(e) == s) {
            return e;
        }
    }
    throw FormatError("unknown enum value '" + s + "' in run record");
}

}  // namespace

ResultsTable build_table(const std::vector<Technique>& techniques,
                         const std::vector<std::uint64_t>& seeds,
                         const std::vector<TechniqueRuns>& runs) {
    ResultsTable table{techniques, seeds, {}};

    auto row_for = [&](double s) -> TableRow& {
        for (auto& row : table.rows) {
            if (std::abs(row.sparsity - s) < kSparsityMatch) {
                return row;
            }
        }
        table.rows.push_back(TableRow{s, 0, std::vector<TableCell>(techniques.size())});
        return table.rows.back();
    };
    auto find_runs = [&](Technique t, std::uint64_t seed) -> const TechniqueRuns* {
        for (const auto& r : runs) {
            if (r.technique == t && r.seed == seed) {
                return &r;
            }
        }
        return nullptr;
    };

    // Rows come from the first seed; other seeds must supply the same levels.
    for (std::size_t c = 0; c < techniques.size(); ++c) {
        const TechniqueRuns* first = seeds.empty() ? nullptr : find_runs(techniques[c], seeds.front());
        if (first == nullptr) {
            continue;
        }
        for (const auto& rec : first->records) {
            const double s = rec.step.target_sparsity;
            TableRow& row = row_for(s);
            double acc = 0.0;
            double loss = 0.0;
            bool complete = true;
            for (auto seed : seeds) {
                const TechniqueRuns* tr = find_runs(techniques[c], seed);
                const RunRecord* match = nullptr;
                if (tr != nullptr) {
                    for (const auto& other : tr->records) {
                        if (std::abs(other.step.target_sparsity - s) < kSparsityMatch) {
                            match = &other;
                        }
                    }
                }
                if (match == nullptr) {
                    complete = false;
                    break;
                }
                acc += match->best().token_accuracy;
                loss += match->best().loss;
            }
            if (!complete) {
                continue;
            }
            const double n = static_cast<double>(seeds.size());
            row.cells[c] = TableCell{true, acc / n, loss / n, false, false};
            if (row.memory_bytes == 0) {
                row.memory_bytes = rec.memory_bytes;
            }
        }
    }
    std::sort(table.rows.begin(), table.rows.end(),
              [](const TableRow& a, const TableRow& b) { return a.sparsity < b.sparsity; });

    for (auto& row : table.rows) {
        bool any = false;
        double best_acc = 0.0;
        double best_loss = 0.0;
        for (const auto& cell : row.cells) {
            if (!cell.present) {
                continue;
            }
            if (!any || cell.accuracy > best_acc) {
                best_acc = cell.accuracy;
            }
            if (!any || cell.loss < best_loss) {
                best_loss = cell.loss;
            }
            any = true;
        }
        for (auto& cell : row.cells) {
            cell.best_accuracy = cell.present && cell.accuracy == best_acc;
            cell.best_loss = cell.present && cell.loss == best_loss;
        }
    }
    return table;
}

std::string emit_table(const ResultsTable& table) {
    std::vector<std::string> header{"Sparsity", "Memory [KiB]"};
    for (auto t : table.techniques) {
        header.push_back(std::string(to_string(t)) + " acc [%]");
        header.push_back(std::string(to_string(t)) + " loss");
    }
    std::vector<std::vector<std::string>> body;
    for (const auto& row : table.rows) {
        std::vector<std::string> line{printf_str("%.0f%%", row.sparsity * 100.0),
                                      printf_str("%.2f", static_cast<double>(row.memory_bytes) / 1024.0)};
        for (const auto& cell : row.cells) {
            if (!cell.present) {
                line.emplace_back("-");
                line.emplace_back("-");
                continue;
            }
            line.push_back(printf_str("%.2f", cell.accuracy * 100.0) + (cell.best_accuracy ? " *" : "  "));
            line.push_back(printf_str("%.4f", cell.loss) + (cell.best_loss ? " *" : "  "));
        }
        body.push_back(std::move(line));
    }
    std::vector<std::size_t> width(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) {
        width[i] = header[i].size();
        for (const auto& line : body) {
            width[i] = std::max(width[i], line[i].size());
        }
    }
    std::ostringstream os;
    auto emit = [&](const std::vector<std::string>& cells) {
        os << '|';
        for (std::size_t i = 0; i < cells.size(); ++i) {
            os << ' ' << std::string(width[i] - cells[i].size(), ' ') << cells[i] << " |";
        }
        os << '\n';
    };
    emit(header);
    os << '|';
    for (auto w : width) {
        os << std::string(w + 1, '-') << ":|";
    }
    os << '\n';
    for (const auto& line : body) {
        emit(line);
    }
    os << "\nMeans over seeds";
    for (std::size_t i = 0; i < table.seeds.size(); ++i) {
        os << (i ? ", " : " ") << table.seeds[i];
    }
    os << ". '*' marks the best value in a row.\n";
    return os.str();
}

nlohmann::json to_json(const ResultsTable& table) {
    json j;
    for (auto t : table.techniques) {
        j["techniques"].push_back(std::string(to_string(t)));
    }
    j["seeds"] = table.seeds;
    j["rows"] = json::array();
    for (const auto& row : table.rows) {
        json r{{"sparsity", row.sparsity}, {"memory_bytes", row.memory_bytes}};
        r["cells"] = json::array();
        for (const auto& cell : row.cells) {
            if (!cell.present) {
                r["cells"].push_back(nullptr);
            } else {
                r["cells"].push_back({{"accuracy", cell.accuracy},
                                      {"loss", cell.loss},
                                      {"best_accuracy", cell.best_accuracy},
                                      {"best_loss", cell.best_loss}});
            }
        }
        j["rows"].push_back(std::move(r));
    }
    return j;
}

nlohmann::json to_json(const RunRecord& rec) {
    json step{{"run_steps", rec.step.run_steps},
              {"target_sparsity", rec.step.target_sparsity},
              {"rewind_to", std::string(to_string(rec.step.rewind_to))},
              {"transform", std::string(to_string(rec.step.transform))},
              {"mode", std::string(to_string(rec.step.mode))}};
    if (rec.step.schedule) {
        const auto& s = *rec.step.schedule;
        step["schedule"] = {{"s0", s.s0}, {"sT", s.sT}, {"ramp_steps", s.ramp_steps},
                            {"prune_interval", s.prune_interval}};
    }
    json cps = json::array();
    for (const auto& c : rec.checkpoints) {
        cps.push_back({{"step", c.step},
                       {"loss", c.loss},
                       {"token_accuracy", c.token_accuracy},
                       {"sparsity", c.sparsity},
                       {"max_abs_weight", c.max_abs_weight},
                       {"mean_abs_weight", c.mean_abs_weight}});
    }
    return json{{"run_index", rec.run_index},
                {"step", std::move(step)},
                {"checkpoints", std::move(cps)},
                {"selected", rec.selected},
                {"start_max_abs_weight", rec.start_max_abs_weight},
                {"start_mean_abs_weight", rec.start_mean_abs_weight},
                {"rewind_checkpoint_id", rec.rewind_checkpoint_id},
                {"final_checkpoint_id", rec.final_checkpoint_id},
                {"memory_dense_bytes", rec.memory_dense_bytes},
                {"memory_bytes", rec.memory_bytes},
                {"log", rec.log}};
}

RunRecord record_from_json(const nlohmann::json& j) {
    try {
        RunRecord rec;
        rec.run_index = j.at("run_index").get<std::size_t>();
        const auto& s = j.at("step");
        rec.step.run_steps = s.at("run_steps").get<std::size_t>();
        rec.step.target_sparsity = s.at("target_sparsity").get<double>();
        rec.step.rewind_to = enum_from(s.at("rewind_to").get<std::string>(),
                                       {RewindTo::None, RewindTo::Initial, RewindTo::Early});
        rec.step.transform = enum_from(s.at("transform").get<std::string>(),
                                       {Transform::None, Transform::Clt, Transform::RandomSign});
        rec.step.mode = enum_from(s.at("mode").get<std::string>(), {RunMode::FixedMask, RunMode::Gradual});
        if (s.contains("schedule")) {
            const auto& sc = s.at("schedule");
            rec.step.schedule = PruneSchedule{sc.at("s0").get<double>(), sc.at("sT").get<double>(),
                                              sc.at("ramp_steps").get<std::size_t>(),
                                              sc.at("prune_interval").get<std::size_t>()};
        }
        for (const auto& c : j.at("checkpoints")) {
            rec.checkpoints.push_back(CheckpointMetrics{
                c.at("step").get<std::size_t>(), c.at("loss").get<double>(),
                c.at("token_accuracy").get<double>(), c.at("sparsity").get<double>(),
                c.at("max_abs_weight").get<double>(), c.at("mean_abs_weight").get<double>()});
        }
        rec.selected = j.at("selected").get<std::size_t>();
        if (rec.selected >= rec.checkpoints.size()) {
            throw FormatError("selected checkpoint index out of range");
        }
        rec.start_max_abs_weight = j.at("start_max_abs_weight").get<double>();
        rec.start_mean_abs_weight = j.at("start_mean_abs_weight").get<double>();
        rec.rewind_checkpoint_id = j.at("rewind_checkpoint_id").get<std::string>();
        rec.final_checkpoint_id = j.at("final_checkpoint_id").get<std::string>();
        rec.memory_dense_bytes = j.at("memory_dense_bytes").get<std::uint64_t>();
        rec.memory_bytes = j.at("memory_bytes").get<std::uint64_t>();
        rec.log = j.at("log").get<std::vector<std::string>>();
        return rec;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed run record: ") + e.what());
    }
}

std::string emit_weight_growth(const std::vector<RunRecord>& records) {
    std::ostringstream os;
    char buf[128];
    for (const auto& rec : records) {
        std::snprintf(buf, sizeof buf, "run %2zu  sparsity %.2f  start max|w| %.6f  mean|w| %.6f\n",
                      rec.run_index, rec.step.target_sparsity, rec.start_max_abs_weight,
                      rec.start_mean_abs_weight);
        os << buf;
    }
    return os.str();
}

}  // namespace sparselab

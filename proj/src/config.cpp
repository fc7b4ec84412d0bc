#include "sparselab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <sstream>

#include "sparselab/binary_io.hpp"
#include "sparselab/errors.hpp"
#include "sparselab/pruning.hpp"

namespace sparselab {

namespace {

std::string_view trim(std::string_view s) {
    const auto ws = " \t\r";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(ws);
    return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto comma = s.find(',', start);
        const auto end = comma == std::string_view::npos ? s.size() : comma;
        out.push_back(trim(s.substr(start, end - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

template <typename T>
T parse_number(std::string_view s) {
    T v{};
    const auto* end = s.data() + s.size();
    const auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw ConfigError("'" + std::string(s) + "' is not a valid number");
    }
    return v;
}

bool parse_bool(std::string_view s) {
    if (s == "true" || s == "1" || s == "yes") {
        return true;
    }
    if (s == "false" || s == "0" || s == "no") {
        return false;
    }
    throw ConfigError("'" + std::string(s) + "' is not a boolean");
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

using Setter = std::function<void(ExperimentConfig&, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
    static const std::map<std::string, Setter, std::less<>> table = {
        {"technique",
         [](ExperimentConfig& c, std::string_view v) {
             c.techniques.clear();
             for (auto item : split_list(v)) {
                 const auto t = parse_technique(item);
                 if (std::find(c.techniques.begin(), c.techniques.end(), t) != c.techniques.end()) {
                     throw ConfigError("technique " + std::string(item) + " listed twice");
                 }
                 c.techniques.push_back(t);
             }
         }},
        {"target_sparsity", [](ExperimentConfig& c, std::string_view v) { c.target_sparsity = parse_number<double>(v); }},
        {"task", [](ExperimentConfig& c, std::string_view v) { c.task = parse_task(v); }},
        {"run_steps", [](ExperimentConfig& c, std::string_view v) { c.run_steps = parse_number<std::size_t>(v); }},
        {"rewind_fraction", [](ExperimentConfig& c, std::string_view v) { c.rewind_fraction = parse_number<double>(v); }},
        {"prune_interval", [](ExperimentConfig& c, std::string_view v) { c.prune_interval = parse_number<std::size_t>(v); }},
        {"seeds",
         [](ExperimentConfig& c, std::string_view v) {
             c.seeds.clear();
             for (auto item : split_list(v)) {
                 c.seeds.push_back(parse_number<std::uint64_t>(item));
             }
         }},
        {"output_dir", [](ExperimentConfig& c, std::string_view v) { c.output_dir = std::string(v); }},
        {"vocab_size", [](ExperimentConfig& c, std::string_view v) { c.model.vocab_size = parse_number<std::size_t>(v); }},
        {"d_model", [](ExperimentConfig& c, std::string_view v) { c.model.d_model = parse_number<std::size_t>(v); }},
        {"n_heads", [](ExperimentConfig& c, std::string_view v) { c.model.n_heads = parse_number<std::size_t>(v); }},
        {"n_layers", [](ExperimentConfig& c, std::string_view v) { c.model.n_layers = parse_number<std::size_t>(v); }},
        {"d_ff", [](ExperimentConfig& c, std::string_view v) { c.model.d_ff = parse_number<std::size_t>(v); }},
        {"max_seq_len", [](ExperimentConfig& c, std::string_view v) { c.model.max_seq_len = parse_number<std::size_t>(v); }},
        {"batch_size", [](ExperimentConfig& c, std::string_view v) { c.batch_size = parse_number<std::size_t>(v); }},
        {"seq_len", [](ExperimentConfig& c, std::string_view v) { c.seq_len = parse_number<std::size_t>(v); }},
        {"base_lr", [](ExperimentConfig& c, std::string_view v) { c.base_lr = parse_number<double>(v); }},
        {"warmup_fraction", [](ExperimentConfig& c, std::string_view v) { c.warmup_fraction = parse_number<double>(v); }},
        {"ramp_fraction", [](ExperimentConfig& c, std::string_view v) { c.ramp_fraction = parse_number<double>(v); }},
        {"eval_fraction", [](ExperimentConfig& c, std::string_view v) { c.eval_fraction = parse_number<double>(v); }},
        {"eval_batches", [](ExperimentConfig& c, std::string_view v) { c.eval_batches = parse_number<std::size_t>(v); }},
        {"eval_batch_size", [](ExperimentConfig& c, std::string_view v) { c.eval_batch_size = parse_number<std::size_t>(v); }},
        {"rewind_source", [](ExperimentConfig& c, std::string_view v) { c.rewind_source = parse_rewind_source(v); }},
        {"direct_jump", [](ExperimentConfig& c, std::string_view v) { c.direct_jump = parse_bool(v); }},
        {"value_width", [](ExperimentConfig& c, std::string_view v) { c.widths.value_width = parse_number<std::size_t>(v); }},
        {"index_width", [](ExperimentConfig& c, std::string_view v) { c.widths.index_width = parse_number<std::size_t>(v); }},
    };
    return table;
}

const std::vector<std::string> kRequired = {"technique", "target_sparsity", "task", "run_steps"};

// Cross-field checks; appends problems rather than throwing.
void validate(const ExperimentConfig& c, std::vector<std::string>& problems) {
    if (c.techniques.empty()) {
        problems.push_back("technique: at least one technique is required");
    }
    if (!on_ladder(c.target_sparsity)) {
        problems.push_back("target_sparsity: " + format_double(c.target_sparsity) +
                           " is off the ladder (0.1..0.8 step 0.1, 0.85, 0.9, 0.95, 0.98)");
    }
    if (c.run_steps == 0) {
        problems.push_back("run_steps: must be positive");
    }
    if (!(c.rewind_fraction >= 0.0 && c.rewind_fraction < 1.0)) {
        problems.push_back("rewind_fraction: must lie in [0, 1)");
    }
    if (c.run_steps > 0 && c.effective_prune_interval() >
                               std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                            c.ramp_fraction * static_cast<double>(c.run_steps))))) {
        problems.push_back("prune_interval: exceeds the ramp length");
    }
    if (c.seeds.empty()) {
        problems.push_back("seeds: at least one seed is required");
    }
    if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
        problems.push_back("seeds: duplicate seed");
    }
    if (c.output_dir.empty()) {
        problems.push_back("output_dir: must not be empty");
    }
    try {
        c.model.validate();
    } catch (const ConfigError& e) {
        problems.push_back(e.what());
    }
    if (c.batch_size == 0 || c.eval_batches == 0 || c.eval_batch_size == 0) {
        problems.push_back("batch_size, eval_batches and eval_batch_size must be positive");
    }
    if (c.seq_len == 0 || c.seq_len > c.model.max_seq_len) {
        problems.push_back("seq_len: must lie in [1, max_seq_len]");
    }
    if (!(c.base_lr > 0.0)) {
        problems.push_back("base_lr: must be positive");
    }
    if (!(c.warmup_fraction >= 0.0 && c.warmup_fraction <= 1.0)) {
        problems.push_back("warmup_fraction: must lie in [0, 1]");
    }
    if (!(c.ramp_fraction > 0.0 && c.ramp_fraction <= 1.0)) {
        problems.push_back("ramp_fraction: must lie in (0, 1]");
    }
    if (!(c.eval_fraction > 0.0 && c.eval_fraction <= 1.0)) {
        problems.push_back("eval_fraction: must lie in (0, 1]");
    }
    try {
        c.widths.validate();
    } catch (const ConfigError& e) {
        problems.push_back(std::string("value_width/index_width: ") + e.what());
    }
}

[[noreturn]] void fail(const std::vector<std::string>& problems) {
    std::string msg = "invalid experiment config (" + std::to_string(problems.size()) + " problem" +
                      (problems.size() == 1 ? "" : "s") + "):";
    for (const auto& p : problems) {
        msg += "\n  " + p;
    }
    throw ConfigError(msg);
}

}  // namespace

std::size_t ExperimentConfig::effective_prune_interval() const {
    return prune_interval != 0 ? prune_interval : std::max<std::size_t>(1, run_steps / 50);
}

PlanOptions ExperimentConfig::plan_options() const {
    PlanOptions o;
    o.run_steps = run_steps;
    o.rewind_step = static_cast<std::size_t>(std::llround(rewind_fraction * static_cast<double>(run_steps)));
    o.prune_interval = effective_prune_interval();
    o.ramp_fraction = ramp_fraction;
    o.rewind_source = rewind_source;
    o.direct = direct_jump;
    return o;
}

TrainingSetup ExperimentConfig::training_setup(std::uint64_t seed) const {
    TrainingSetup s;
    s.model = model;
    s.model.seed = seed;
    s.task = task;
    s.batch_size = batch_size;
    s.seq_len = seq_len;
    s.adam.base_lr = base_lr;
    s.warmup_fraction = warmup_fraction;
    s.eval_fraction = eval_fraction;
    s.eval_batches = eval_batches;
    s.eval_batch_size = eval_batch_size;
    s.widths = widths;
    s.seed = seed;
    return s;
}

PrunePlan ExperimentConfig::plan_for(Technique technique) const {
    return make_plan(technique, target_sparsity, plan_options());
}

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig cfg;
    std::vector<std::string> problems;
    std::set<std::string, std::less<>> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto end = nl == std::string_view::npos ? text.size() : nl;
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (!line.empty()) {
            const std::string where = "line " + std::to_string(line_no) + ": ";
            const auto eq = line.find('=');
            if (eq == std::string_view::npos) {
                problems.push_back(where + "expected 'key = value'");
            } else {
                const auto key = trim(line.substr(0, eq));
                const auto value = trim(line.substr(eq + 1));
                const auto it = setters().find(key);
                if (it == setters().end()) {
                    problems.push_back(where + "unknown key '" + std::string(key) + "'");
                } else if (!seen.insert(std::string(key)).second) {
                    problems.push_back(where + "duplicate key '" + std::string(key) + "'");
                } else {
                    try {
                        it->second(cfg, value);
                    } catch (const ConfigError& e) {
                        problems.push_back(where + std::string(key) + ": " + e.what());
                    }
                }
            }
        }
        if (nl == std::string_view::npos) {
            break;
        }
    }
    bool missing = false;
    for (const auto& key : kRequired) {
        if (!seen.contains(key)) {
            problems.push_back("missing required key '" + key + "'");
            missing = true;
        }
    }
    if (!missing) {
        validate(cfg, problems);
    }
    if (!problems.empty()) {
        fail(problems);
    }
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return parse_config(io::read_text(path));
}

std::string emit_config(const ExperimentConfig& c) {
    std::ostringstream os;
    auto kv = [&](const char* key, const std::string& value) { os << key << " = " << value << '\n'; };
    std::string techniques;
    for (std::size_t i = 0; i < c.techniques.size(); ++i) {
        techniques += (i ? ", " : "") + std::string(to_string(c.techniques[i]));
    }
    std::string seeds;
    for (std::size_t i = 0; i < c.seeds.size(); ++i) {
        seeds += (i ? ", " : "") + std::to_string(c.seeds[i]);
    }
    kv("technique", techniques);
    kv("target_sparsity", format_double(c.target_sparsity));
    kv("task", std::string(to_string(c.task)));
    kv("run_steps", std::to_string(c.run_steps));
    kv("rewind_fraction", format_double(c.rewind_fraction));
    kv("prune_interval", std::to_string(c.prune_interval));
    kv("seeds", seeds);
    kv("output_dir", c.output_dir);
    kv("vocab_size", std::to_string(c.model.vocab_size));
    kv("d_model", std::to_string(c.model.d_model));
    kv("n_heads", std::to_string(c.model.n_heads));
    kv("n_layers", std::to_string(c.model.n_layers));
    kv("d_ff", std::to_string(c.model.d_ff));
    kv("max_seq_len", std::to_string(c.model.max_seq_len));
    kv("batch_size", std::to_string(c.batch_size));
    kv("seq_len", std::to_string(c.seq_len));
    kv("base_lr", format_double(c.base_lr));
    kv("warmup_fraction", format_double(c.warmup_fraction));
    kv("ramp_fraction", format_double(c.ramp_fraction));
    kv("eval_fraction", format_double(c.eval_fraction));
    kv("eval_batches", std::to_string(c.eval_batches));
    kv("eval_batch_size", std::to_string(c.eval_batch_size));
    kv("rewind_source", std::string(to_string(c.rewind_source)));
    kv("direct_jump", c.direct_jump ? "true" : "false");
    kv("value_width", std::to_string(c.widths.value_width));
    kv("index_width", std::to_string(c.widths.index_width));
    return os.str();
}

void apply_overrides(ExperimentConfig& cfg, const ConfigOverrides& o) {
    std::vector<std::string> problems;
    if (o.seed) {
        cfg.seeds = {*o.seed};
    }
    if (o.target_sparsity) {
        cfg.target_sparsity = *o.target_sparsity;
    }
    if (o.technique) {
        try {
            setters().at("technique")(cfg, *o.technique);
        } catch (const ConfigError& e) {
            problems.push_back(std::string("--technique: ") + e.what());
        }
    }
    validate(cfg, problems);
    if (!problems.empty()) {
        fail(problems);
    }
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
    std::filesystem::path dir(cfg.output_dir);
    if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0' &&
                                                        dir.is_relative()) {
        return std::filesystem::path(root) / dir;
    }
    return dir;
}

}  // namespace sparselab

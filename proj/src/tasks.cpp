#include "sparselab/tasks.hpp"

#include <algorithm>

#include "sparselab/errors.hpp"
#include "sparselab/rng.hpp"

namespace sparselab {

std::string_view to_string(Task task) {
    switch (task) {
        case Task::Copy:
            return "copy";
        case Task::Reverse:
            return "reverse";
        case Task::Sort:
            return "sort";
    }
    return "copy";
}

Task parse_task(std::string_view name) {
    if (name == "copy") {
        return Task::Copy;
    }
    if (name == "reverse") {
        return Task::Reverse;
    }
    if (name == "sort") {
        return Task::Sort;
    }
    throw ConfigError("unknown task '" + std::string(name) + "' (expected copy, reverse or sort)");
}

TokenBatch generate_task_batch(Task task, std::uint64_t seed, std::uint64_t counter,
                               std::size_t batch, std::size_t len, std::size_t vocab) {
    if (vocab < 2) {
        throw ConfigError("task vocabulary needs at least one data token");
    }
    Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(task)), counter));
    TokenBatch out;
    out.batch = batch;
    out.src_len = len;
    out.tgt_len = len;
    out.src.resize(batch * len);
    out.tgt.resize(batch * len);
    for (std::size_t b = 0; b < batch; ++b) {
        auto src = out.src.begin() + static_cast<std::ptrdiff_t>(b * len);
        auto tgt = out.tgt.begin() + static_cast<std::ptrdiff_t>(b * len);
        for (std::size_t i = 0; i < len; ++i) {
            src[static_cast<std::ptrdiff_t>(i)] = 1 + static_cast<int>(rng.below(vocab - 1));
        }
        std::copy(src, src + static_cast<std::ptrdiff_t>(len), tgt);
        if (task == Task::Reverse) {
            std::reverse(tgt, tgt + static_cast<std::ptrdiff_t>(len));
        } else if (task == Task::Sort) {
            std::sort(tgt, tgt + static_cast<std::ptrdiff_t>(len));
        }
    }
    return out;
}

}  // namespace sparselab

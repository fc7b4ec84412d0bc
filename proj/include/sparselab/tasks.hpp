#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

#include "sparselab/model.hpp"

namespace sparselab {

enum class Task { Copy, Reverse, Sort };

std::string_view to_string(Task task);
/// Throws ConfigError for unknown names.
Task parse_task(std::string_view name);

/// Stream identifiers so training and held-out batches never share a seed.
inline constexpr std::uint64_t kTrainStream = 0;
inline constexpr std::uint64_t kHeldOutStream = 0x5EEDF00DULL;

/// Source tokens drawn uniformly from [1, vocab); the target is the source
/// copied, reversed, or sorted ascending. Deterministic in (task, seed, counter).
TokenBatch generate_task_batch(Task task, std::uint64_t seed, std::uint64_t counter,
                               std::size_t batch, std::size_t len, std::size_t vocab);

}  // namespace sparselab

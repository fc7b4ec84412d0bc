#pragma once

// Checkpoints and their on-disk container.
//
//   "SLCK" | u32 version | str id | str lineage | u64 step | u32 entry count
//   manifest:  per entry  str name | u8 rank | u64 dims[rank] | u8 prunable |
//                         u64 fan_in | u64 fan_out
//   params:    per entry  size × f64
//   optimizer: u64 step | f64 beta1 | f64 beta2 | f64 eps | f64 base_lr |
//              u64 warmup | per entry size × f64 (first) | per entry size × f64 (second)
//   mask:      u8 present; if present, per prunable entry ceil(size/8) bytes,
//              bit k of byte k/8 (LSB first) set iff element k is kept
//   trailer:   u64 FNV-1a of everything above
//
// Strings are u32 length + bytes; every integer and float is little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sparselab/model.hpp"
#include "sparselab/optim.hpp"
#include "sparselab/pruning.hpp"

namespace sparselab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string id;
    std::uint64_t step = 0;
    ParamRegistry params;
    OptimizerState optimizer;
    std::optional<MaskSet> mask;
    std::string lineage;

    /// Deep copy of live training state.
    static Checkpoint snapshot(std::string id, std::string lineage, const ParamRegistry& params,
                               const OptimizerState& optimizer, const MaskSet* mask);

    bool bitwise_equal(const Checkpoint& other) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError on a bad checksum, version, structure, or a mask the params violate.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace sparselab

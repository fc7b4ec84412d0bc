#pragma once

// Compressed sparse column storage for pruned weight matrices and the memory
// accounting built on it.
//
// An entry is stored iff its bit pattern differs from +0.0, so -0.0 survives
// a round trip. Pruned weights are always written as +0.0 by apply_mask.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sparselab/model.hpp"
#include "sparselab/pruning.hpp"

namespace sparselab {

struct CscMatrix {
    std::size_t n_rows = 0;
    std::size_t n_cols = 0;
    std::vector<std::uint64_t> col_ptr;  // n_cols + 1 entries, col_ptr[0] == 0
    std::vector<std::uint64_t> row_idx;  // strictly increasing within a column
    std::vector<double> values;

    std::size_t nnz() const { return values.size(); }
    /// Throws FormatError on any structural violation.
    void validate() const;
    bool operator==(const CscMatrix&) const = default;
};

CscMatrix csc_encode(const Tensor& dense);
Tensor csc_decode(const CscMatrix& sparse);

/// Byte widths used when accounting; each must be 2, 4 or 8.
struct StorageWidths {
    std::size_t value_width = 4;
    std::size_t index_width = 4;

    void validate() const;
    bool operator==(const StorageWidths&) const = default;
};

/// nnz·value_width + nnz·index_width + (n_cols + 1)·index_width.
std::uint64_t memory_bytes(const CscMatrix& sparse, std::size_t value_width, std::size_t index_width);
std::uint64_t memory_bytes(std::uint64_t nnz, std::uint64_t n_cols, std::size_t value_width,
                           std::size_t index_width);

enum class Encoding { Dense, Csc };
const char* to_string(Encoding e);

struct MemoryItem {
    std::string name;
    std::uint64_t dense_bytes = 0;
    std::uint64_t csc_bytes = 0;  // 0 for parameters that are always dense
    Encoding encoding = Encoding::Dense;

    std::uint64_t chosen_bytes() const { return encoding == Encoding::Csc ? csc_bytes : dense_bytes; }
};

struct MemoryReport {
    StorageWidths widths;
    std::vector<MemoryItem> items;
    std::uint64_t dense_total = 0;
    std::uint64_t chosen_total = 0;
};

/// Shape-only description of one parameter, for accounting without values.
struct ManifestEntry {
    std::string name;
    Shape shape;
    bool prunable = false;
    std::uint64_t nnz = 0;
};

/// Matrices take the cheaper of dense and CSC (dense on ties); vectors stay dense.
MemoryReport report_manifest_memory(const std::vector<ManifestEntry>& manifest,
                                    const StorageWidths& widths);

/// Same accounting for a registry whose mask has been applied.
/// Throws ContractError if a masked entry is nonzero.
MemoryReport report_model_memory(const ParamRegistry& reg, const MaskSet& m,
                                 const StorageWidths& widths);

std::vector<ManifestEntry> manifest_of(const ParamRegistry& reg);

// ---- sparse model container -------------------------------------------
//
//   "SLSM" | u32 version | u32 entry count | entries... | u64 FNV-1a trailer
//   entry: str name | u8 rank | u64 dims[rank] | u8 prunable | u64 fan_in |
//          u64 fan_out | u8 encoding | u64 nnz | u8 value_width | u8 index_width
//          dense: size × f64
//          csc:   (n_cols+1) × index | nnz × index | nnz × f64
//
// Values are stored at full 8-byte width so a reload is bit-exact; the index
// width is the narrowest of {2, 4, 8} that fits.

inline constexpr std::uint32_t kSparseModelVersion = 1;

std::vector<std::uint8_t> encode_sparse_model(const ParamRegistry& reg);
ParamRegistry decode_sparse_model(std::span<const std::uint8_t> bytes);
void write_sparse_model(const std::filesystem::path& path, const ParamRegistry& reg);
ParamRegistry read_sparse_model(const std::filesystem::path& path);

}  // namespace sparselab

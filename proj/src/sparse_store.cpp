#include "sparselab/sparse_store.hpp"

#include <bit>
#include <limits>

#include "sparselab/binary_io.hpp"
#include "sparselab/errors.hpp"

namespace sparselab {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'L', 'S', 'M'};

bool is_stored(double v) { return std::bit_cast<std::uint64_t>(v) != 0; }

std::size_t index_width_for(std::uint64_t max_value) {
    if (max_value <= std::numeric_limits<std::uint16_t>::max()) {
        return 2;
    }
    if (max_value <= std::numeric_limits<std::uint32_t>::max()) {
        return 4;
    }
    return 8;
}

}  // namespace

void CscMatrix::validate() const {
    if (n_rows == 0 || n_cols == 0) {
        throw FormatError("csc: dimensions must be positive");
    }
    if (col_ptr.size() != n_cols + 1) {
        throw FormatError("csc: col_ptr has " + std::to_string(col_ptr.size()) +
                          " entries, expected " + std::to_string(n_cols + 1));
    }
    if (col_ptr.front() != 0) {
        throw FormatError("csc: col_ptr[0] must be 0");
    }
    if (col_ptr.back() != values.size() || row_idx.size() != values.size()) {
        throw FormatError("csc: col_ptr[n_cols], row_idx and values disagree on nnz");
    }
    for (std::size_t c = 0; c < n_cols; ++c) {
        if (col_ptr[c + 1] < col_ptr[c]) {
            throw FormatError("csc: col_ptr decreases at column " + std::to_string(c));
        }
        for (auto k = col_ptr[c]; k < col_ptr[c + 1]; ++k) {
            if (row_idx[k] >= n_rows) {
                throw FormatError("csc: row index out of range in column " + std::to_string(c));
            }
            if (k > col_ptr[c] && row_idx[k] <= row_idx[k - 1]) {
                throw FormatError("csc: row indices not strictly increasing in column " +
                                  std::to_string(c));
            }
        }
    }
    for (double v : values) {
        if (!is_stored(v)) {
            throw FormatError("csc: explicit zero stored");
        }
    }
}

CscMatrix csc_encode(const Tensor& dense) {
    if (dense.rank() != 2) {
        throw DimensionError("csc_encode: expected a matrix, got shape " + shape_str(dense.shape()));
    }
    CscMatrix out;
    out.n_rows = dense.rows();
    out.n_cols = dense.cols();
    out.col_ptr.reserve(out.n_cols + 1);
    out.col_ptr.push_back(0);
    const auto v = dense.values();
    for (std::size_t c = 0; c < out.n_cols; ++c) {
        for (std::size_t r = 0; r < out.n_rows; ++r) {
            const double x = v[r * out.n_cols + c];
            if (is_stored(x)) {
                out.row_idx.push_back(r);
                out.values.push_back(x);
            }
        }
        out.col_ptr.push_back(out.values.size());
    }
    return out;
}

Tensor csc_decode(const CscMatrix& sparse) {
    sparse.validate();
    Tensor out = Tensor::zeros({sparse.n_rows, sparse.n_cols});
    auto v = out.values();
    for (std::size_t c = 0; c < sparse.n_cols; ++c) {
        for (auto k = sparse.col_ptr[c]; k < sparse.col_ptr[c + 1]; ++k) {
            v[sparse.row_idx[k] * sparse.n_cols + c] = sparse.values[k];
        }
    }
    return out;
}

void StorageWidths::validate() const {
    auto ok = [](std::size_t w) { return w == 2 || w == 4 || w == 8; };
    if (!ok(value_width) || !ok(index_width)) {
        throw ConfigError("storage widths must be 2, 4 or 8 bytes");
    }
}

std::uint64_t memory_bytes(std::uint64_t nnz, std::uint64_t n_cols, std::size_t value_width,
                           std::size_t index_width) {
    StorageWidths{value_width, index_width}.validate();
    return nnz * value_width + nnz * index_width + (n_cols + 1) * index_width;
}

std::uint64_t memory_bytes(const CscMatrix& sparse, std::size_t value_width, std::size_t index_width) {
    return memory_bytes(sparse.nnz(), sparse.n_cols, value_width, index_width);
}

const char* to_string(Encoding e) { return e == Encoding::Csc ? "csc" : "dense"; }

MemoryReport report_manifest_memory(const std::vector<ManifestEntry>& manifest,
                                    const StorageWidths& widths) {
    widths.validate();
    MemoryReport report;
    report.widths = widths;
    for (const auto& e : manifest) {
        MemoryItem item;
        item.name = e.name;
        item.dense_bytes = shape_size(e.shape) * widths.value_width;
        if (e.prunable && e.shape.size() == 2) {
            item.csc_bytes = memory_bytes(e.nnz, e.shape[1], widths.value_width, widths.index_width);
            item.encoding = item.csc_bytes < item.dense_bytes ? Encoding::Csc : Encoding::Dense;
        }
        report.dense_total += item.dense_bytes;
        report.chosen_total += item.chosen_bytes();
        report.items.push_back(std::move(item));
    }
    return report;
}

std::vector<ManifestEntry> manifest_of(const ParamRegistry& reg) {
    std::vector<ManifestEntry> out;
    for (const auto& e : reg.entries()) {
        std::uint64_t nnz = 0;
        for (double v : e.tensor.values()) {
            nnz += is_stored(v) ? 1 : 0;
        }
        out.push_back(ManifestEntry{e.name, e.tensor.shape(), e.prunable, nnz});
    }
    return out;
}

MemoryReport report_model_memory(const ParamRegistry& reg, const MaskSet& m,
                                 const StorageWidths& widths) {
    if (!respects_mask(reg, m)) {
        throw ContractError("report_model_memory: mask not applied to the registry");
    }
    return report_manifest_memory(manifest_of(reg), widths);
}

// ---- container ----------------------------------------------------------

std::vector<std::uint8_t> encode_sparse_model(const ParamRegistry& reg) {
    io::ByteWriter w;
    w.bytes(kMagic);
    w.u32(kSparseModelVersion);
    w.u32(static_cast<std::uint32_t>(reg.size()));
    for (const auto& e : reg.entries()) {
        w.str(e.name);
        w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) {
            w.u64(d);
        }
        w.u8(e.prunable ? 1 : 0);
        w.u64(e.fan_in);
        w.u64(e.fan_out);
        const bool sparse = e.prunable && e.tensor.rank() == 2;
        w.u8(static_cast<std::uint8_t>(sparse ? Encoding::Csc : Encoding::Dense));
        if (sparse) {
            const CscMatrix csc = csc_encode(e.tensor);
            const std::size_t iw =
                index_width_for(std::max<std::uint64_t>(csc.nnz(), csc.n_rows));
            w.u64(csc.nnz());
            w.u8(8);
            w.u8(static_cast<std::uint8_t>(iw));
            for (auto p : csc.col_ptr) {
                w.uint(p, iw);
            }
            for (auto r : csc.row_idx) {
                w.uint(r, iw);
            }
            for (double v : csc.values) {
                w.f64(v);
            }
        } else {
            w.u64(e.tensor.size());
            w.u8(8);
            w.u8(0);
            for (double v : e.tensor.values()) {
                w.f64(v);
            }
        }
    }
    w.seal();
    return w.data();
}

ParamRegistry decode_sparse_model(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(io::verify_sealed(bytes));
    const auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
        throw FormatError("not a sparse model file");
    }
    const auto version = r.u32();
    if (version != kSparseModelVersion) {
        throw FormatError("unsupported sparse model version " + std::to_string(version));
    }
    const auto count = r.u32();
    ParamRegistry reg;
    for (std::uint32_t i = 0; i < count; ++i) {
        std::string name = r.str();
        Shape shape(r.u8());
        for (auto& d : shape) {
            d = r.u64();
        }
        const bool prunable = r.u8() != 0;
        const auto fan_in = r.u64();
        const auto fan_out = r.u64();
        const auto encoding = static_cast<Encoding>(r.u8());
        const auto nnz = r.u64();
        const auto vw = r.u8();
        const auto iw = r.u8();
        if (vw != 8) {
            throw FormatError("unsupported value width " + std::to_string(vw));
        }
        Tensor t;
        if (encoding == Encoding::Csc) {
            if (shape.size() != 2 || (iw != 2 && iw != 4 && iw != 8)) {
                throw FormatError("bad csc block header for " + name);
            }
            if (nnz > r.remaining()) {
                throw FormatError("nnz exceeds file size for " + name);
            }
            CscMatrix csc;
            csc.n_rows = shape[0];
            csc.n_cols = shape[1];
            csc.col_ptr.resize(csc.n_cols + 1);
            for (auto& p : csc.col_ptr) {
                p = r.uint(iw);
            }
            csc.row_idx.resize(nnz);
            for (auto& x : csc.row_idx) {
                x = r.uint(iw);
            }
            csc.values.resize(nnz);
            for (auto& v : csc.values) {
                v = r.f64();
            }
            t = csc_decode(csc);
        } else if (encoding == Encoding::Dense) {
            if (nnz != shape_size(shape) || nnz > r.remaining()) {
                throw FormatError("bad dense block header for " + name);
            }
            std::vector<double> v(nnz);
            for (auto& x : v) {
                x = r.f64();
            }
            t = Tensor(shape, std::move(v));
        } else {
            throw FormatError("unknown encoding for " + name);
        }
        if (prunable != (t.rank() >= 2)) {
            throw FormatError("prunable flag inconsistent with rank for " + name);
        }
        reg.add(std::move(name), std::move(t), fan_in, fan_out);
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes in sparse model file");
    }
    return reg;
}

void write_sparse_model(const std::filesystem::path& path, const ParamRegistry& reg) {
    io::write_file(path, encode_sparse_model(reg));
}

ParamRegistry read_sparse_model(const std::filesystem::path& path) {
    return decode_sparse_model(io::read_file(path));
}

}  // namespace sparselab

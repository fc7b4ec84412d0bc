#include "sparselab/checkpoint.hpp"

#include <algorithm>

#include "sparselab/binary_io.hpp"
#include "sparselab/errors.hpp"

namespace sparselab {

namespace {

constexpr std::uint8_t kMagic[4] = {'S', 'L', 'C', 'K'};

void write_doubles(io::ByteWriter& w, std::span<const double> v) {
    for (double x : v) {
        w.f64(x);
    }
}

std::vector<double> read_doubles(io::ByteReader& r, std::size_t n) {
    if (n > r.remaining() / 8) {
        throw FormatError("payload shorter than the manifest declares");
    }
    std::vector<double> v(n);
    for (auto& x : v) {
        x = r.f64();
    }
    return v;
}

}  // namespace

Checkpoint Checkpoint::snapshot(std::string id, std::string lineage, const ParamRegistry& params,
                                const OptimizerState& optimizer, const MaskSet* mask) {
    Checkpoint c;
    c.id = std::move(id);
    c.lineage = std::move(lineage);
    c.step = optimizer.step;
    c.params = params.clone();
    c.optimizer = optimizer;
    if (mask != nullptr) {
        MaskSet copy;
        for (const auto& e : mask->entries()) {
            copy.add(e.name, e.keep.clone());
        }
        c.mask = std::move(copy);
    }
    return c;
}

bool Checkpoint::bitwise_equal(const Checkpoint& other) const {
    if (id != other.id || lineage != other.lineage || step != other.step ||
        mask.has_value() != other.mask.has_value()) {
        return false;
    }
    if (mask && !mask->bitwise_equal(*other.mask)) {
        return false;
    }
    return params.bitwise_equal(other.params) && optimizer.bitwise_equal(other.optimizer);
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
    const auto entries = ckpt.params.entries();
    if (ckpt.optimizer.first.size() != entries.size() ||
        ckpt.optimizer.second.size() != entries.size()) {
        throw ContractError("checkpoint optimizer state does not match its parameters");
    }
    if (ckpt.mask && !respects_mask(ckpt.params, *ckpt.mask)) {
        throw ContractError("checkpoint params violate its mask");
    }
    io::ByteWriter w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    w.str(ckpt.id);
    w.str(ckpt.lineage);
    w.u64(ckpt.step);
    w.u32(static_cast<std::uint32_t>(entries.size()));
    for (const auto& e : entries) {
        w.str(e.name);
        w.u8(static_cast<std::uint8_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) {
            w.u64(d);
        }
        w.u8(e.prunable ? 1 : 0);
        w.u64(e.fan_in);
        w.u64(e.fan_out);
    }
    for (const auto& e : entries) {
        write_doubles(w, e.tensor.values());
    }
    const auto& opt = ckpt.optimizer;
    w.u64(opt.step);
    w.f64(opt.hp.beta1);
    w.f64(opt.hp.beta2);
    w.f64(opt.hp.eps);
    w.f64(opt.hp.base_lr);
    w.u64(opt.hp.warmup);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (opt.first[i].size() != entries[i].tensor.size()) {
            throw ContractError("moment buffer size mismatch for " + entries[i].name);
        }
        write_doubles(w, opt.first[i]);
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        if (opt.second[i].size() != entries[i].tensor.size()) {
            throw ContractError("moment buffer size mismatch for " + entries[i].name);
        }
        write_doubles(w, opt.second[i]);
    }
    w.u8(ckpt.mask ? 1 : 0);
    if (ckpt.mask) {
        for (const auto& m : ckpt.mask->entries()) {
            const auto keep = m.keep.values();
            std::vector<std::uint8_t> packed((keep.size() + 7) / 8, 0);
            for (std::size_t k = 0; k < keep.size(); ++k) {
                if (keep[k] == 1.0) {
                    packed[k / 8] |= static_cast<std::uint8_t>(1U << (k % 8));
                }
            }
            w.bytes(packed);
        }
    }
    w.seal();
    return w.data();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    io::ByteReader r(io::verify_sealed(bytes));
    const auto magic = r.bytes(4);
    if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
        throw FormatError("not a checkpoint file");
    }
    const auto version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.id = r.str();
    c.lineage = r.str();
    c.step = r.u64();
    const auto count = r.u32();

    struct Manifest {
        std::string name;
        Shape shape;
        std::uint64_t fan_in, fan_out;
        bool prunable;
    };
    std::vector<Manifest> manifest;
    for (std::uint32_t i = 0; i < count; ++i) {
        Manifest m;
        m.name = r.str();
        m.shape.resize(r.u8());
        for (auto& d : m.shape) {
            d = r.u64();
            if (d == 0) {
                throw FormatError("zero dimension in manifest entry " + m.name);
            }
        }
        m.prunable = r.u8() != 0;
        m.fan_in = r.u64();
        m.fan_out = r.u64();
        if (m.prunable != (m.shape.size() >= 2)) {
            throw FormatError("prunable flag inconsistent with rank for " + m.name);
        }
        manifest.push_back(std::move(m));
    }
    for (const auto& m : manifest) {
        auto values = read_doubles(r, shape_size(m.shape));
        try {
            c.params.add(m.name, Tensor(m.shape, std::move(values)), m.fan_in, m.fan_out);
        } catch (const ContractError& e) {
            throw FormatError(std::string("invalid manifest: ") + e.what());
        }
    }
    auto& opt = c.optimizer;
    opt.step = r.u64();
    opt.hp.beta1 = r.f64();
    opt.hp.beta2 = r.f64();
    opt.hp.eps = r.f64();
    opt.hp.base_lr = r.f64();
    opt.hp.warmup = r.u64();
    for (const auto& m : manifest) {
        opt.first.push_back(read_doubles(r, shape_size(m.shape)));
    }
    for (const auto& m : manifest) {
        opt.second.push_back(read_doubles(r, shape_size(m.shape)));
    }
    if (r.u8() != 0) {
        MaskSet mask;
        for (const auto& m : manifest) {
            if (!m.prunable) {
                continue;
            }
            const std::size_t n = shape_size(m.shape);
            const auto packed = r.bytes((n + 7) / 8);
            std::vector<double> keep(n);
            for (std::size_t k = 0; k < n; ++k) {
                keep[k] = (packed[k / 8] >> (k % 8)) & 1U ? 1.0 : 0.0;
            }
            mask.add(m.name, Tensor(m.shape, std::move(keep)));
        }
        if (!respects_mask(c.params, mask)) {
            throw FormatError("checkpoint params violate its mask");
        }
        c.mask = std::move(mask);
    }
    if (r.remaining() != 0) {
        throw FormatError("trailing bytes in checkpoint");
    }
    return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    io::write_file(path, encode_checkpoint(ckpt));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(io::read_file(path));
}

}  // namespace sparselab

#include "sparselab/binary_io.hpp"

#include <fstream>
#include <iterator>

#include "sparselab/errors.hpp"

namespace sparselab::io {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

void ByteWriter::str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
}

std::uint64_t ByteReader::get(std::size_t width) {
    if (width > remaining()) {
        throw FormatError("truncated data: need " + std::to_string(width) + " bytes at offset " +
                          std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) {
        v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    }
    pos_ += width;
    return v;
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
    if (n > remaining()) {
        throw FormatError("truncated data: need " + std::to_string(n) + " bytes at offset " +
                          std::to_string(pos_));
    }
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::string ByteReader::str() {
    const auto n = u32();
    const auto b = bytes(n);
    return std::string(b.begin(), b.end());
}

std::span<const std::uint8_t> verify_sealed(std::span<const std::uint8_t> data) {
    if (data.size() < 8) {
        throw FormatError("file too short for a checksum trailer");
    }
    const auto payload = data.first(data.size() - 8);
    ByteReader trailer(data.last(8));
    const auto stored = trailer.u64();
    if (stored != fnv1a64(payload)) {
        throw FormatError("checksum mismatch");
    }
    return payload;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open " + path.string());
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw FormatError("cannot write " + tmp.string());
        }
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw FormatError("write failed for " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

void write_text(const std::filesystem::path& path, std::string_view text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string read_text(const std::filesystem::path& path) {
    const auto bytes = read_file(path);
    return std::string(bytes.begin(), bytes.end());
}

}  // namespace sparselab::io

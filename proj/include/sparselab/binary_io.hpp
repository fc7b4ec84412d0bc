#pragma once

// Little-endian byte encoding shared by the checkpoint and sparse-model
// containers, plus the FNV-1a 64 checksum both use as their trailer.

#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sparselab::io {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
    /// Unsigned integer in `width` ∈ {1, 2, 4, 8} bytes.
    void uint(std::uint64_t v, std::size_t width) { put(v, width); }
    void bytes(std::span<const std::uint8_t> b) { buf_.insert(buf_.end(), b.begin(), b.end()); }
    void str(std::string_view s);

    const std::vector<std::uint8_t>& data() const { return buf_; }
    /// Appends the checksum of everything written so far.
    void seal() { u64(fnv1a64(buf_)); }

private:
    void put(std::uint64_t v, std::size_t width) {
        for (std::size_t i = 0; i < width; ++i) {
            buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked reader; every overrun throws FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    double f64() { return std::bit_cast<double>(get(8)); }
    std::uint64_t uint(std::size_t width) { return get(width); }
    std::span<const std::uint8_t> bytes(std::size_t n);
    std::string str();

    std::size_t remaining() const { return data_.size() - pos_; }

private:
    std::uint64_t get(std::size_t width);
    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

/// Verifies the trailing checksum; returns the payload without it.
std::span<const std::uint8_t> verify_sealed(std::span<const std::uint8_t> data);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
/// Writes via a temporary file and rename so readers never see partial files.
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

}  // namespace sparselab::io

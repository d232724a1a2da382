// Copyright (c) 2026, cxrelay authors
// SPDX-License-Identifier: Apache-2.0
//

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cxr {

using Bytes = std::vector<std::uint8_t>;

// Little-endian appender over a byte vector.
class ByteWriter {
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const std::uint8_t> b);
    void text(std::string_view s);
    // Unsigned LEB128.
    void varint(std::uint64_t v);

    std::size_t size() const { return out_.size(); }

private:
    Bytes& out_;
};

// Bounds-checked little-endian reader. Every underrun throws a format error
// carrying the byte offset.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::span<const std::uint8_t> bytes(std::size_t n);
    std::string text(std::size_t n);
    std::uint64_t varint();

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return in_.size() - pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

Bytes read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file, fsyncs, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

// Appends one line and fsyncs before returning.
void append_line_durable(const std::filesystem::path& path, std::string_view line);

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
    return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

}  // namespace cxr

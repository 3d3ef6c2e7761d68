#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace odrift::io {

// Little-endian byte sink used by every on-disk format ("ODNN", "ODGN",
// "ODRG", "ODMR", "ODRF").
class ByteWriter {
public:
    void magic(std::string_view four_cc);
    void u8(std::uint8_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f32(float v);
    void f64(double v);
    void bytes(std::span<const std::uint8_t> data);

    const std::vector<std::uint8_t>& buffer() const noexcept { return buf_; }
    std::vector<std::uint8_t> take() noexcept { return std::move(buf_); }

private:
    std::vector<std::uint8_t> buf_;
};

// Bounds-checked reader; every overrun throws FormatError.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

    void expect_magic(std::string_view four_cc);
    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    float f32();
    double f64();
    std::span<const std::uint8_t> bytes(std::size_t n);

    // Reads a count and rejects values that could not possibly fit in the
    // remaining payload given a minimum per-element size.
    std::uint64_t count(std::size_t min_element_bytes);

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }
    void expect_end() const;

private:
    void need(std::size_t n) const;

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> data);

}  // namespace odrift::io

#include "odrift/binary_io.hpp"

#include "odrift/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace odrift::io {

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& buf, T v) {
    static_assert(std::is_unsigned_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

template <typename T>
T get_le(const std::uint8_t* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        v |= static_cast<T>(p[i]) << (8 * i);
    }
    return v;
}

}  // namespace

void ByteWriter::magic(std::string_view four_cc) {
    if (four_cc.size() != 4) throw StructuralError("magic must be four bytes");
    buf_.insert(buf_.end(), four_cc.begin(), four_cc.end());
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }
void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::span<const std::uint8_t> data) {
    buf_.insert(buf_.end(), data.begin(), data.end());
}

void ByteReader::need(std::size_t n) const {
    if (remaining() < n) {
        throw FormatError("truncated payload at offset " + std::to_string(pos_));
    }
}

void ByteReader::expect_magic(std::string_view four_cc) {
    need(4);
    if (std::memcmp(data_.data() + pos_, four_cc.data(), 4) != 0) {
        throw FormatError("bad magic, expected \"" + std::string(four_cc) + "\"");
    }
    pos_ += 4;
}

std::uint8_t ByteReader::u8() {
    need(1);
    return data_[pos_++];
}

std::uint32_t ByteReader::u32() {
    need(4);
    auto v = get_le<std::uint32_t>(data_.data() + pos_);
    pos_ += 4;
    return v;
}

std::uint64_t ByteReader::u64() {
    need(8);
    auto v = get_le<std::uint64_t>(data_.data() + pos_);
    pos_ += 8;
    return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n) {
    need(n);
    auto out = data_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::uint64_t ByteReader::count(std::size_t min_element_bytes) {
    const auto n = u64();
    if (min_element_bytes > 0 && n > remaining() / min_element_bytes) {
        throw FormatError("element count " + std::to_string(n) + " exceeds payload");
    }
    return n;
}

void ByteReader::expect_end() const {
    if (remaining() != 0) {
        throw FormatError(std::to_string(remaining()) + " trailing bytes");
    }
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path, ErrorCategory::usage);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for " + path);
}

}  // namespace odrift::io

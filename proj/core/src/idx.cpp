#include "odrift/idx.hpp"

#include "odrift/binary_io.hpp"
#include "odrift/error.hpp"

namespace odrift::idx {

namespace {

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
    if (at + 4 > b.size()) throw FormatError("idx header truncated");
    return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) |
           std::uint32_t{b[at + 3]};
}

}  // namespace

Images read_images(const std::string& path) {
    const auto b = io::read_file(path);
    if (be32(b, 0) != 0x00000803) throw FormatError("'" + path + "' is not an idx3 ubyte image file");
    const auto n = be32(b, 4);
    Images img;
    img.rows = be32(b, 8);
    img.cols = be32(b, 12);
    const std::size_t px = img.rows * img.cols;
    if (px == 0 || b.size() != 16 + std::size_t{n} * px) throw FormatError("idx image payload size mismatch");
    img.pixels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& v = img.pixels[i];
        v.resize(px);
        for (std::size_t p = 0; p < px; ++p) v[p] = b[16 + i * px + p] / 255.0;
    }
    return img;
}

std::vector<std::uint8_t> read_labels(const std::string& path) {
    const auto b = io::read_file(path);
    if (be32(b, 0) != 0x00000801) throw FormatError("'" + path + "' is not an idx1 ubyte label file");
    const auto n = be32(b, 4);
    if (b.size() != 8 + std::size_t{n}) throw FormatError("idx label payload size mismatch");
    return {b.begin() + 8, b.end()};
}

}  // namespace odrift::idx

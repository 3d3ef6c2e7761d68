#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Big-endian idx files as used by the classic handwritten-digit set.
namespace odrift::idx {

struct Images {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::vector<double>> pixels;  // scaled to [0,1]
};

Images read_images(const std::string& path);
std::vector<std::uint8_t> read_labels(const std::string& path);

}  // namespace odrift::idx

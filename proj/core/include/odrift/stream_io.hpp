#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Stream files: newline-delimited JSON records and the binary "ODRF" layout
// (magic, u32 version, u32 dim, then f32 vectors until end of file).
namespace odrift::stream {

struct StreamItem {
    std::uint64_t index = 0;
    std::vector<double> x;
    std::optional<std::size_t> label;
    std::uint64_t available_at = 0;
    std::optional<std::size_t> source;  // ground truth, never shown to the pipeline
};

// {"id":..,"vector":[..],"label":..,"available_at":..,"source":..}
std::string to_ndjson_line(const StreamItem& item);
StreamItem parse_ndjson_line(const std::string& line);

std::vector<StreamItem> read_ndjson(const std::string& path);
void write_ndjson(const std::string& path, std::span<const StreamItem> items);

std::vector<std::uint8_t> encode_odrf(std::span<const StreamItem> items);
// Item indices start at `first_index`.
std::vector<StreamItem> decode_odrf(std::span<const std::uint8_t> bytes, std::uint64_t first_index = 0);

// Picks the format from the file contents (ODRF magic or text).
std::vector<StreamItem> read_stream(const std::string& path, std::uint64_t first_index = 0);

}  // namespace odrift::stream

#include "odrift/stream_io.hpp"

#include "odrift/binary_io.hpp"
#include "odrift/error.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace odrift::stream {

namespace {

constexpr std::uint32_t kOdrfVersion = 1;

using json = nlohmann::ordered_json;

std::uint64_t unsigned_field(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw FormatError(std::string("'") + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

}  // namespace

std::string to_ndjson_line(const StreamItem& item) {
    json j;
    j["id"] = item.index;
    j["vector"] = item.x;
    if (item.label) j["label"] = *item.label;
    if (item.label) j["available_at"] = item.available_at;
    if (item.source) j["source"] = *item.source;
    return j.dump();
}

StreamItem parse_ndjson_line(const std::string& line) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad stream record: ") + e.what());
    }
    try {
        StreamItem it;
        if (!j.is_object() || !j.contains("id") || !j.contains("vector")) {
            throw FormatError("stream record needs 'id' and 'vector'");
        }
        it.index = unsigned_field(j, "id");
        it.x = j.at("vector").get<std::vector<double>>();
        for (double v : it.x) {
            if (!std::isfinite(v)) throw FormatError("non-finite vector entry");
        }
        if (j.contains("label") && !j["label"].is_null()) it.label = unsigned_field(j, "label");
        it.available_at = j.contains("available_at") ? unsigned_field(j, "available_at") : it.index;
        if (j.contains("source") && !j["source"].is_null()) it.source = unsigned_field(j, "source");
        return it;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad stream record field: ") + e.what());
    }
}

std::vector<StreamItem> read_ndjson(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open stream '" + path + "'", ErrorCategory::usage);
    std::vector<StreamItem> items;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            items.push_back(parse_ndjson_line(line));
        } catch (const FormatError& e) {
            throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (items.size() > 1 && items.back().x.size() != items.front().x.size()) {
            throw FormatError("line " + std::to_string(lineno) + ": vector dimension changes");
        }
    }
    return items;
}

void write_ndjson(const std::string& path, std::span<const StreamItem> items) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write stream '" + path + "'");
    for (const auto& it : items) out << to_ndjson_line(it) << '\n';
}

std::vector<std::uint8_t> encode_odrf(std::span<const StreamItem> items) {
    io::ByteWriter w;
    w.magic("ODRF");
    w.u32(kOdrfVersion);
    const std::size_t dim = items.empty() ? 0 : items.front().x.size();
    w.u32(static_cast<std::uint32_t>(dim));
    for (const auto& it : items) {
        if (it.x.size() != dim) throw StructuralError("ODRF: vector dimension changes");
        for (double v : it.x) w.f32(static_cast<float>(v));
    }
    return w.take();
}

std::vector<StreamItem> decode_odrf(std::span<const std::uint8_t> bytes, std::uint64_t first_index) {
    io::ByteReader r(bytes);
    r.expect_magic("ODRF");
    const auto version = r.u32();
    if (version != kOdrfVersion) throw FormatError("unsupported ODRF version " + std::to_string(version));
    const auto dim = r.u32();
    if (dim == 0) {
        r.expect_end();
        return {};
    }
    const std::size_t stride = std::size_t{4} * dim;
    if (r.remaining() % stride != 0) throw FormatError("ODRF payload is not a whole number of vectors");
    std::vector<StreamItem> items(r.remaining() / stride);
    for (std::size_t i = 0; i < items.size(); ++i) {
        items[i].index = first_index + i;
        items[i].available_at = items[i].index;
        items[i].x.resize(dim);
        for (auto& v : items[i].x) {
            v = r.f32();
            if (!std::isfinite(v)) throw FormatError("non-finite ODRF entry");
        }
    }
    return items;
}

std::vector<StreamItem> read_stream(const std::string& path, std::uint64_t first_index) {
    const auto bytes = io::read_file(path);
    if (bytes.size() >= 4 && bytes[0] == 'O' && bytes[1] == 'D' && bytes[2] == 'R' && bytes[3] == 'F') {
        return decode_odrf(bytes, first_index);
    }
    return read_ndjson(path);
}

}  // namespace odrift::stream

#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace odrift::config {

// Flat key=value configuration. '#' starts a comment; blank lines are
// ignored; keys may not repeat.
class Config {
public:
    static Config parse(const std::string& text);
    static Config load(const std::string& path);

    bool has(const std::string& key) const;
    void set(const std::string& key, const std::string& value);

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<std::uint64_t> get_uint_list(const std::string& key, const std::vector<std::uint64_t>& fallback) const;

    // Throws ConfigError naming the first key outside `known`.
    void reject_unknown(const std::set<std::string>& known) const;

    const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

private:
    std::map<std::string, std::string> entries_;
};

}  // namespace odrift::config

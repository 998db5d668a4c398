#pragma once
// Flat key=value configuration with '#' comments. CLI flags override file
// values; every command embeds its fully resolved configuration (defaults
// included) into its outputs, so identical resolved configs reproduce
// byte-identical results.

#include <cstdint>
#include <map>
#include <string>

#include "casc/grid.hpp"

namespace casc {

class Config {
public:
    Config() = default;

    static Config from_file(const std::string& path);

    // Override (CLI flags win over file values).
    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    Index get_index(const std::string& key, Index fallback) const;
    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // '#'-prefixed sorted key=value lines covering every key read so far,
    // defaults included.
    std::string echo_header(const std::string& command) const;

private:
    std::map<std::string, std::string> values_;
    mutable std::map<std::string, std::string> resolved_;
};

std::string format_double(double value);

} // namespace casc

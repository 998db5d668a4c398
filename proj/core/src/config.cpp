#include "casc/config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace casc {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

} // namespace

std::string format_double(double value) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

Config Config::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    Config cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value");
        const std::string key = trim(stripped.substr(0, eq));
        if (key.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty key");
        cfg.values_[key] = trim(stripped.substr(eq + 1));
    }
    return cfg;
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    const std::string value = it == values_.end() ? fallback : it->second;
    resolved_[key] = value;
    return value;
}

double Config::get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        resolved_[key] = format_double(fallback);
        return fallback;
    }
    try {
        const double v = std::stod(it->second);
        resolved_[key] = format_double(v);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: " + key + " is not a number: " + it->second);
    }
}

Index Config::get_index(const std::string& key, Index fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        resolved_[key] = std::to_string(fallback);
        return fallback;
    }
    try {
        const long long v = std::stoll(it->second);
        resolved_[key] = std::to_string(v);
        return static_cast<Index>(v);
    } catch (const std::exception&) {
        throw std::runtime_error("config: " + key + " is not an integer: " + it->second);
    }
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        resolved_[key] = std::to_string(fallback);
        return fallback;
    }
    try {
        const unsigned long long v = std::stoull(it->second);
        resolved_[key] = std::to_string(v);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("config: " + key + " is not an unsigned integer: " + it->second);
    }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        resolved_[key] = fallback ? "true" : "false";
        return fallback;
    }
    const std::string& v = it->second;
    bool parsed;
    if (v == "true" || v == "1" || v == "yes")
        parsed = true;
    else if (v == "false" || v == "0" || v == "no")
        parsed = false;
    else
        throw std::runtime_error("config: " + key + " is not a boolean: " + v);
    resolved_[key] = parsed ? "true" : "false";
    return parsed;
}

std::string Config::echo_header(const std::string& command) const {
    std::string out = "# command=" + command + "\n";
    for (const auto& [key, value] : resolved_) out += "# " + key + "=" + value + "\n";
    return out;
}

} // namespace casc

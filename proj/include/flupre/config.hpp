#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "flupre/errors.hpp"

namespace flupre {

// Flat key=value configuration text: one pair per line, '#' starts a comment,
// blank lines ignored. Every key must be consumed by the reader; leftovers
// are reported as errors so typos never pass silently.
class ConfigReader {
public:
    ConfigReader() = default;

    static ConfigReader from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ParseError("cannot open config '" + path + "'");
        ConfigReader r;
        r.source_ = path;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ParseError(path + ":" + std::to_string(lineno) +
                                 ": expected key=value, got '" + t + "'");
            const std::string key = trim(t.substr(0, eq));
            if (key.empty())
                throw ParseError(path + ":" + std::to_string(lineno) + ": empty key");
            if (r.kv_.count(key))
                throw ParseError(path + ":" + std::to_string(lineno) + ": duplicate key '" +
                                 key + "'");
            r.kv_[key] = trim(t.substr(eq + 1));
        }
        return r;
    }

    static ConfigReader from_string(const std::string& text) {
        std::istringstream in(text);
        ConfigReader r;
        r.source_ = "<inline>";
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const std::string t = trim(strip_comment(line));
            if (t.empty()) continue;
            const auto eq = t.find('=');
            if (eq == std::string::npos)
                throw ParseError("<inline>:" + std::to_string(lineno) +
                                 ": expected key=value, got '" + t + "'");
            r.kv_[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
        }
        return r;
    }

    bool has(const std::string& key) const { return kv_.count(key) != 0; }

    // Overrides (e.g. from CLI flags) count as consumed immediately.
    void set(const std::string& key, const std::string& value) {
        kv_[key] = value;
        consumed_.insert(key);
    }

    std::string get_string(const std::string& key, const std::string& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        return it->second;
    }

    std::string require_string(const std::string& key) {
        auto it = kv_.find(key);
        if (it == kv_.end())
            throw ConfigError(source_ + ": missing required key '" + key + "'");
        consumed_.insert(key);
        return it->second;
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        return parse_size(key, it->second);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        return parse_u64(key, it->second);
    }

    double get_double(const std::string& key, double fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        return parse_double(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
        if (v == "false" || v == "0" || v == "off" || v == "no") return false;
        throw ConfigError(source_ + ": key '" + key + "': '" + v + "' is not a boolean");
    }

    std::vector<std::string> get_list(const std::string& key,
                                      const std::vector<std::string>& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        consumed_.insert(key);
        std::vector<std::string> out;
        std::string item;
        std::istringstream ss(it->second);
        while (std::getline(ss, item, ',')) {
            const std::string t = trim(item);
            if (!t.empty()) out.push_back(t);
        }
        if (out.empty())
            throw ConfigError(source_ + ": key '" + key + "': empty list");
        return out;
    }

    std::vector<std::size_t> get_size_list(const std::string& key,
                                           const std::vector<std::size_t>& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<std::size_t> out;
        for (const std::string& s : get_list(key, {})) out.push_back(parse_size(key, s));
        return out;
    }

    std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                            const std::vector<std::uint64_t>& fallback) {
        auto it = kv_.find(key);
        if (it == kv_.end()) return fallback;
        std::vector<std::uint64_t> out;
        for (const std::string& s : get_list(key, {})) out.push_back(parse_u64(key, s));
        return out;
    }

    // Every key must have been read (or overridden); unknown keys are errors.
    void finish() const {
        std::string unknown;
        for (const auto& [k, v] : kv_)
            if (!consumed_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty())
            throw ConfigError(source_ + ": unknown key(s): " + unknown);
    }

private:
    static std::string strip_comment(const std::string& s) {
        const auto h = s.find('#');
        return h == std::string::npos ? s : s.substr(0, h);
    }
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r");
        return s.substr(a, b - a + 1);
    }
    std::size_t parse_size(const std::string& key, const std::string& v) const {
        return static_cast<std::size_t>(parse_u64(key, v));
    }
    std::uint64_t parse_u64(const std::string& key, const std::string& v) const {
        try {
            // stoull accepts a sign and wraps negatives into huge values
            if (v.empty() || !std::isdigit(static_cast<unsigned char>(v[0])))
                throw std::invalid_argument(v);
            std::size_t used = 0;
            const unsigned long long x = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return static_cast<std::uint64_t>(x);
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': '" + v +
                              "' is not a non-negative integer");
        }
    }
    double parse_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            const double x = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return x;
        } catch (const std::exception&) {
            throw ConfigError(source_ + ": key '" + key + "': '" + v + "' is not a number");
        }
    }

    std::string source_ = "<empty>";
    std::map<std::string, std::string> kv_;
    std::set<std::string> consumed_;
};

} // namespace flupre

#pragma once
// Flat key=value configuration files.
//
//   # comment
//   key = value
//
// Keys are validated against each command's allowed set so typos fail loudly
// instead of silently falling back to defaults.

#include <wf/errors.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace wf {

class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open config file: " + path.string());
        KeyValueConfig cfg;
        cfg.origin_ = path.string();
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            std::string_view l = strip(line);
            if (l.empty() || l.front() == '#') continue;
            const std::size_t eq = l.find('=');
            if (eq == std::string_view::npos)
                throw ParseError(cfg.origin_ + ":" + std::to_string(line_no) +
                                 ": expected 'key = value'");
            const std::string key{strip(l.substr(0, eq))};
            const std::string value{strip(l.substr(eq + 1))};
            if (key.empty())
                throw ParseError(cfg.origin_ + ":" + std::to_string(line_no) + ": empty key");
            if (!cfg.values_.emplace(key, value).second)
                throw ParseError(cfg.origin_ + ":" + std::to_string(line_no) +
                                 ": duplicate key '" + key + "'");
        }
        return cfg;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    std::string require_string(const std::string& key) const {
        const auto it = values_.find(key);
        if (it == values_.end())
            throw ConfigError(origin_ + ": missing required key '" + key + "'");
        return it->second;
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_u64(key, it->second);
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_double(key, it->second);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        if (it->second == "true" || it->second == "1") return true;
        if (it->second == "false" || it->second == "0") return false;
        throw ConfigError(origin_ + ": key '" + key + "' must be true/false");
    }

    // Rejects any key outside the allowed set (sorted error message).
    void restrict_keys(const std::vector<std::string>& allowed) const {
        std::vector<std::string> bad;
        for (const auto& [key, _] : values_)
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
                bad.push_back(key);
        if (!bad.empty()) {
            std::string msg = origin_ + ": unknown key(s):";
            for (const std::string& k : bad) msg += " '" + k + "'";
            throw ConfigError(msg);
        }
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    const std::string& origin() const { return origin_; }

private:
    static std::string_view strip(std::string_view s) {
        while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r'))
            s.remove_prefix(1);
        while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
            s.remove_suffix(1);
        return s;
    }

    std::uint64_t parse_u64(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            if (v.empty() || v[0] == '-') throw std::invalid_argument("negative");
            const std::uint64_t r = std::stoull(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing");
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' must be a non-negative integer, got '" +
                              v + "'");
        }
    }

    double parse_double(const std::string& key, const std::string& v) const {
        try {
            std::size_t used = 0;
            const double r = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("trailing");
            return r;
        } catch (const std::exception&) {
            throw ConfigError(origin_ + ": key '" + key + "' must be a number, got '" + v + "'");
        }
    }

    std::string origin_ = "<config>";
    std::map<std::string, std::string> values_;
};

}  // namespace wf

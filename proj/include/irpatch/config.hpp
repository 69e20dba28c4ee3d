#pragma once

#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "errors.hpp"

namespace irpatch {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

} // namespace detail

// Flat key-value run configuration: one `key = value` per line, '#' starts a
// comment. Typed getters fall back to their documented default and record a
// note; unknown keys are rejected at the end so typos cannot silently
// misconfigure a run.
class ConfigReader {
public:
    ConfigReader() = default;

    static ConfigReader from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IoError("cannot open config: " + path);
        ConfigReader cfg;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            std::string t = detail::trim(line);
            if (t.empty()) continue;
            std::size_t eq = t.find('=');
            if (eq == std::string::npos)
                throw ParameterError(path + ":" + std::to_string(lineno) +
                                     ": expected 'key = value', got '" + t + "'");
            std::string key = detail::trim(t.substr(0, eq));
            std::string value = detail::trim(t.substr(eq + 1));
            if (key.empty())
                throw ParameterError(path + ":" + std::to_string(lineno) + ": empty key");
            if (cfg.values_.count(key))
                throw ParameterError("config key '" + key + "' appears more than once");
            cfg.values_[key] = value;
        }
        return cfg;
    }

    static ConfigReader from_values(std::map<std::string, std::string> values) {
        ConfigReader cfg;
        cfg.values_ = std::move(values);
        return cfg;
    }

    // Force a value (CLI flag overrides), marking the key as known.
    void override_value(const std::string& key, const std::string& value) {
        values_[key] = value;
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            note_default(key, fallback.empty() ? "(empty)" : fallback);
            return fallback;
        }
        return it->second;
    }

    double get_double(const std::string& key, double fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            note_default(key, std::to_string(fallback));
            return fallback;
        }
        try {
            std::size_t pos = 0;
            double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ParameterError("config key '" + key + "': bad numeric value '" +
                                 it->second + "'");
        }
    }

    long long get_int(const std::string& key, long long fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            note_default(key, std::to_string(fallback));
            return fallback;
        }
        try {
            std::size_t pos = 0;
            long long v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ParameterError("config key '" + key + "': bad integer value '" +
                                 it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool fallback) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) {
            note_default(key, fallback ? "true" : "false");
            return fallback;
        }
        const std::string& v = it->second;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ParameterError("config key '" + key + "': bad boolean value '" + v + "'");
    }

    // Rejects keys that no getter asked about.
    void finish() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key))
                throw ParameterError("unknown config key '" + key + "'");
    }

    const std::vector<std::string>& notes() const { return notes_; }

private:
    void note_default(const std::string& key, const std::string& value) {
        notes_.push_back("config key '" + key + "' not set; using default " + value);
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
    std::vector<std::string> notes_;
};

} // namespace irpatch

#pragma once

// Path-tracking JSON readers. Every section reader records the keys it
// consumed so that unknown keys can be rejected with their full path.

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

#include "rescontrol/error.hpp"

namespace rescontrol {

using Json = nlohmann::json;

class JsonReader {
public:
    JsonReader(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) {
            throw ConfigError("expected an object", path_.empty() ? "/" : path_);
        }
    }

    const std::string& path() const { return path_; }
    std::string child_path(const std::string& key) const { return path_ + "/" + key; }

    bool has(const std::string& key) const { return node_.contains(key); }

    const Json& raw(const std::string& key) {
        seen_.insert(key);
        if (!node_.contains(key)) {
            throw ConfigError("missing required key", child_path(key));
        }
        return node_.at(key);
    }

    JsonReader section(const std::string& key) { return JsonReader(raw(key), child_path(key)); }

    double number(const std::string& key) { return as_number(raw(key), child_path(key)); }

    double number_or(const std::string& key, double fallback) {
        return has(key) ? number(key) : (seen_.insert(key), fallback);
    }

    long integer(const std::string& key) { return as_integer(raw(key), child_path(key)); }

    long integer_or(const std::string& key, long fallback) {
        return has(key) ? integer(key) : (seen_.insert(key), fallback);
    }

    bool boolean_or(const std::string& key, bool fallback) {
        if (!has(key)) return fallback;
        const Json& v = raw(key);
        if (!v.is_boolean()) throw ConfigError("expected a boolean", child_path(key));
        return v.get<bool>();
    }

    std::string string(const std::string& key) {
        const Json& v = raw(key);
        if (!v.is_string()) throw ConfigError("expected a string", child_path(key));
        return v.get<std::string>();
    }

    std::string string_or(const std::string& key, const std::string& fallback) {
        return has(key) ? string(key) : (seen_.insert(key), fallback);
    }

    std::vector<double> numbers(const std::string& key) {
        return as_numbers(raw(key), child_path(key));
    }

    std::vector<std::vector<double>> matrix(const std::string& key) {
        const Json& v = raw(key);
        const std::string p = child_path(key);
        if (!v.is_array()) throw ConfigError("expected an array of arrays", p);
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(as_numbers(v[i], p + "/" + std::to_string(i)));
        }
        return out;
    }

    /// Throws on the first key that was never read.
    void finish() const {
        for (auto it = node_.begin(); it != node_.end(); ++it) {
            if (!seen_.count(it.key())) throw ConfigError("unknown key", child_path(it.key()));
        }
    }

    static double as_number(const Json& v, const std::string& path) {
        if (!v.is_number()) throw ConfigError("expected a number", path);
        return v.get<double>();
    }

    static long as_integer(const Json& v, const std::string& path) {
        if (!v.is_number_integer()) throw ConfigError("expected an integer", path);
        return v.get<long>();
    }

    static std::vector<double> as_numbers(const Json& v, const std::string& path) {
        if (!v.is_array()) throw ConfigError("expected an array of numbers", path);
        std::vector<double> out;
        out.reserve(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            out.push_back(as_number(v[i], path + "/" + std::to_string(i)));
        }
        return out;
    }

private:
    const Json& node_;
    std::string path_;
    std::set<std::string> seen_;
};

} // namespace rescontrol

#pragma once

#include "mflab/error.hpp"
#include "mflab/field.hpp"

#include <toml.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mflab {

namespace detail {

inline std::string quoted(const std::string& s) {
    std::ostringstream os;
    os << toml::value<std::string>(s);
    return os.str();
}

} // namespace detail

/// One documented key. Numeric keys carry inclusive bounds; string keys may
/// list their allowed values.
struct ConfigKey {
    enum class Type { Int, Real, String };
    std::string name;
    Type type = Type::Real;
    std::string default_value;
    double min = -std::numeric_limits<double>::infinity();
    double max = std::numeric_limits<double>::infinity();
    std::vector<std::string> choices;
    std::string doc;

    static ConfigKey integer(std::string name, long long def, double lo, double hi, std::string doc = {}) {
        return {std::move(name), Type::Int, std::to_string(def), lo, hi, {}, std::move(doc)};
    }
    static ConfigKey real(std::string name, double def, double lo, double hi, std::string doc = {}) {
        return {std::move(name), Type::Real, detail::fmt17(def), lo, hi, {}, std::move(doc)};
    }
    static ConfigKey string(std::string name, std::string def, std::vector<std::string> choices = {},
                            std::string doc = {}) {
        return {std::move(name),
                Type::String,
                std::move(def),
                -std::numeric_limits<double>::infinity(),
                std::numeric_limits<double>::infinity(),
                std::move(choices),
                std::move(doc)};
    }
};

/// Keys are written `section.key`; top-level keys have no prefix.
using ConfigSchema = std::vector<ConfigKey>;

/// Parsed configuration with every schema key present (defaults filled in).
class Config {
public:
    Config() = default;
    Config(ConfigSchema schema, std::map<std::string, std::string> values, std::vector<std::string> explicit_keys)
        : schema_(std::move(schema)), values_(std::move(values)), explicit_(std::move(explicit_keys)) {}

    const std::string& str(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw Error(ErrorCode::Config, "unknown key '" + key + "'");
        return it->second;
    }
    double real(const std::string& key) const { return std::stod(str(key)); }
    long long integer(const std::string& key) const { return std::stoll(str(key)); }
    bool is_explicit(const std::string& key) const {
        return std::find(explicit_.begin(), explicit_.end(), key) != explicit_.end();
    }
    const std::map<std::string, std::string>& values() const { return values_; }

    /// Canonical TOML: one dotted `key = value` line per schema key in sorted order.
    std::string canonical() const {
        std::string s;
        for (const auto& [k, v] : values_) s += k + " = " + (is_string(k) ? detail::quoted(v) : v) + "\n";
        return s;
    }

private:
    bool is_string(const std::string& key) const {
        for (const auto& k : schema_)
            if (k.name == key) return k.type == ConfigKey::Type::String;
        return false;
    }

    ConfigSchema schema_;
    std::map<std::string, std::string> values_;
    std::vector<std::string> explicit_;
};

namespace detail {

inline std::string config_error(long line, const std::string& msg) {
    return line > 0 ? "line " + std::to_string(line) + ": " + msg : msg;
}

inline std::string bounds_text(const ConfigKey& k) {
    auto f = [&](double x) {
        if (std::isinf(x)) return std::string(x < 0 ? "-inf" : "inf");
        if (k.type == ConfigKey::Type::Int) return std::to_string(static_cast<long long>(x));
        char buf[32];
        const auto r = std::to_chars(buf, buf + sizeof buf, x);
        return std::string(buf, r.ptr);
    };
    return "[" + f(k.min) + ", " + f(k.max) + "]";
}

/// Normalized value text; throws on type or range errors.
inline std::string check_string(const ConfigKey& k, const std::string& v, long line) {
    if (!k.choices.empty() && std::find(k.choices.begin(), k.choices.end(), v) == k.choices.end()) {
        std::string list;
        for (const auto& c : k.choices) list += (list.empty() ? "" : ", ") + c;
        throw Error(ErrorCode::Config,
                    config_error(line, "key '" + k.name + "' must be one of {" + list + "}, got '" + v + "'"));
    }
    return v;
}

inline void check_range(const ConfigKey& k, double x, const std::string& text, long line) {
    if (x < k.min || x > k.max)
        throw Error(ErrorCode::Config,
                    config_error(line, "key '" + k.name + "' = " + text + " is out of range " + bounds_text(k)));
}

inline std::string check_node(const ConfigKey& k, const toml::node& n, long line) {
    std::ostringstream shown;
    n.visit([&](const auto& v) { shown << v; });
    switch (k.type) {
    case ConfigKey::Type::String:
        if (!n.is_string())
            throw Error(ErrorCode::Config, config_error(line, "key '" + k.name + "' expects a string, got " + shown.str()));
        return check_string(k, *n.value<std::string>(), line);
    case ConfigKey::Type::Int: {
        if (!n.is_integer())
            throw Error(ErrorCode::Config, config_error(line, "key '" + k.name + "' expects an integer, got " + shown.str()));
        const long long v = *n.value<long long>();
        check_range(k, static_cast<double>(v), std::to_string(v), line);
        return std::to_string(v);
    }
    case ConfigKey::Type::Real: {
        const auto v = n.is_number() ? n.value<double>() : std::nullopt;
        if (!v || !std::isfinite(*v))
            throw Error(ErrorCode::Config, config_error(line, "key '" + k.name + "' expects a finite number, got " + shown.str()));
        check_range(k, *v, shown.str(), line);
        return fmt17(*v);
    }
    }
    return {};
}

inline std::string check_default(const ConfigKey& k) {
    if (k.type == ConfigKey::Type::String) return check_string(k, k.default_value, 0);
    if (k.type == ConfigKey::Type::Int) {
        const long long v = std::stoll(k.default_value);
        check_range(k, static_cast<double>(v), k.default_value, 0);
        return std::to_string(v);
    }
    const double v = std::stod(k.default_value);
    check_range(k, v, k.default_value, 0);
    return fmt17(v);
}

} // namespace detail

/// Parses a TOML document against the schema. Unknown keys, wrong types and
/// out-of-range values are errors; missing keys take their defaults.
inline Config parse_config(const std::string& text, const ConfigSchema& schema) {
    std::map<std::string, const ConfigKey*> by_name;
    std::map<std::string, std::string> values;
    for (const auto& k : schema) {
        by_name[k.name] = &k;
        values[k.name] = detail::check_default(k);
    }
    toml::table doc;
    try {
        doc = toml::parse(text);
    } catch (const toml::parse_error& e) {
        throw Error(ErrorCode::Config, detail::config_error(static_cast<long>(e.source().begin.line),
                                                            std::string(e.description())));
    }
    std::vector<std::string> explicit_keys;
    std::function<void(const toml::table&, const std::string&)> walk = [&](const toml::table& t, const std::string& prefix) {
        for (const auto& [key, node] : t) {
            const std::string full = prefix.empty() ? std::string(key.str()) : prefix + "." + std::string(key.str());
            const long line = static_cast<long>(node.source().begin.line);
            auto it = by_name.find(full);
            if (it == by_name.end()) {
                if (const auto* sub = node.as_table()) {
                    walk(*sub, full);
                    continue;
                }
                throw Error(ErrorCode::Config, detail::config_error(line, "unknown key '" + full + "'"));
            }
            values[full] = detail::check_node(*it->second, node, line);
            explicit_keys.push_back(full);
        }
    };
    walk(doc, "");
    std::sort(explicit_keys.begin(), explicit_keys.end());
    return Config(schema, std::move(values), std::move(explicit_keys));
}

inline Config load_config(const std::string& path, const ConfigSchema& schema) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorCode::Io, "cannot open config " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_config(ss.str(), schema);
}

/// Documented keys as a commented config file.
inline std::string config_template(const ConfigSchema& schema) {
    std::string out, section = "\x01";
    for (const auto& k : schema) {
        const auto dot = k.name.find('.');
        const std::string sec = dot == std::string::npos ? "" : k.name.substr(0, dot);
        const std::string key = dot == std::string::npos ? k.name : k.name.substr(dot + 1);
        if (sec != section) {
            if (!sec.empty()) out += "\n[" + sec + "]\n";
            section = sec;
        }
        if (!k.doc.empty()) out += "# " + k.doc + "\n";
        out += key + " = " + (k.type == ConfigKey::Type::String ? detail::quoted(k.default_value) : k.default_value) + "\n";
    }
    return out;
}

} // namespace mflab

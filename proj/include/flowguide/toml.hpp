#pragma once

#include "flowguide/common.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace flowguide {

// Minimal strict TOML subset: tables ([a.b]), bare/dotted keys, strings,
// integers, floats, booleans, and (nested, possibly multi-line) arrays.
// No inline tables, dates, or multi-line strings. Duplicate keys are errors;
// unknown-key rejection happens in the schema layer on top of this tree.
class TomlValue {
public:
    enum class Type { String, Int, Float, Bool, Array, Table };
    using Entry = std::pair<std::string, TomlValue>;

    TomlValue() : type_(Type::Table) {}
    static TomlValue string(std::string s) { TomlValue v; v.type_ = Type::String; v.str_ = std::move(s); return v; }
    static TomlValue integer(std::int64_t i) { TomlValue v; v.type_ = Type::Int; v.int_ = i; return v; }
    static TomlValue real(double d) { TomlValue v; v.type_ = Type::Float; v.float_ = d; return v; }
    static TomlValue boolean(bool b) { TomlValue v; v.type_ = Type::Bool; v.bool_ = b; return v; }
    static TomlValue array() { TomlValue v; v.type_ = Type::Array; return v; }
    static TomlValue table() { return TomlValue(); }

    Type type() const { return type_; }
    bool is_table() const { return type_ == Type::Table; }
    bool is_array() const { return type_ == Type::Array; }
    bool is_number() const { return type_ == Type::Int || type_ == Type::Float; }

    const std::string& as_string() const {
        require(Type::String, "string");
        return str_;
    }
    std::int64_t as_int() const {
        require(Type::Int, "integer");
        return int_;
    }
    double as_double() const {
        if (type_ == Type::Int) return static_cast<double>(int_);
        require(Type::Float, "float");
        return float_;
    }
    bool as_bool() const {
        require(Type::Bool, "boolean");
        return bool_;
    }
    const std::vector<TomlValue>& items() const {
        require(Type::Array, "array");
        return arr_;
    }
    std::vector<TomlValue>& items() {
        require(Type::Array, "array");
        return arr_;
    }
    const std::vector<Entry>& entries() const {
        require(Type::Table, "table");
        return tbl_;
    }

    const TomlValue* find(const std::string& key) const {
        require(Type::Table, "table");
        for (const auto& [k, v] : tbl_)
            if (k == key) return &v;
        return nullptr;
    }

    TomlValue& insert(const std::string& key, TomlValue v) {
        require(Type::Table, "table");
        for (auto& [k, existing] : tbl_)
            if (k == key) throw ConfigError("duplicate key: " + key);
        tbl_.emplace_back(key, std::move(v));
        return tbl_.back().second;
    }

    // Creates intermediate tables; overwrites scalar leaves (used by --set).
    void set_path(const std::vector<std::string>& path, TomlValue v) {
        require(Type::Table, "table");
        if (path.empty()) throw ConfigError("empty key path");
        TomlValue* node = this;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) {
            TomlValue* next = nullptr;
            for (auto& [k, child] : node->tbl_)
                if (k == path[i]) next = &child;
            if (!next) next = &node->insert(path[i], TomlValue::table());
            if (!next->is_table())
                throw ConfigError("key path crosses a non-table: " + path[i]);
            node = next;
        }
        for (auto& [k, child] : node->tbl_) {
            if (k == path.back()) {
                child = std::move(v);
                return;
            }
        }
        node->insert(path.back(), std::move(v));
    }

private:
    void require(Type t, const char* what) const {
        if (type_ != t) throw ConfigError(std::string("TOML value is not a ") + what);
    }

    Type type_;
    std::string str_;
    std::int64_t int_ = 0;
    double float_ = 0.0;
    bool bool_ = false;
    std::vector<TomlValue> arr_;
    std::vector<Entry> tbl_;
};

namespace toml_detail {

inline std::string strip(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

// Remove a trailing comment, respecting quoted strings.
inline std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (c == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline bool valid_bare_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') return false;
    return true;
}

inline std::vector<std::string> split_key_path(const std::string& dotted) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : dotted) {
        if (c == '.') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    parts.push_back(cur);
    for (auto& p : parts) {
        p = strip(p);
        if (!valid_bare_key(p)) throw ConfigError("bad key: '" + dotted + "'");
    }
    return parts;
}

class ValueParser {
public:
    explicit ValueParser(const std::string& text) : s_(text) {}

    TomlValue parse() {
        TomlValue v = parse_value();
        skip_ws();
        if (pos_ != s_.size()) throw ConfigError("trailing characters after value: " + s_);
        return v;
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\n' ||
                                    s_[pos_] == '\r'))
            ++pos_;
    }

    TomlValue parse_value() {
        skip_ws();
        if (pos_ >= s_.size()) throw ConfigError("missing value");
        const char c = s_[pos_];
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        return parse_scalar();
    }

    TomlValue parse_string() {
        ++pos_;  // opening quote
        std::string out;
        while (pos_ < s_.size() && s_[pos_] != '"') {
            if (s_[pos_] == '\\' && pos_ + 1 < s_.size()) {
                ++pos_;
                switch (s_[pos_]) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: throw ConfigError("unsupported escape in string");
                }
            } else {
                out += s_[pos_];
            }
            ++pos_;
        }
        if (pos_ >= s_.size()) throw ConfigError("unterminated string");
        ++pos_;  // closing quote
        return TomlValue::string(std::move(out));
    }

    TomlValue parse_array() {
        ++pos_;  // '['
        TomlValue arr = TomlValue::array();
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
            ++pos_;
            return arr;
        }
        while (true) {
            arr.items().push_back(parse_value());
            skip_ws();
            if (pos_ >= s_.size()) throw ConfigError("unterminated array");
            if (s_[pos_] == ',') {
                ++pos_;
                skip_ws();
                if (pos_ < s_.size() && s_[pos_] == ']') {  // trailing comma
                    ++pos_;
                    return arr;
                }
                continue;
            }
            if (s_[pos_] == ']') {
                ++pos_;
                return arr;
            }
            throw ConfigError("expected ',' or ']' in array");
        }
    }

    TomlValue parse_scalar() {
        std::size_t end = pos_;
        while (end < s_.size() && s_[end] != ',' && s_[end] != ']' && s_[end] != ' ' &&
               s_[end] != '\t' && s_[end] != '\n' && s_[end] != '\r')
            ++end;
        const std::string tok = s_.substr(pos_, end - pos_);
        pos_ = end;
        if (tok == "true") return TomlValue::boolean(true);
        if (tok == "false") return TomlValue::boolean(false);
        // integer?
        bool plain_int = !tok.empty();
        for (std::size_t i = 0; i < tok.size(); ++i) {
            const char c = tok[i];
            if (i == 0 && (c == '+' || c == '-')) continue;
            if (!std::isdigit(static_cast<unsigned char>(c))) plain_int = false;
        }
        if (plain_int && tok != "+" && tok != "-") {
            errno = 0;
            char* endp = nullptr;
            const long long v = std::strtoll(tok.c_str(), &endp, 10);
            if (errno == 0 && endp && *endp == '\0') return TomlValue::integer(v);
        }
        char* endp = nullptr;
        const double d = std::strtod(tok.c_str(), &endp);
        if (endp && *endp == '\0' && endp != tok.c_str() && std::isfinite(d))
            return TomlValue::real(d);
        throw ConfigError("cannot parse value: '" + tok + "'");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace toml_detail

inline TomlValue parse_toml(const std::string& text) {
    TomlValue root = TomlValue::table();
    std::vector<std::string> section;  // current table path

    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = toml_detail::strip(toml_detail::strip_comment(raw));
        if (line.empty()) continue;
        try {
            if (line.front() == '[') {
                if (line.back() != ']') throw ConfigError("malformed table header");
                section = toml_detail::split_key_path(line.substr(1, line.size() - 2));
                // create the table eagerly so empty sections still validate
                TomlValue* node = &root;
                for (const auto& part : section) {
                    const TomlValue* existing = node->find(part);
                    if (!existing) {
                        node = &node->insert(part, TomlValue::table());
                    } else if (existing->is_table()) {
                        node = const_cast<TomlValue*>(existing);
                    } else {
                        throw ConfigError("table header collides with a value: " + part);
                    }
                }
                continue;
            }
            const std::size_t eq = line.find('=');
            if (eq == std::string::npos) throw ConfigError("expected 'key = value'");
            auto path = toml_detail::split_key_path(toml_detail::strip(line.substr(0, eq)));
            std::string value_text = toml_detail::strip(line.substr(eq + 1));
            // multi-line arrays: keep appending lines until brackets balance
            auto bracket_balance = [](const std::string& s) {
                int depth = 0;
                bool in_string = false;
                for (std::size_t i = 0; i < s.size(); ++i) {
                    if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
                    if (in_string) continue;
                    if (s[i] == '[') ++depth;
                    if (s[i] == ']') --depth;
                }
                return depth;
            };
            while (bracket_balance(value_text) > 0) {
                if (!std::getline(in, raw)) throw ConfigError("unterminated array");
                ++line_no;
                value_text += "\n" + toml_detail::strip_comment(raw);
            }
            TomlValue value = toml_detail::ValueParser(value_text).parse();

            std::vector<std::string> full = section;
            full.insert(full.end(), path.begin(), path.end());
            // insert, rejecting duplicates along the way
            TomlValue* node = &root;
            for (std::size_t i = 0; i + 1 < full.size(); ++i) {
                const TomlValue* existing = node->find(full[i]);
                if (!existing) {
                    node = &node->insert(full[i], TomlValue::table());
                } else if (existing->is_table()) {
                    node = const_cast<TomlValue*>(existing);
                } else {
                    throw ConfigError("key path crosses a value: " + full[i]);
                }
            }
            node->insert(full.back(), std::move(value));
        } catch (const ConfigError& e) {
            std::ostringstream msg;
            msg << "TOML line " << line_no << ": " << e.what();
            throw ConfigError(msg.str());
        }
    }
    return root;
}

inline TomlValue parse_toml_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_toml(ss.str());
}

// Parse a --set override value with the same scalar grammar as the file.
inline TomlValue parse_toml_scalar(const std::string& text) {
    return toml_detail::ValueParser(toml_detail::strip(text)).parse();
}

}  // namespace flowguide

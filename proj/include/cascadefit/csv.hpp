#pragma once

#include <charconv>
#include <cstddef>
#include <istream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"

namespace cascadefit::csv {

struct Record {
    std::size_t line = 0; // 1-based line where the record starts
    std::vector<std::string> fields;
};

// RFC-4180: quoted fields, "" escapes, embedded newlines, CRLF or LF
inline std::vector<Record> read(std::istream& in) {
    if (!in) throw InputError("unreadable stream");
    std::string data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (in.bad()) throw InputError("unreadable stream");
    if (data.size() >= 3 && data.compare(0, 3, "\xEF\xBB\xBF") == 0) data.erase(0, 3);

    std::vector<Record> out;
    std::size_t line = 1, i = 0, n = data.size();
    while (i < n) {
        Record rec;
        rec.line = line;
        std::string field;
        bool done = false;
        while (!done) {
            field.clear();
            if (i < n && data[i] == '"') {
                ++i;
                for (;;) {
                    if (i >= n) throw InputError("unterminated quoted field starting on line " + std::to_string(rec.line));
                    char c = data[i++];
                    if (c == '"') {
                        if (i < n && data[i] == '"') {
                            field += '"';
                            ++i;
                        } else {
                            break;
                        }
                    } else {
                        if (c == '\n') ++line;
                        field += c;
                    }
                }
                // tolerate junk between closing quote and delimiter by appending it
                while (i < n && data[i] != ',' && data[i] != '\n' && data[i] != '\r') field += data[i++];
            } else {
                while (i < n && data[i] != ',' && data[i] != '\n' && data[i] != '\r') field += data[i++];
            }
            rec.fields.push_back(field);
            if (i >= n) {
                done = true;
            } else if (data[i] == ',') {
                ++i;
            } else {
                if (data[i] == '\r') ++i;
                if (i < n && data[i] == '\n') ++i;
                ++line;
                done = true;
            }
        }
        bool blank = rec.fields.size() == 1 && rec.fields[0].empty();
        if (!blank) out.push_back(std::move(rec));
    }
    return out;
}

inline std::string escape(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline void write_row(std::ostream& os, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) os << ',';
        os << escape(fields[i]);
    }
    os << '\n';
}

// shortest round-trip representation
inline std::string num(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline std::string fixed(double x, int digits) {
    char buf[128];
    auto r = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::fixed, digits);
    return std::string(buf, r.ptr);
}

inline std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

inline std::optional<long long> parse_int(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    long long v;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

} // namespace cascadefit::csv

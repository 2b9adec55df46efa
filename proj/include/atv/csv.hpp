#pragma once

#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "atv/errors.hpp"
#include "atv/sample.hpp"

namespace atv {

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline bool parse_number(const std::string& field, double& out) {
    const std::string t = trim(field);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size() && std::isfinite(out);
}

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= line.size()) {
        const std::size_t comma = std::min(line.find(',', pos), line.size());
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

}  // namespace detail

// Reads a sample from CSV: one row per observation, d numeric columns,
// decimal point '.', no thousands separators. A non-numeric first row is
// treated as a header and skipped.
inline Sample read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<double> data;
    std::size_t cols = 0, row_no = 0;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        ++row_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_fields(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (std::size_t j = 0; j < fields.size(); ++j)
            numeric = numeric && detail::parse_number(fields[j], row[j]);
        if (first) {
            first = false;
            if (!numeric) continue;  // header row
            cols = fields.size();
        } else if (!numeric) {
            throw DataError(path + ": non-numeric value on line " + std::to_string(row_no));
        }
        if (cols == 0) cols = fields.size();
        if (fields.size() != cols)
            throw DataError(path + ": expected " + std::to_string(cols) + " columns on line " +
                            std::to_string(row_no));
        data.insert(data.end(), row.begin(), row.end());
    }
    if (data.empty()) throw DataError(path + ": no data rows");
    if (cols < 2) throw DataError(path + ": need at least 2 numeric columns");
    const std::size_t rows = data.size() / cols;
    return Sample(rows, cols, std::move(data));
}

// Writes a sample as CSV with 17 significant digits, enough for an exact
// double round trip.
inline void write_csv(const Sample& s, std::ostream& out) {
    char buf[64];
    for (std::size_t i = 0; i < s.rows(); ++i) {
        for (std::size_t j = 0; j < s.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", s(i, j));
            if (j > 0) out << ',';
            out << buf;
        }
        out << '\n';
    }
}

inline void write_csv(const Sample& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    write_csv(s, out);
    out.flush();
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace atv

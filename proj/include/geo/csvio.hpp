#pragma once

// Minimal strict CSV io. Our schemas never need quoting: plain comma split,
// empty field = missing value.

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "geo/common.hpp"

namespace geo {

struct CsvError {
    std::string file;
    int line = 0;  // 1-based, 0 = file-level
    std::string message;
};

inline std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    if (!out.empty() && !out.back().empty() && out.back().back() == '\r') out.back().pop_back();
    return out;
}

// Missing (empty) fields parse to NaN. Malformed text returns false.
inline bool csv_parse_double(const std::string& s, double& out) {
    if (s.empty()) {
        out = kMissing;
        return true;
    }
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

inline bool csv_parse_long(const std::string& s, long& out) {
    if (s.empty()) return false;
    const char* b = s.data();
    const char* e = b + s.size();
    auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

class CsvReader {
public:
    explicit CsvReader(const std::string& path) : path_(path), in_(path) {}

    bool ok() const { return bool(in_); }
    const std::string& path() const { return path_; }
    int line_no() const { return line_no_; }

    // false at EOF
    bool next(std::vector<std::string>& fields) {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.empty() || line == "\r") continue;
            fields = csv_split(line);
            return true;
        }
        return false;
    }

private:
    std::string path_;
    std::ifstream in_;
    int line_no_ = 0;
};

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw std::runtime_error("cannot open for write: " + path);
    }

    void header(const std::vector<std::string>& cols) { row_strings(cols); }

    void row_strings(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

    // doubles rendered shortest round-trip; NaN -> empty field
    void field(double v) {
        cells_.push_back(is_missing(v) ? std::string() : fmt_double(v));
    }
    void field(long v) { cells_.push_back(std::to_string(v)); }
    void field(int v) { cells_.push_back(std::to_string(v)); }
    void field(const std::string& v) { cells_.push_back(v); }
    void end_row() {
        row_strings(cells_);
        cells_.clear();
    }

private:
    std::ofstream out_;
    std::vector<std::string> cells_;
};

}  // namespace geo

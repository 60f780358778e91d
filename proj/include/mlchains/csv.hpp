#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace mlchains {

// Minimal CSV handling for the toolkit's file formats: comma separators,
// no quoting, UTF-8, LF line endings. Numbers are written with the shortest
// representation that round-trips exactly.

inline std::vector<std::string> split(std::string_view line, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            parts.emplace_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return parts;
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, const std::string& context) {
    double v = 0.0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw std::runtime_error(context + ": not a number: '" + std::string(text) + "'");
    return v;
}

inline long parse_long(std::string_view text, const std::string& context) {
    long v = 0;
    const char* begin = text.data();
    const char* end = begin + text.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw std::runtime_error(context + ": not an integer: '" + std::string(text) + "'");
    return v;
}

// Reads all lines, tolerating a missing trailing newline. CR characters are
// rejected so files stay LF-only as the formats require.
inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            throw std::runtime_error(path + ": CRLF line endings are not supported");
        lines.push_back(line);
    }
    return lines;
}

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw std::runtime_error("cannot open file for writing: " + path);
        path_ = path;
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
    }

    void raw_line(const std::string& line) { out_ << line << '\n'; }

    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("write failed: " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

}  // namespace mlchains

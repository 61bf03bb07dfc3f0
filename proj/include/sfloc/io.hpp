// SPDX-License-Identifier: Apache-2.0
#pragma once

// Small text I/O helpers shared by the CSV writers and the checkpoint format.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sfloc::io {

/// Shortest round-trip decimal representation; locale-independent.
inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, end);
}

/// Fixed-precision variant for human-facing summary tables.
inline std::string format_fixed(double v, int precision) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, precision);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, end);
}

inline bool parse_double(std::string_view s, double& out) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
        s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

/// Writes to `<path>.partial` and renames onto `path` on commit(), so the
/// final path never holds a truncated file. Uncommitted files are removed.
class StagedFile {
public:
    explicit StagedFile(std::filesystem::path path)
        : path_(std::move(path)), staging_(path_.string() + ".partial") {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        out_.open(staging_, std::ios::binary | std::ios::trunc);
        if (!out_) throw std::runtime_error("cannot open " + staging_.string() + " for writing");
    }
    StagedFile(const StagedFile&) = delete;
    StagedFile& operator=(const StagedFile&) = delete;
    ~StagedFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(staging_, ec);
        }
    }

    std::ostream& stream() { return out_; }

    void commit() {
        out_.flush();
        if (!out_) throw std::runtime_error("write failed for " + staging_.string());
        out_.close();
        std::filesystem::rename(staging_, path_);
        committed_ = true;
    }

private:
    std::filesystem::path path_;
    std::filesystem::path staging_;
    std::ofstream out_;
    bool committed_ = false;
};

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
    StagedFile f(path);
    f.stream() << content;
    f.commit();
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// 64-bit FNV-1a; used for artifact hashes in run manifests.
inline std::uint64_t fnv1a(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace sfloc::io

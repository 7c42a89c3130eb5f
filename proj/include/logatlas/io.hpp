#pragma once

// File plumbing: line readers for plain and gzip text, JSONL helpers, and
// SHA-256 digests for provenance records.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <zlib.h>

#include <json.hpp>

namespace logatlas {

// Reads one line at a time; `.gz` suffix selects zlib transparently.
// Line numbers are 1-based and carried into error messages by callers.
class LineReader {
public:
    explicit LineReader(const std::filesystem::path& path) : path_(path.string()) {
        if (path_.size() > 3 && path_.compare(path_.size() - 3, 3, ".gz") == 0) {
            gz_ = gzopen(path_.c_str(), "rb");
            if (!gz_) throw std::runtime_error("cannot open " + path_);
        } else {
            stream_.open(path_);
            if (!stream_) throw std::runtime_error("cannot open " + path_);
        }
    }

    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    ~LineReader() {
        if (gz_) gzclose(gz_);
    }

    std::optional<std::string> next() {
        ++line_no_;
        if (gz_) return next_gz();
        std::string line;
        if (!std::getline(stream_, line)) {
            if (stream_.bad())
                throw std::runtime_error(path_ + ": read error at line " +
                                         std::to_string(line_no_));
            return std::nullopt;
        }
        strip_cr(line);
        return line;
    }

    std::int64_t line_no() const { return line_no_; }
    const std::string& path() const { return path_; }

private:
    std::optional<std::string> next_gz() {
        std::string line;
        char buf[4096];
        bool got_any = false;
        while (gzgets(gz_, buf, sizeof(buf))) {
            got_any = true;
            line += buf;
            if (!line.empty() && line.back() == '\n') {
                line.pop_back();
                strip_cr(line);
                return line;
            }
        }
        int errnum = 0;
        gzerror(gz_, &errnum);
        if (errnum != Z_OK && errnum != Z_STREAM_END)
            throw std::runtime_error(path_ + ": gzip read error at line " +
                                     std::to_string(line_no_));
        if (got_any) return line;  // last line without newline
        return std::nullopt;
    }

    static void strip_cr(std::string& line) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
    }

    std::string path_;
    std::ifstream stream_;
    gzFile gz_ = nullptr;
    std::int64_t line_no_ = 0;
};

template <typename T>
std::vector<T> read_jsonl(const std::filesystem::path& path) {
    LineReader reader(path);
    std::vector<T> out;
    while (auto line = reader.next()) {
        if (line->empty()) continue;
        try {
            out.push_back(nlohmann::json::parse(*line).get<T>());
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" +
                                     std::to_string(reader.line_no()) +
                                     ": schema mismatch: " + e.what());
        }
    }
    return out;
}

template <typename T>
void write_jsonl(const std::filesystem::path& path, const std::vector<T>& items) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const T& item : items) out << nlohmann::json(item).dump() << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return std::string{std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>()};
}

inline std::string sha256_hex(const void* data, std::size_t len) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int dlen = 0;
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx.get(), data, len) != 1 ||
        EVP_DigestFinal_ex(ctx.get(), digest, &dlen) != 1)
        throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(dlen * 2);
    for (unsigned int i = 0; i < dlen; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

inline std::string sha256_file_hex(const std::filesystem::path& path) {
    const std::string content = read_text(path);
    return sha256_hex(content.data(), content.size());
}

}  // namespace logatlas

#pragma once

// Deterministic privacy transforms. IPv4 addresses go through a keyed
// prefix-preserving bit-flip construction (the tcpdpriv/Crypto-PAn scheme:
// bit i of the output is bit i of the input XORed with a PRF of the first i
// input bits). RFC 1918 blocks are pinned so private inputs stay private.
// Usernames map to a keyed pick from a synthetic dictionary plus a keyed
// numeric suffix. Both maps are pure functions of (value, key); AnonKey is
// immutable and the ops allocate their own cipher state, so everything here
// parallelizes trivially.

#include <array>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>
#include <openssl/hmac.h>

#include "logatlas/core.hpp"
#include "logatlas/io.hpp"

namespace logatlas {

namespace detail {

class AesEcb {
public:
    explicit AesEcb(const std::uint8_t key[16])
        : ctx_(EVP_CIPHER_CTX_new(), EVP_CIPHER_CTX_free) {
        if (!ctx_ || EVP_EncryptInit_ex(ctx_.get(), EVP_aes_128_ecb(), nullptr,
                                        key, nullptr) != 1)
            throw std::runtime_error("AES init failed");
    }

    void encrypt(const std::uint8_t in[16], std::uint8_t out[16]) const {
        int outl = 0;
        if (EVP_EncryptUpdate(ctx_.get(), out, &outl, in, 16) != 1 || outl != 16)
            throw std::runtime_error("AES encrypt failed");
    }

private:
    std::unique_ptr<EVP_CIPHER_CTX, decltype(&EVP_CIPHER_CTX_free)> ctx_;
};

}  // namespace detail

// 32-byte secret (first half keys AES-128, second half seeds the pad) plus
// the synthetic username dictionary. Same key, same mapping, forever.
class AnonKey {
public:
    AnonKey(const std::array<std::uint8_t, 32>& secret,
            std::vector<std::string> username_dictionary)
        : secret_(secret), usernames_(std::move(username_dictionary)) {
        if (usernames_.empty())
            throw std::invalid_argument("AnonKey: empty username dictionary");
        // pad = AES_k(secret[16..32)): the fixed plaintext the per-prefix
        // blocks are padded with.
        detail::AesEcb aes(secret_.data());
        aes.encrypt(secret_.data() + 16, pad_.data());
    }

    // Key file: 64 hex chars (32 bytes), whitespace ignored.
    static AnonKey from_files(const std::filesystem::path& key_file,
                              const std::filesystem::path& username_file) {
        return AnonKey(parse_hex_key(read_text(key_file)),
                       parse_username_dictionary(read_text(username_file)));
    }

    static std::array<std::uint8_t, 32> parse_hex_key(std::string_view text) {
        std::string hex;
        for (char c : text)
            if (!std::isspace(static_cast<unsigned char>(c))) hex.push_back(c);
        if (hex.size() != 64)
            throw std::invalid_argument("anon key must be 64 hex chars");
        auto nib = [](char c) -> int {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            throw std::invalid_argument("anon key: invalid hex digit");
        };
        std::array<std::uint8_t, 32> out{};
        for (std::size_t i = 0; i < 32; ++i)
            out[i] = static_cast<std::uint8_t>((nib(hex[2 * i]) << 4) |
                                               nib(hex[2 * i + 1]));
        return out;
    }

    static std::vector<std::string> parse_username_dictionary(
        const std::string& text) {
        std::vector<std::string> names;
        std::string cur;
        for (char c : text) {
            if (c == '\n' || c == '\r') {
                if (!cur.empty()) names.push_back(cur);
                cur.clear();
            } else {
                cur.push_back(c);
            }
        }
        if (!cur.empty()) names.push_back(cur);
        return names;
    }

    const std::uint8_t* aes_key() const { return secret_.data(); }
    const std::array<std::uint8_t, 16>& pad() const { return pad_; }
    const std::vector<std::string>& usernames() const { return usernames_; }

    std::array<std::uint8_t, 32> hmac(std::string_view data) const {
        std::array<std::uint8_t, 32> out{};
        unsigned int len = 32;
        if (!HMAC(EVP_sha256(), secret_.data(), static_cast<int>(secret_.size()),
                  reinterpret_cast<const unsigned char*>(data.data()),
                  data.size(), out.data(), &len))
            throw std::runtime_error("AnonKey: HMAC failed");
        return out;
    }

private:
    std::array<std::uint8_t, 32> secret_;
    std::vector<std::string> usernames_;
    std::array<std::uint8_t, 16> pad_{};
};

namespace detail {

struct PinnedPrefix {
    std::uint32_t bits;
    int length;
};

// RFC 1918 blocks map onto themselves: the flip for bit j is suppressed
// while the j-bit input prefix is still a proper prefix of a pinned block.
// The map stays a bijection on the full address space either way.
inline const std::array<PinnedPrefix, 3>& pinned_prefixes() {
    static const std::array<PinnedPrefix, 3> p = {{
        {0x0A000000u, 8},   // 10.0.0.0/8
        {0xAC100000u, 12},  // 172.16.0.0/12
        {0xC0A80000u, 16},  // 192.168.0.0/16
    }};
    return p;
}

inline bool flip_suppressed(std::uint32_t addr, int bit_index) {
    for (const PinnedPrefix& p : pinned_prefixes()) {
        if (bit_index >= p.length) continue;
        const std::uint32_t mask =
            bit_index == 0 ? 0u : ~((1u << (32 - bit_index)) - 1u);
        if ((addr & mask) == (p.bits & mask)) return true;
    }
    return false;
}

inline std::optional<std::uint32_t> parse_ipv4(std::string_view s) {
    std::uint32_t addr = 0;
    int octets = 0;
    std::size_t i = 0;
    while (octets < 4) {
        if (i >= s.size() || s[i] < '0' || s[i] > '9') return std::nullopt;
        std::uint32_t v = 0;
        std::size_t digits = 0;
        while (i < s.size() && s[i] >= '0' && s[i] <= '9' && digits < 4) {
            v = v * 10 + static_cast<std::uint32_t>(s[i] - '0');
            ++i;
            ++digits;
        }
        if (digits == 0 || digits > 3 || v > 255) return std::nullopt;
        addr = (addr << 8) | v;
        ++octets;
        if (octets < 4) {
            if (i >= s.size() || s[i] != '.') return std::nullopt;
            ++i;
        }
    }
    if (i != s.size()) return std::nullopt;
    return addr;
}

inline std::string format_ipv4(std::uint32_t addr) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", (addr >> 24) & 0xff,
                  (addr >> 16) & 0xff, (addr >> 8) & 0xff, addr & 0xff);
    return std::string{buf};
}

}  // namespace detail

// Keyed prefix-preserving anonymization of one IPv4 address (host order).
inline std::uint32_t anonymize_ipv4(std::uint32_t addr, const AnonKey& key) {
    detail::AesEcb aes(key.aes_key());
    const auto& pad = key.pad();
    const std::uint32_t pad_word = (std::uint32_t(pad[0]) << 24) |
                                   (std::uint32_t(pad[1]) << 16) |
                                   (std::uint32_t(pad[2]) << 8) |
                                   std::uint32_t(pad[3]);
    std::uint8_t block[16];
    std::uint8_t out[16];
    std::uint32_t flips = 0;
    for (int i = 0; i < 32; ++i) {
        if (detail::flip_suppressed(addr, i)) continue;
        std::memcpy(block, pad.data(), 16);
        // First word: i high bits of the address, pad bits below.
        const std::uint32_t mask = i == 0 ? 0u : ~((1u << (32 - i)) - 1u);
        const std::uint32_t word = (addr & mask) | (pad_word & ~mask);
        block[0] = static_cast<std::uint8_t>(word >> 24);
        block[1] = static_cast<std::uint8_t>(word >> 16);
        block[2] = static_cast<std::uint8_t>(word >> 8);
        block[3] = static_cast<std::uint8_t>(word);
        aes.encrypt(block, out);
        const std::uint32_t prf = (std::uint32_t(out[0]) << 24) |
                                  (std::uint32_t(out[1]) << 16) |
                                  (std::uint32_t(out[2]) << 8) |
                                  std::uint32_t(out[3]);
        flips |= (prf & 0x80000000u) >> i;
    }
    return addr ^ flips;
}

// Dotted-quad in, dotted-quad out; throws on malformed input.
inline std::string anonymize_ip(std::string_view addr, const AnonKey& key) {
    const auto parsed = detail::parse_ipv4(addr);
    if (!parsed)
        throw std::invalid_argument("anonymize_ip: malformed IPv4 address: " +
                                    std::string(addr));
    return detail::format_ipv4(anonymize_ipv4(*parsed, key));
}

// Keyed dictionary pick plus keyed numeric suffix; never echoes the input.
inline std::string anonymize_user(std::string_view name, const AnonKey& key) {
    if (name.empty())
        throw std::invalid_argument("anonymize_user: empty name");
    const auto mac = key.hmac("user:" + std::string(name));
    auto word = [&](int o) {
        return (std::uint64_t(mac[o]) << 24) | (std::uint64_t(mac[o + 1]) << 16) |
               (std::uint64_t(mac[o + 2]) << 8) | std::uint64_t(mac[o + 3]);
    };
    const auto& dict = key.usernames();
    const std::size_t idx = static_cast<std::size_t>(word(0) % dict.size());
    const std::uint64_t suffix = ((word(4) << 32) | word(8)) % 100000000ULL;
    char suf[12];
    std::snprintf(suf, sizeof(suf), "%08llu",
                  static_cast<unsigned long long>(suffix));
    std::string out = dict[idx] + suf;
    if (out == name) out = dict[(idx + 1) % dict.size()] + suf;
    return out;
}

namespace detail {

// Strict dotted-quad token replacement: runs embedded in longer dotted or
// numeric sequences are left alone, and each octet must be <= 255.
template <typename Fn>
std::string replace_ipv4_tokens(const std::string& text, Fn&& fn) {
    static const std::regex ip_re(R"(\d{1,3}\.\d{1,3}\.\d{1,3}\.\d{1,3})");
    std::string out;
    out.reserve(text.size());
    auto begin = std::sregex_iterator(text.begin(), text.end(), ip_re);
    auto end = std::sregex_iterator();
    std::size_t last = 0;
    for (auto it = begin; it != end; ++it) {
        const auto& m = *it;
        const std::size_t pos = static_cast<std::size_t>(m.position(0));
        const std::size_t len = static_cast<std::size_t>(m.length(0));
        const bool left_ok =
            pos == 0 || (!std::isdigit(static_cast<unsigned char>(text[pos - 1])) &&
                         text[pos - 1] != '.');
        const std::size_t after = pos + len;
        const bool right_ok =
            after >= text.size() ||
            (!std::isdigit(static_cast<unsigned char>(text[after])) &&
             text[after] != '.');
        out.append(text, last, pos - last);
        const std::string token = m.str(0);
        if (left_ok && right_ok && parse_ipv4(token)) {
            out += fn(token);
        } else {
            out += token;
        }
        last = pos + len;
    }
    out.append(text, last, text.size() - last);
    return out;
}

// Whole-token occurrences of `word` (identifier boundaries) become `repl`.
inline std::string replace_word(const std::string& text, const std::string& word,
                                const std::string& repl) {
    auto is_ident = [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' ||
               c == '.' || c == '-';
    };
    std::string out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t found = text.find(word, pos);
        if (found == std::string::npos) {
            out.append(text, pos, text.size() - pos);
            return out;
        }
        const bool left_ok = found == 0 || !is_ident(text[found - 1]);
        const std::size_t after = found + word.size();
        const bool right_ok = after >= text.size() || !is_ident(text[after]);
        out.append(text, pos, found - pos);
        out += (left_ok && right_ok) ? repl : word;
        pos = after;
    }
}

}  // namespace detail

// Substitutes IPs and the grammar-identified username in host/user/message;
// attack tags, source type, timestamps and all non-identifier message tokens
// stay untouched.
inline LogEntry anonymize_entry(const LogEntry& entry, const AnonKey& key) {
    LogEntry out = entry;
    if (detail::parse_ipv4(out.host)) out.host = anonymize_ip(out.host, key);
    const std::optional<std::string> original_user = out.user;
    if (out.user && !out.user->empty()) out.user = anonymize_user(*out.user, key);
    out.message = detail::replace_ipv4_tokens(
        out.message, [&](const std::string& ip) { return anonymize_ip(ip, key); });
    if (original_user && !original_user->empty() && out.user)
        out.message = detail::replace_word(out.message, *original_user, *out.user);
    return out;
}

}  // namespace logatlas

#pragma once

#include <csicl/error.hpp>

#include <openssl/evp.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace csicl::llm {

/// Names a counting scheme. vocabulary_source is a file path for
/// vocabulary-backed schemes and empty otherwise.
struct TokenScheme {
    std::string scheme_id;
    std::string vocabulary_source;
};

inline constexpr std::string_view kWhitespaceScheme = "whitespace";
inline constexpr std::string_view kLongestMatchScheme = "longest_match";
inline constexpr std::string_view kO200kScheme = "o200k_base";
inline constexpr std::string_view kProviderReportedScheme = "provider-reported";

class TokenCounter {
public:
    virtual ~TokenCounter() = default;
    virtual std::size_t count(std::string_view text) const = 0;
    virtual const std::string& scheme_id() const = 0;
    /// When true, count() must not be called; use provider usage fields.
    virtual bool provider_reported() const { return false; }
};

/// One token per maximal run of non-whitespace bytes.
class WhitespaceCounter final : public TokenCounter {
public:
    std::size_t count(std::string_view text) const override {
        std::size_t n = 0;
        bool in_word = false;
        for (char c : text) {
            const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
            if (!ws && !in_word) ++n;
            in_word = !ws;
        }
        return n;
    }
    const std::string& scheme_id() const override { return id_; }

private:
    std::string id_{kWhitespaceScheme};
};

class ProviderReportedCounter final : public TokenCounter {
public:
    std::size_t count(std::string_view) const override {
        throw PreconditionError("token counting is provider-reported; read usage fields instead");
    }
    const std::string& scheme_id() const override { return id_; }
    bool provider_reported() const override { return true; }

private:
    std::string id_{kProviderReportedScheme};
};

/// Greedy longest-prefix match over a vocabulary file with one token per
/// line. Escapes: "\n", "\t", "\s" (space) and "\\". A byte no token starts
/// with counts as one token.
class LongestMatchCounter final : public TokenCounter {
public:
    explicit LongestMatchCounter(const std::vector<std::string>& vocabulary) {
        nodes_.emplace_back();
        for (const auto& tok : vocabulary) insert(tok);
    }

    static LongestMatchCounter from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open vocabulary " + path.string());
        std::vector<std::string> vocab;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            vocab.push_back(unescape(line, path, lineno));
        }
        if (vocab.empty()) throw DataError("vocabulary " + path.string() + " is empty");
        return LongestMatchCounter(vocab);
    }

    std::size_t count(std::string_view text) const override {
        std::size_t n = 0;
        std::size_t i = 0;
        while (i < text.size()) {
            std::size_t best = 0;
            std::size_t node = 0;
            for (std::size_t j = i; j < text.size(); ++j) {
                auto it = nodes_[node].next.find(static_cast<unsigned char>(text[j]));
                if (it == nodes_[node].next.end()) break;
                node = it->second;
                if (nodes_[node].terminal) best = j - i + 1;
            }
            i += best ? best : 1;
            ++n;
        }
        return n;
    }

    const std::string& scheme_id() const override { return id_; }

private:
    struct Node {
        std::unordered_map<unsigned char, std::size_t> next;
        bool terminal = false;
    };

    void insert(const std::string& tok) {
        std::size_t node = 0;
        for (unsigned char c : tok) {
            auto it = nodes_[node].next.find(c);
            if (it == nodes_[node].next.end()) {
                nodes_.emplace_back();
                it = nodes_[node].next.emplace(c, nodes_.size() - 1).first;
            }
            node = it->second;
        }
        nodes_[node].terminal = true;
    }

    static std::string unescape(std::string_view s, const std::filesystem::path& path, std::size_t lineno) {
        std::string out;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (s[i] != '\\') {
                out += s[i];
                continue;
            }
            if (++i == s.size()) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": dangling escape");
            }
            switch (s[i]) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 's': out += ' '; break;
            case '\\': out += '\\'; break;
            default:
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": unknown escape \\" +
                                std::string(1, s[i]));
            }
        }
        return out;
    }

    std::string id_{kLongestMatchScheme};
    std::vector<Node> nodes_;
};

namespace detail {

// Code point classes used by the o200k pre-tokenizer. Exact for ASCII and
// Latin-1; other scripts are approximated (letters are treated as caseless,
// so they belong to both the upper and lower classes).
enum CharClass : std::uint8_t {
    kUpper = 1,   // \p{Lu}\p{Lt}\p{Lm}\p{Lo}\p{M}
    kLower = 2,   // \p{Ll}\p{Lm}\p{Lo}\p{M}
    kNumber = 4,  // \p{N}
    kSpace = 8,   // \s
    kNewline = 16 // \r or \n
};

inline std::uint8_t classify(char32_t c) {
    if (c < 0x80) {
        if (c >= 'A' && c <= 'Z') return kUpper;
        if (c >= 'a' && c <= 'z') return kLower;
        if (c >= '0' && c <= '9') return kNumber;
        if (c == '\n' || c == '\r') return kSpace | kNewline;
        if (c == ' ' || c == '\t' || c == '\v' || c == '\f') return kSpace;
        return 0;
    }
    if (c == 0x85 || c == 0xA0 || c == 0x1680 || (c >= 0x2000 && c <= 0x200A) || c == 0x2028 || c == 0x2029 ||
        c == 0x202F || c == 0x205F || c == 0x3000) {
        return kSpace;
    }
    if (c < 0x100) {
        if (c == 0xB2 || c == 0xB3 || c == 0xB9 || (c >= 0xBC && c <= 0xBE)) return kNumber;
        if (c == 0xAA || c == 0xBA) return kUpper | kLower;
        if (c == 0xB5) return kLower;
        if ((c >= 0xC0 && c <= 0xD6) || (c >= 0xD8 && c <= 0xDE)) return kUpper;
        if ((c >= 0xDF && c <= 0xF6) || c >= 0xF8) return kLower;
        return 0;
    }
    if ((c >= 0x2010 && c <= 0x2027) || (c >= 0x2030 && c <= 0x205E) || (c >= 0x20A0 && c <= 0x20CF) ||
        (c >= 0x2100 && c <= 0x214F && c != 0x2102 && c != 0x2107 && !(c >= 0x210A && c <= 0x2113) &&
         c != 0x2115 && !(c >= 0x2119 && c <= 0x211D) && c != 0x2124 && c != 0x2126 && c != 0x2128 &&
         !(c >= 0x212A && c <= 0x212D) && !(c >= 0x212F && c <= 0x2139) && !(c >= 0x213C && c <= 0x213F) &&
         !(c >= 0x2145 && c <= 0x2149) && c != 0x214E) ||
        (c >= 0x2190 && c <= 0x2BFF) || (c >= 0x3001 && c <= 0x3004) || (c >= 0x3008 && c <= 0x3020) ||
        (c >= 0xFE30 && c <= 0xFE4F) || (c >= 0xFF01 && c <= 0xFF0F) || (c >= 0xFF1A && c <= 0xFF20) ||
        (c >= 0x1F000 && c <= 0x1FAFF)) {
        return 0;
    }
    if ((c >= 0x2150 && c <= 0x218B) || (c >= 0x2460 && c <= 0x249B) || (c >= 0xFF10 && c <= 0xFF19)) {
        return kNumber;
    }
    return kUpper | kLower;
}

struct CodePoint {
    std::size_t offset;
    std::size_t length;
    std::uint8_t cls;
    char32_t value;
};

/// Decodes UTF-8. Invalid bytes become single "other" code points.
inline std::vector<CodePoint> decode_utf8(std::string_view s) {
    std::vector<CodePoint> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        std::size_t len = 1;
        char32_t cp = b0;
        if (b0 >= 0xC0 && b0 < 0xE0) len = 2, cp = b0 & 0x1F;
        else if (b0 >= 0xE0 && b0 < 0xF0) len = 3, cp = b0 & 0x0F;
        else if (b0 >= 0xF0 && b0 < 0xF8) len = 4, cp = b0 & 0x07;
        bool ok = b0 < 0x80 || (len > 1 && i + len <= s.size());
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) ok = false;
            else cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back({i, 1, 0, b0});
            ++i;
            continue;
        }
        out.push_back({i, len, classify(cp), cp});
        i += len;
    }
    return out;
}

/// Splits text the way the o200k_base pattern does:
///   [^\r\n\p{L}\p{N}]?[U]*[W]+(?i:'s|'t|'re|'ve|'m|'ll|'d)?
///   [^\r\n\p{L}\p{N}]?[U]+[W]*(?i:'s|'t|'re|'ve|'m|'ll|'d)?
///   \p{N}{1,3}
///    ?[^\s\p{L}\p{N}]+[\r\n/]*
///   \s*[\r\n]+
///   \s+(?!\S)
///   \s+
/// Alternatives are tried in order at each position; the first that matches wins.
class O200kPreTokenizer {
public:
    static std::vector<std::string_view> split(std::string_view text) {
        const auto cps = decode_utf8(text);
        std::vector<std::string_view> pieces;
        std::size_t i = 0;
        while (i < cps.size()) {
            std::size_t n = match_at(cps, i);
            if (n == 0) n = 1;
            const auto begin = cps[i].offset;
            const auto end = (i + n < cps.size()) ? cps[i + n].offset : text.size();
            pieces.push_back(text.substr(begin, end - begin));
            i += n;
        }
        return pieces;
    }

private:
    using CPs = std::vector<CodePoint>;

    static bool is_letter(const CodePoint& c) { return c.cls & (kUpper | kLower); }
    static bool is_prefix_char(const CodePoint& c) {
        return !(c.cls & kNewline) && !is_letter(c) && !(c.cls & kNumber);
    }
    static bool is_punct(const CodePoint& c) { return !(c.cls & kSpace) && !is_letter(c) && !(c.cls & kNumber); }

    static std::size_t run(const CPs& cps, std::size_t i, std::uint8_t mask) {
        std::size_t n = 0;
        while (i + n < cps.size() && (cps[i + n].cls & mask)) ++n;
        return n;
    }

    static std::size_t contraction(const CPs& cps, std::size_t i) {
        if (i >= cps.size() || cps[i].value != U'\'') return 0;
        auto lower = [&](std::size_t k) -> char32_t {
            if (k >= cps.size()) return 0;
            char32_t c = cps[k].value;
            return (c >= 'A' && c <= 'Z') ? c + 32 : c;
        };
        const char32_t a = lower(i + 1);
        const char32_t b = lower(i + 2);
        if (a == 's' || a == 't' || a == 'm' || a == 'd') return 2;
        if ((a == 'r' && b == 'e') || (a == 'v' && b == 'e') || (a == 'l' && b == 'l')) return 3;
        return 0;
    }

    // Letters with an optional prefix; `upper_first` selects the second alternative.
    static std::size_t match_word(const CPs& cps, std::size_t i, bool upper_first) {
        for (int with_prefix = 1; with_prefix >= 0; --with_prefix) {
            std::size_t p = i;
            if (with_prefix) {
                if (!is_prefix_char(cps[i])) continue;
                ++p;
            }
            const std::size_t u_max = run(cps, p, kUpper);
            if (upper_first) {
                if (u_max == 0) continue;
                const std::size_t w = run(cps, p + u_max, kLower);
                const std::size_t end = p + u_max + w;
                return end + contraction(cps, end) - i;
            }
            for (std::size_t u = u_max + 1; u-- > 0;) {
                const std::size_t w = run(cps, p + u, kLower);
                if (w > 0) {
                    const std::size_t end = p + u + w;
                    return end + contraction(cps, end) - i;
                }
            }
        }
        return 0;
    }

    static std::size_t match_at(const CPs& cps, std::size_t i) {
        if (auto n = match_word(cps, i, false)) return n;
        if (auto n = match_word(cps, i, true)) return n;
        if (cps[i].cls & kNumber) return std::min<std::size_t>(run(cps, i, kNumber), 3);
        {
            std::size_t p = i;
            if (cps[p].value == U' ' && p + 1 < cps.size() && is_punct(cps[p + 1])) ++p;
            std::size_t q = p;
            while (q < cps.size() && is_punct(cps[q])) ++q;
            if (q > p) {
                while (q < cps.size() && ((cps[q].cls & kNewline) || cps[q].value == U'/')) ++q;
                return q - i;
            }
        }
        const std::size_t ws = run(cps, i, kSpace);
        if (ws == 0) return 0;
        for (std::size_t k = ws; k-- > 0;) {
            if (cps[i + k].cls & kNewline) return k + 1;
        }
        if (i + ws == cps.size()) return ws;
        if (ws >= 2) return ws - 1;
        return ws;
    }
};

inline std::string base64_decode(std::string_view in) {
    std::string out(3 * ((in.size() + 3) / 4), '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(in.data()), static_cast<int>(in.size()));
    if (n < 0) throw DataError("invalid base64 token \"" + std::string(in) + "\"");
    std::size_t len = static_cast<std::size_t>(n);
    for (auto it = in.rbegin(); it != in.rend() && *it == '='; ++it) --len;
    out.resize(len);
    return out;
}

} // namespace detail

/// Byte-level BPE over a tiktoken-format rank file ("<base64 token> <rank>"
/// per line), with the o200k_base pre-tokenizer. Pointing it at the real
/// o200k_base.tiktoken file gives o200k_base counts.
class BpeCounter final : public TokenCounter {
public:
    explicit BpeCounter(std::unordered_map<std::string, std::uint32_t> ranks, std::string scheme_id = std::string(kO200kScheme))
        : ranks_(std::move(ranks)), id_(std::move(scheme_id)) {}

    static BpeCounter from_file(const std::filesystem::path& path, std::string scheme_id = std::string(kO200kScheme)) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open BPE rank file " + path.string());
        std::unordered_map<std::string, std::uint32_t> ranks;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            std::istringstream fields(line);
            std::string b64;
            long long rank = -1;
            if (!(fields >> b64 >> rank) || rank < 0) {
                throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected \"<base64> <rank>\"");
            }
            ranks.emplace(detail::base64_decode(b64), static_cast<std::uint32_t>(rank));
        }
        if (ranks.empty()) throw DataError("BPE rank file " + path.string() + " is empty");
        return BpeCounter(std::move(ranks), std::move(scheme_id));
    }

    std::size_t count(std::string_view text) const override {
        std::size_t n = 0;
        for (auto piece : detail::O200kPreTokenizer::split(text)) n += count_piece(piece);
        return n;
    }

    /// Token byte strings for one pre-tokenized piece, in order.
    std::vector<std::string> encode_piece(std::string_view piece) const {
        if (ranks_.contains(std::string(piece))) return {std::string(piece)};
        std::vector<std::string> parts;
        parts.reserve(piece.size());
        for (char c : piece) parts.emplace_back(1, c);
        constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
        while (parts.size() > 1) {
            std::uint32_t best = kNone;
            std::size_t at = 0;
            for (std::size_t k = 0; k + 1 < parts.size(); ++k) {
                auto it = ranks_.find(parts[k] + parts[k + 1]);
                if (it != ranks_.end() && it->second < best) {
                    best = it->second;
                    at = k;
                }
            }
            if (best == kNone) break;
            parts[at] += parts[at + 1];
            parts.erase(parts.begin() + static_cast<std::ptrdiff_t>(at) + 1);
        }
        return parts;
    }

    const std::string& scheme_id() const override { return id_; }

private:
    std::size_t count_piece(std::string_view piece) const { return encode_piece(piece).size(); }

    std::unordered_map<std::string, std::uint32_t> ranks_;
    std::string id_;
};

/// Builds the counter for a scheme id: "whitespace", "longest_match",
/// "o200k_base" or "provider-reported".
inline std::shared_ptr<const TokenCounter> make_token_counter(const TokenScheme& scheme) {
    if (scheme.scheme_id == kWhitespaceScheme) return std::make_shared<WhitespaceCounter>();
    if (scheme.scheme_id == kProviderReportedScheme) return std::make_shared<ProviderReportedCounter>();
    if (scheme.scheme_id == kLongestMatchScheme) {
        if (scheme.vocabulary_source.empty()) throw DataError("longest_match scheme needs a vocabulary file");
        return std::make_shared<LongestMatchCounter>(LongestMatchCounter::from_file(scheme.vocabulary_source));
    }
    if (scheme.scheme_id == kO200kScheme) {
        if (scheme.vocabulary_source.empty()) throw DataError("o200k_base scheme needs a .tiktoken rank file");
        return std::make_shared<BpeCounter>(BpeCounter::from_file(scheme.vocabulary_source));
    }
    throw DataError("unknown token scheme \"" + scheme.scheme_id + "\"");
}

} // namespace csicl::llm

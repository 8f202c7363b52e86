#pragma once

#include <csicl/error.hpp>

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace csicl::llm {

/// Transport-level failure worth retrying: connection errors, timeouts,
/// rate limits and 5xx responses.
class TransientError : public Error {
public:
    using Error::Error;
};

/// 401/403 from the provider, or a credential variable that is not set.
class AuthError : public Error {
public:
    using Error::Error;
};

/// Non-retryable provider response. what() carries the payload verbatim.
class ProviderError : public Error {
public:
    ProviderError(int status, const std::string& body)
        : Error("provider returned HTTP " + std::to_string(status) + ": " + body), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

/// Replay transport has no recorded response for a request.
class FixtureMissError : public Error {
public:
    explicit FixtureMissError(std::string digest)
        : Error("no replay fixture for request digest " + digest), digest_(std::move(digest)) {}
    const std::string& digest() const noexcept { return digest_; }

private:
    std::string digest_;
};

class RetriesExhaustedError : public Error {
public:
    using Error::Error;
};

struct ChatRequest {
    std::string model_id;
    std::string system_text;
    std::string user_text;
    double temperature = 0.0;
    /// 0 leaves the limit to the provider.
    std::uint64_t max_output_tokens = 0;
    std::uint32_t n_samples = 1;

    void validate() const {
        if (model_id.empty()) throw PreconditionError("chat request without model_id");
        if (!(temperature >= 0.0 && temperature <= 2.0)) {
            throw PreconditionError("temperature must lie in [0, 2]");
        }
        if (n_samples < 1) throw PreconditionError("n_samples must be >= 1");
        if (temperature == 0.0 && n_samples != 1) {
            throw PreconditionError("greedy requests (temperature 0) take exactly one sample");
        }
    }

    friend bool operator==(const ChatRequest&, const ChatRequest&) = default;
};

struct ChatResponse {
    std::vector<std::string> texts;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    /// Prompt tokens the provider served from its prefix cache, when reported.
    std::uint64_t cached_prompt_tokens = 0;
    double latency_seconds = 0.0;
    /// When the response was first obtained from a transport. Set by the client.
    std::string created_at;

    friend bool operator==(const ChatResponse&, const ChatResponse&) = default;
};

inline nlohmann::json to_json(const ChatResponse& r) {
    return {{"texts", r.texts},
            {"prompt_tokens", r.prompt_tokens},
            {"completion_tokens", r.completion_tokens},
            {"cached_prompt_tokens", r.cached_prompt_tokens},
            {"latency_seconds", r.latency_seconds},
            {"created_at", r.created_at}};
}

inline ChatResponse chat_response_from_json(const nlohmann::json& j) {
    ChatResponse r;
    r.texts = j.at("texts").get<std::vector<std::string>>();
    r.prompt_tokens = j.value("prompt_tokens", std::uint64_t{0});
    r.completion_tokens = j.value("completion_tokens", std::uint64_t{0});
    r.cached_prompt_tokens = j.value("cached_prompt_tokens", std::uint64_t{0});
    r.latency_seconds = j.value("latency_seconds", 0.0);
    r.created_at = j.value("created_at", std::string{});
    return r;
}

/// Canonical form of a chat request. nlohmann::json objects keep keys sorted,
/// so the serialization does not depend on how the request was built.
inline nlohmann::json canonical_json(const ChatRequest& r) {
    return {{"kind", "chat"},
            {"model_id", r.model_id},
            {"system_text", r.system_text},
            {"user_text", r.user_text},
            {"temperature", r.temperature},
            {"max_output_tokens", r.max_output_tokens},
            {"n_samples", r.n_samples}};
}

inline nlohmann::json canonical_embed_json(std::string_view model_id, std::string_view text) {
    return {{"kind", "embed"}, {"model_id", model_id}, {"text", text}};
}

/// Lowercase hex SHA-256 of `bytes`.
inline std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

inline std::string cache_key(const ChatRequest& r) { return sha256_hex(canonical_json(r).dump()); }

inline std::string embed_cache_key(std::string_view model_id, std::string_view text) {
    return sha256_hex(canonical_embed_json(model_id, text).dump());
}

} // namespace csicl::llm

#pragma once

// Needs cpp-httplib built with CPPHTTPLIB_OPENSSL_SUPPORT for https endpoints.
#include <csicl/llm/transport.hpp>

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <optional>

namespace csicl::llm {

struct HttpOptions {
    std::string base_url;  // scheme://host[:port]
    std::string chat_path = "/v1/chat/completions";
    std::string embeddings_path = "/v1/embeddings";
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 120;
};

/// OpenAI-compatible chat and embeddings endpoint.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(HttpOptions options) : options_(std::move(options)) {
        if (options_.base_url.empty()) throw PreconditionError("live transport needs a base_url");
        const char* key = std::getenv(options_.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw AuthError("environment variable " + options_.api_key_env + " is not set");
        }
        key_ = key;
    }

    ChatResponse complete(const ChatRequest& request) override {
        request.validate();
        nlohmann::json body{{"model", request.model_id}, {"temperature", request.temperature}, {"n", request.n_samples}};
        auto messages = nlohmann::json::array();
        if (!request.system_text.empty()) messages.push_back({{"role", "system"}, {"content", request.system_text}});
        messages.push_back({{"role", "user"}, {"content", request.user_text}});
        body["messages"] = std::move(messages);
        if (request.max_output_tokens > 0) body["max_tokens"] = request.max_output_tokens;

        const auto start = std::chrono::steady_clock::now();
        const auto j = post(options_.chat_path, body);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;

        ChatResponse resp;
        try {
            for (const auto& c : j.at("choices")) {
                const auto& content = c.at("message").at("content");
                resp.texts.push_back(content.is_null() ? std::string{} : content.get<std::string>());
            }
            if (const auto u = j.find("usage"); u != j.end() && u->is_object()) {
                resp.prompt_tokens = u->value("prompt_tokens", std::uint64_t{0});
                resp.completion_tokens = u->value("completion_tokens", std::uint64_t{0});
                if (const auto d = u->find("prompt_tokens_details"); d != u->end() && d->is_object()) {
                    const auto cached = d->find("cached_tokens");
                    if (cached != d->end() && cached->is_number()) resp.cached_prompt_tokens = cached->get<std::uint64_t>();
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(200, std::string("malformed chat response (") + e.what() + "): " + j.dump());
        }
        resp.latency_seconds = elapsed.count();
        return resp;
    }

    std::vector<Embedding> embed(const std::string& model_id, std::span<const std::string> texts) override {
        const nlohmann::json body{{"model", model_id}, {"input", std::vector<std::string>(texts.begin(), texts.end())}};
        const auto j = post(options_.embeddings_path, body);
        std::vector<Embedding> out(texts.size());
        try {
            for (const auto& d : j.at("data")) {
                const auto idx = d.value("index", std::size_t{0});
                if (idx >= out.size()) throw ProviderError(200, "embedding index out of range: " + j.dump());
                out[idx] = d.at("embedding").get<Embedding>();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(200, std::string("malformed embeddings response (") + e.what() + ")");
        }
        for (const auto& e : out) {
            if (e.empty()) throw ProviderError(200, "embeddings response is missing entries");
        }
        return out;
    }

    std::string_view name() const override { return "live"; }
    bool is_live() const override { return true; }

private:
    nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
        httplib::Client cli(options_.base_url);
        cli.set_connection_timeout(options_.timeout_seconds, 0);
        cli.set_read_timeout(options_.timeout_seconds, 0);
        cli.set_write_timeout(options_.timeout_seconds, 0);
        const httplib::Headers headers{{"Authorization", "Bearer " + key_}};
        auto res = cli.Post(path, headers, body.dump(), "application/json");
        if (!res) throw TransientError("request to " + options_.base_url + path + " failed: " + httplib::to_string(res.error()));
        const int status = res->status;
        if (status == 401 || status == 403) throw AuthError("provider rejected credentials (HTTP " + std::to_string(status) + "): " + res->body);
        if (status == 429 || status >= 500) throw TransientError("HTTP " + std::to_string(status) + ": " + res->body);
        if (status < 200 || status >= 300) throw ProviderError(status, res->body);
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error&) {
            throw ProviderError(status, res->body);
        }
    }

    HttpOptions options_;
    std::string key_;
};

} // namespace csicl::llm

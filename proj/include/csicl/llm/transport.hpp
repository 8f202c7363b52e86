#pragma once

#include <csicl/llm/cache.hpp>
#include <csicl/llm/types.hpp>

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csicl::llm {

using Embedding = std::vector<double>;

/// Something that can answer chat and embedding requests. Implementations
/// must be safe to call from several threads at once.
class Transport {
public:
    virtual ~Transport() = default;

    virtual ChatResponse complete(const ChatRequest& request) = 0;
    virtual std::vector<Embedding> embed(const std::string& model_id, std::span<const std::string> texts) = 0;
    virtual std::string_view name() const = 0;
    /// True when the transport talks to a real endpoint.
    virtual bool is_live() const { return false; }
};

/// Serves recorded responses from a fixture directory laid out like a
/// ResponseCache. Unknown requests fail with FixtureMissError.
class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(std::filesystem::path fixture_dir) : fixtures_(std::move(fixture_dir), true) {}

    ChatResponse complete(const ChatRequest& request) override {
        const auto digest = cache_key(request);
        auto entry = fixtures_.lookup(digest);
        if (!entry) throw FixtureMissError(digest);
        auto resp = chat_response_from_json(entry->at("response"));
        if (resp.texts.size() != request.n_samples) {
            throw DataError("fixture " + digest + " holds " + std::to_string(resp.texts.size()) +
                            " samples, request wants " + std::to_string(request.n_samples));
        }
        return resp;
    }

    std::vector<Embedding> embed(const std::string& model_id, std::span<const std::string> texts) override {
        std::vector<Embedding> out;
        out.reserve(texts.size());
        for (const auto& t : texts) {
            const auto digest = embed_cache_key(model_id, t);
            auto entry = fixtures_.lookup(digest);
            if (!entry) throw FixtureMissError(digest);
            out.push_back(entry->at("response").at("embedding").get<Embedding>());
        }
        return out;
    }

    std::string_view name() const override { return "replay"; }

    const std::filesystem::path& fixture_dir() const noexcept { return fixtures_.dir(); }

private:
    ResponseCache fixtures_;
};

} // namespace csicl::llm

#pragma once

#include <csicl/llm/cache.hpp>
#include <csicl/llm/transport.hpp>
#include <csicl/llm/types.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace csicl::llm {

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::chrono::milliseconds max_backoff{4000};
};

struct ClientOptions {
    RetryPolicy retry;
    /// Upper bound on concurrent transport calls.
    std::size_t parallelism = 4;
    /// Injected so tests can skip the real sleep.
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
};

/// The handle the rest of the library talks to: a transport behind a
/// response-level disk cache, retry policy and a concurrency limit.
class LlmClient {
public:
    static constexpr std::ptrdiff_t kMaxParallelism = 256;

    LlmClient(std::shared_ptr<Transport> transport, std::optional<std::filesystem::path> cache_dir,
              ClientOptions options = {})
        : transport_(std::move(transport)),
          options_(std::move(options)),
          slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.parallelism, 1, kMaxParallelism))) {
        if (!transport_) throw PreconditionError("LlmClient needs a transport");
        if (cache_dir) cache_.emplace(*cache_dir);
    }

    LlmClient(const LlmClient&) = delete;
    LlmClient& operator=(const LlmClient&) = delete;

    ChatResponse complete(const ChatRequest& request) {
        request.validate();
        const auto key = cache_key(request);
        if (auto hit = cached(key)) {
            ++cache_hits_;
            return chat_response_from_json(hit->at("response"));
        }
        std::unique_lock writer = cache_ ? std::unique_lock(cache_->writer_lock(key)) : std::unique_lock<std::mutex>();
        if (auto hit = cached(key)) {
            ++cache_hits_;
            return chat_response_from_json(hit->at("response"));
        }
        ChatResponse resp = with_retries([&] { return transport_->complete(request); });
        if (resp.texts.size() != request.n_samples) {
            throw ProviderError(200, "expected " + std::to_string(request.n_samples) + " samples, got " +
                                         std::to_string(resp.texts.size()));
        }
        if (resp.created_at.empty()) resp.created_at = detail::utc_timestamp();
        if (cache_) cache_->store(key, canonical_json(request), to_json(resp));
        return resp;
    }

    /// One vector per text; every vector has the same dimension.
    std::vector<Embedding> embed(const std::string& model_id, std::span<const std::string> texts) {
        if (texts.empty()) throw PreconditionError("embed() needs at least one text");
        if (model_id.empty()) throw PreconditionError("embed() needs an embedding model id");

        std::vector<std::optional<Embedding>> out(texts.size());
        std::vector<std::string> keys(texts.size());
        std::map<std::string, std::vector<std::size_t>> missing;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            keys[i] = embed_cache_key(model_id, texts[i]);
            if (auto hit = cached(keys[i])) {
                ++cache_hits_;
                out[i] = hit->at("response").at("embedding").get<Embedding>();
            } else {
                missing[keys[i]].push_back(i);
            }
        }
        if (!missing.empty()) {
            std::vector<std::string> batch;
            std::vector<std::string> batch_keys;
            for (const auto& [key, idx] : missing) {
                batch.push_back(texts[idx.front()]);
                batch_keys.push_back(key);
            }
            auto vectors = with_retries([&] { return transport_->embed(model_id, batch); });
            if (vectors.size() != batch.size()) {
                throw ProviderError(200, "expected " + std::to_string(batch.size()) + " embeddings, got " +
                                             std::to_string(vectors.size()));
            }
            for (std::size_t b = 0; b < batch.size(); ++b) {
                if (cache_) {
                    std::lock_guard lk(cache_->writer_lock(batch_keys[b]));
                    cache_->store(batch_keys[b], canonical_embed_json(model_id, batch[b]),
                                  nlohmann::json{{"embedding", vectors[b]}});
                }
                for (auto i : missing.at(batch_keys[b])) out[i] = vectors[b];
            }
        }
        std::vector<Embedding> result;
        result.reserve(out.size());
        for (auto& v : out) result.push_back(std::move(*v));
        const auto dim = result.front().size();
        for (const auto& v : result) {
            if (v.size() != dim || dim == 0) {
                throw ProviderError(200, "embeddings have inconsistent dimensions");
            }
        }
        return result;
    }

    /// Number of times the underlying transport was invoked (retries included).
    std::size_t transport_calls() const noexcept { return transport_calls_; }
    std::size_t cache_hits() const noexcept { return cache_hits_; }

    Transport& transport() noexcept { return *transport_; }
    const std::optional<ResponseCache>& cache() const noexcept { return cache_; }
    const ClientOptions& options() const noexcept { return options_; }

private:
    std::optional<nlohmann::json> cached(const std::string& key) const {
        if (!cache_) return std::nullopt;
        return cache_->lookup(key);
    }

    template <typename Call>
    auto with_retries(Call&& call) -> decltype(call()) {
        auto backoff = options_.retry.initial_backoff;
        for (int attempt = 1;; ++attempt) {
            try {
                slots_.acquire();
                struct Release {
                    std::counting_semaphore<kMaxParallelism>& s;
                    ~Release() { s.release(); }
                } release{slots_};
                ++transport_calls_;
                return call();
            } catch (const TransientError& e) {
                if (attempt >= options_.retry.max_attempts) {
                    throw RetriesExhaustedError("gave up after " + std::to_string(attempt) + " attempts: " + e.what());
                }
            }
            options_.sleep(backoff);
            backoff = std::min(backoff * 2, options_.retry.max_backoff);
        }
    }

    std::shared_ptr<Transport> transport_;
    std::optional<ResponseCache> cache_;
    ClientOptions options_;
    std::counting_semaphore<kMaxParallelism> slots_;
    std::atomic<std::size_t> transport_calls_{0};
    std::atomic<std::size_t> cache_hits_{0};
};

} // namespace csicl::llm

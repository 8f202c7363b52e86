#pragma once

#include <csicl/csicl.hpp>
#include <csicl/llm/http_transport.hpp>

#include <memory>

namespace csicl::app {

inline std::shared_ptr<llm::Transport> make_transport(const harness::TransportConfig& t) {
    if (t.kind == harness::TransportKind::replay) {
        if (t.fixture_dir.empty()) throw PreconditionError("replay transport needs transport.fixture_dir");
        if (!std::filesystem::is_directory(t.fixture_dir)) {
            throw PreconditionError("fixture dir " + t.fixture_dir.string() + " does not exist");
        }
        return std::make_shared<llm::ReplayTransport>(t.fixture_dir);
    }
    return std::make_shared<llm::HttpTransport>(
        llm::HttpOptions{t.base_url, t.chat_path, t.embeddings_path, t.api_key_env, t.timeout_seconds});
}

/// Inference and sheet clients for a config. They share one object unless a
/// separate sheet transport is configured.
struct ClientPair {
    std::shared_ptr<llm::LlmClient> inference;
    std::shared_ptr<llm::LlmClient> sheet;

    harness::Clients clients() const { return {*inference, *sheet}; }
    std::size_t transport_calls() const {
        return inference->transport_calls() + (sheet != inference ? sheet->transport_calls() : 0);
    }
};

inline ClientPair make_clients(const harness::RunConfig& c) {
    llm::ClientOptions opts;
    opts.parallelism = c.parallelism;
    ClientPair p;
    p.inference = std::make_shared<llm::LlmClient>(make_transport(c.transport), c.cache_dir, opts);
    p.sheet = c.sheet_transport ? std::make_shared<llm::LlmClient>(make_transport(*c.sheet_transport), c.cache_dir, opts)
                                : p.inference;
    return p;
}

} // namespace csicl::app

#pragma once

#include <csicl/cheatsheet/cheatsheet.hpp>
#include <csicl/icl/inference.hpp>
#include <csicl/llm/tokens.hpp>
#include <csicl/retrieval/retrieval.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace csicl::harness {

namespace fs = std::filesystem;

enum class TransportKind { live, replay };

inline TransportKind transport_kind_from_string(std::string_view s) {
    if (s == "live") return TransportKind::live;
    if (s == "replay") return TransportKind::replay;
    throw DataError("unknown transport \"" + std::string(s) + "\" (expected live or replay)");
}

struct TransportConfig {
    TransportKind kind = TransportKind::replay;
    fs::path fixture_dir;
    /// Live endpoint, OpenAI-compatible.
    std::string base_url;
    std::string chat_path = "/v1/chat/completions";
    std::string embeddings_path = "/v1/embeddings";
    /// Name of the environment variable holding the bearer token.
    std::string api_key_env = "OPENAI_API_KEY";
    int timeout_seconds = 120;
};

struct RunConfig {
    fs::path registry;
    std::string task_id;
    icl::InferenceMode mode = icl::CheatSheetMode{};
    icl::DecodingConfig decoding = icl::Greedy{};
    std::string model_id;
    /// Model that writes cheat sheets; may differ from the inference model.
    std::string sheet_model_id;
    std::string embedding_model_id;
    std::vector<std::int64_t> seeds{0, 1, 2};
    cheatsheet::VariantId variant = cheatsheet::VariantId::cheat_sheet;
    TransportConfig transport;
    std::optional<TransportConfig> sheet_transport;
    fs::path cache_dir;
    fs::path output_dir;
    fs::path augmented_dir;
    fs::path sheet_dir;
    std::optional<fs::path> sheet_override_dir;
    llm::TokenScheme token_scheme{std::string(llm::kWhitespaceScheme), {}};
    std::uint64_t max_output_tokens = 0;
    std::size_t parallelism = 1;
    /// false runs on plain (x, y) demonstrations.
    bool use_rationales = true;
    /// false makes a missing sheet a precondition failure instead of creating it.
    bool create_sheets = true;
    std::optional<fs::path> prices;
    retrieval::Bm25Params bm25;
    std::size_t seed_triple_count = 3;

    fs::path augmented_pool_path() const { return augmented_dir / (task_id + ".jsonl"); }

    void validate() const {
        if (seeds.empty()) throw DataError("config: seeds must be nonempty");
        if (task_id.empty()) throw DataError("config: task_id is required");
        if (model_id.empty()) throw DataError("config: model_id is required");
        icl::validate_mode(mode);
        if (auto* sc = std::get_if<icl::SelfConsistency>(&decoding); sc && sc->n_samples < 2) {
            throw DataError("config: self_consistency needs n_samples >= 2");
        }
    }
};

/// Label stored in records and reports: the mode label plus whatever sets
/// this run apart from the default (decoding, sheet variant, sheet model).
inline std::string run_label(const RunConfig& c) {
    auto label = icl::mode_label(c.mode);
    if (std::holds_alternative<icl::CheatSheetMode>(c.mode)) {
        if (c.variant != cheatsheet::VariantId::cheat_sheet) label += "[" + std::string(cheatsheet::to_string(c.variant)) + "]";
        if (!c.sheet_model_id.empty() && c.sheet_model_id != c.model_id) label += "[sheet:" + c.sheet_model_id + "]";
    }
    if (!c.use_rationales) label += "[no_rationale]";
    if (!std::holds_alternative<icl::Greedy>(c.decoding)) label += "+" + icl::decoding_label(c.decoding);
    return label;
}

inline icl::InferenceMode mode_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "few_shot") return icl::FewShot{j.value("n", std::size_t{8})};
    if (kind == "many_shot") {
        if (j.contains("n") && j.at("n").is_string() && j.at("n") == "all") return icl::ManyShot{0};
        return icl::ManyShot{j.value("n", std::size_t{0})};
    }
    if (kind == "cheat_sheet") return icl::CheatSheetMode{j.value("format_examples", std::size_t{2}), std::nullopt};
    if (kind == "retrieval") {
        return icl::RetrievalMode{retrieval::method_from_string(j.value("method", std::string("bm25"))),
                                  j.value("k", retrieval::kDefaultK)};
    }
    throw DataError("unknown mode kind \"" + kind + "\"");
}

inline nlohmann::json mode_to_json(const icl::InferenceMode& mode) {
    struct V {
        nlohmann::json operator()(const icl::FewShot& m) const { return {{"kind", "few_shot"}, {"n", m.n}}; }
        nlohmann::json operator()(const icl::ManyShot& m) const { return {{"kind", "many_shot"}, {"n", m.n}}; }
        nlohmann::json operator()(const icl::CheatSheetMode& m) const {
            return {{"kind", "cheat_sheet"}, {"format_examples", m.format_examples}};
        }
        nlohmann::json operator()(const icl::RetrievalMode& m) const {
            return {{"kind", "retrieval"}, {"method", retrieval::to_string(m.method)}, {"k", m.k}};
        }
    };
    return std::visit(V{}, mode);
}

inline icl::DecodingConfig decoding_from_json(const nlohmann::json& j) {
    const auto kind = j.value("kind", std::string("greedy"));
    if (kind == "greedy") return icl::Greedy{};
    if (kind == "self_consistency") {
        return icl::SelfConsistency{j.value("temperature", 0.7), j.value("n_samples", std::uint32_t{3})};
    }
    throw DataError("unknown decoding kind \"" + kind + "\"");
}

inline TransportConfig transport_from_json(const nlohmann::json& j, const fs::path& base) {
    TransportConfig t;
    t.kind = transport_kind_from_string(j.value("kind", std::string("replay")));
    if (j.contains("fixture_dir")) t.fixture_dir = base / j.at("fixture_dir").get<std::string>();
    t.base_url = j.value("base_url", t.base_url);
    t.chat_path = j.value("chat_path", t.chat_path);
    t.embeddings_path = j.value("embeddings_path", t.embeddings_path);
    t.api_key_env = j.value("api_key_env", t.api_key_env);
    t.timeout_seconds = j.value("timeout_seconds", t.timeout_seconds);
    return t;
}

/// Reads a JSON run configuration. Relative paths resolve against the
/// config file's directory.
inline RunConfig parse_run_config(const nlohmann::json& j, const fs::path& base) {
    RunConfig c;
    try {
        c.registry = base / j.at("registry").get<std::string>();
        c.task_id = j.at("task_id").get<std::string>();
        if (j.contains("mode")) c.mode = mode_from_json(j.at("mode"));
        if (j.contains("decoding")) c.decoding = decoding_from_json(j.at("decoding"));
        c.model_id = j.at("model_id").get<std::string>();
        c.sheet_model_id = j.value("sheet_model_id", c.model_id);
        c.embedding_model_id = j.value("embedding_model_id", std::string{});
        if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::int64_t>>();
        c.variant = cheatsheet::variant_from_string(j.value("variant", std::string("cheat_sheet")));
        if (j.contains("transport")) c.transport = transport_from_json(j.at("transport"), base);
        if (j.contains("sheet_transport")) c.sheet_transport = transport_from_json(j.at("sheet_transport"), base);
        c.cache_dir = base / j.value("cache_dir", std::string("cache"));
        c.output_dir = base / j.value("output_dir", "runs/" + c.task_id);
        c.augmented_dir = base / j.value("augmented_dir", std::string("augmented"));
        c.sheet_dir = base / j.value("sheet_dir", std::string("sheets"));
        if (j.contains("sheet_override_dir")) c.sheet_override_dir = base / j.at("sheet_override_dir").get<std::string>();
        if (j.contains("token_scheme")) {
            const auto& ts = j.at("token_scheme");
            c.token_scheme.scheme_id = ts.at("id").get<std::string>();
            if (ts.contains("path")) c.token_scheme.vocabulary_source = (base / ts.at("path").get<std::string>()).string();
        }
        c.max_output_tokens = j.value("max_output_tokens", std::uint64_t{0});
        c.parallelism = j.value("parallelism", std::size_t{1});
        c.use_rationales = j.value("use_rationales", true);
        c.create_sheets = j.value("create_sheets", true);
        if (j.contains("prices")) c.prices = base / j.at("prices").get<std::string>();
        if (j.contains("bm25")) {
            c.bm25.k1 = j.at("bm25").value("k1", c.bm25.k1);
            c.bm25.b = j.at("bm25").value("b", c.bm25.b);
            c.bm25.epsilon = j.at("bm25").value("epsilon", c.bm25.epsilon);
        }
        c.seed_triple_count = j.value("seed_triple_count", c.seed_triple_count);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline RunConfig load_run_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in, nullptr, true, true);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("config " + path.string() + ": " + e.what());
    }
    return parse_run_config(j, path.parent_path());
}

} // namespace csicl::harness

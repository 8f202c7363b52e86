#pragma once

#include <csicl/datasets/dataset.hpp>
#include <csicl/demonstration.hpp>
#include <csicl/detail/parallel.hpp>
#include <csicl/detail/strings.hpp>
#include <csicl/llm/client.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace csicl::augment {

/// A hand-written (question, rationale, answer) triple used as a
/// rationale-generation exemplar.
struct SeedTriple {
    std::string input;
    std::string rationale;
    std::string target;
};

inline constexpr std::size_t kDefaultSeedCount = 3;

/// Seed file: {"task_id": ..., "triples": [{"question", "answer", "explanation"}, ...]}.
inline std::vector<SeedTriple> load_seed_triples(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open seed triples " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("seed triples " + path.string() + ": " + e.what());
    }
    if (!doc.contains("triples") || !doc.at("triples").is_array()) {
        throw DataError("seed triples " + path.string() + ": missing \"triples\" array");
    }
    std::vector<SeedTriple> out;
    const auto& arr = doc.at("triples");
    for (std::size_t i = 0; i < arr.size(); ++i) {
        SeedTriple t;
        for (auto [key, slot] : {std::pair{"question", &t.input}, std::pair{"explanation", &t.rationale},
                                 std::pair{"answer", &t.target}}) {
            if (!arr[i].contains(key) || !arr[i].at(key).is_string() || arr[i].at(key).get<std::string>().empty()) {
                throw IndexedError(i, std::string("missing or empty \"") + key + "\"", "seed triples " + path.string());
            }
            *slot = arr[i].at(key).get<std::string>();
        }
        out.push_back(std::move(t));
    }
    return out;
}

/// Renders the label-conditioned rationale prompt: each seed as
/// "Question/Answer/Explanation" followed by "###", then the target pair with
/// an open "Explanation:" slot.
inline std::string build_meta_prompt(std::span<const SeedTriple> seeds, const datasets::Example& target,
                                     std::size_t expected_seeds = kDefaultSeedCount) {
    if (seeds.empty()) throw PreconditionError("meta-prompt needs at least one seed triple");
    if (seeds.size() != expected_seeds) {
        throw PreconditionError("meta-prompt expects " + std::to_string(expected_seeds) + " seed triples, got " +
                                std::to_string(seeds.size()));
    }
    std::string out;
    for (const auto& s : seeds) {
        out += "Question: " + s.input + "\nAnswer: " + s.target + "\nExplanation: " + s.rationale + "\n###\n";
    }
    out += "Question: " + target.input + "\nAnswer: " + target.target + "\nExplanation:";
    return out;
}

struct AugmentOptions {
    std::string model_id;
    std::uint64_t max_output_tokens = 0;
    std::size_t expected_seeds = kDefaultSeedCount;
    /// Concurrent in-flight requests; output order never depends on it.
    std::size_t parallelism = 1;
};

/// One greedy completion per demonstration; the completion (trailing
/// whitespace removed) becomes the rationale.
inline std::vector<AugmentedDemonstration> augment_demonstrations(std::span<const datasets::Example> demos,
                                                                  std::span<const SeedTriple> seeds,
                                                                  llm::LlmClient& client,
                                                                  const AugmentOptions& options) {
    std::vector<AugmentedDemonstration> out(demos.size());
    if (demos.empty()) return out;
    // Validate the template once so a bad seed set fails before any call.
    (void)build_meta_prompt(seeds, demos.front(), options.expected_seeds);

    detail::parallel_for(demos.size(), options.parallelism, [&](std::size_t i) {
        llm::ChatRequest req;
        req.model_id = options.model_id;
        req.user_text = build_meta_prompt(seeds, demos[i], options.expected_seeds);
        req.temperature = 0.0;
        req.max_output_tokens = options.max_output_tokens;
        req.n_samples = 1;
        llm::ChatResponse resp;
        try {
            resp = client.complete(req);
        } catch (const Error& e) {
            throw IndexedError(i, e.what(), "augmenting demonstration");
        }
        std::string rationale(detail::trim_right(resp.texts.front()));
        if (detail::trim(rationale).empty()) {
            throw IndexedError(i, "model returned an empty rationale", "augmenting demonstration");
        }
        out[i] = {demos[i].input, std::move(rationale), demos[i].target};
    });
    return out;
}

/// JSON-lines, one {"task_id", "index", "input", "rationale", "target"} per line.
inline void save_augmented_pool(const std::filesystem::path& path, const std::string& task_id,
                                std::span<const AugmentedDemonstration> pool) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        nlohmann::json line = {{"task_id", task_id},
                               {"index", i},
                               {"input", pool[i].input},
                               {"rationale", pool[i].rationale},
                               {"target", pool[i].target}};
        out << line.dump() << '\n';
    }
}

inline std::vector<AugmentedDemonstration> load_augmented_pool(const std::filesystem::path& path,
                                                               const std::string& task_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open augmented pool " + path.string());
    std::vector<AugmentedDemonstration> pool;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw IndexedError(lineno, e.what(), "augmented pool " + path.string());
        }
        if (j.value("task_id", task_id) != task_id) {
            throw IndexedError(lineno, "belongs to task " + j.value("task_id", std::string{}),
                               "augmented pool " + path.string());
        }
        if (j.value("index", lineno) != lineno) {
            throw IndexedError(lineno, "out of order", "augmented pool " + path.string());
        }
        pool.push_back({j.at("input").get<std::string>(), j.at("rationale").get<std::string>(),
                        j.at("target").get<std::string>()});
        ++lineno;
    }
    return pool;
}

} // namespace csicl::augment

#pragma once

// Regenerates the replay fixtures of the synthetic task by running every
// shipped config against the simulated model with the fixture dir as cache.

#include "simulated_model.hpp"

#include <csicl/csicl.hpp>

#include <array>
#include <filesystem>

namespace csicl::sim {

inline constexpr std::array kSyntheticConfigs = {
    "cheat_sheet",          "few_shot",          "many_shot",
    "retrieval_bm25",       "retrieval_cosine",  "retrieval_set_coverage",
    "cheat_sheet_sc",       "cheat_sheet_textbook", "cheat_sheet_transfer",
};

/// Points every writable directory of `c` below `work`.
inline void relocate(harness::RunConfig& c, const std::filesystem::path& work, const std::string& name) {
    c.cache_dir = work / "cache";
    c.output_dir = work / "runs" / name;
    c.augmented_dir = work / "augmented";
    c.sheet_dir = work / c.sheet_dir.filename();
}

/// Returns the number of simulated model calls.
inline std::size_t record_synthetic_fixtures(const std::filesystem::path& synthetic_dir,
                                             const std::filesystem::path& fixture_out,
                                             const std::filesystem::path& work) {
    auto model = std::make_shared<SimulatedTransport>();
    llm::ClientOptions opts;
    opts.parallelism = 4;
    llm::LlmClient client(model, fixture_out, opts);
    bool augmented = false;
    for (const auto* name : kSyntheticConfigs) {
        auto config = harness::load_run_config(synthetic_dir / (std::string(name) + ".json"));
        relocate(config, work, name);
        const auto registry = datasets::TaskRegistry::load(config.registry);
        if (!augmented) {
            harness::augment_task(config, registry, client);
            augmented = true;
        }
        harness::run_experiment(config, registry, {client, client});
    }
    return model->calls();
}

} // namespace csicl::sim

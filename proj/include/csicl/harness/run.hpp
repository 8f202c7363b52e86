#pragma once

#include <csicl/augment/augment.hpp>
#include <csicl/cheatsheet/cheatsheet.hpp>
#include <csicl/datasets/registry.hpp>
#include <csicl/detail/parallel.hpp>
#include <csicl/harness/config.hpp>
#include <csicl/harness/report.hpp>
#include <csicl/icl/inference.hpp>
#include <csicl/llm/client.hpp>
#include <csicl/retrieval/retrieval.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace csicl::harness {

/// Clients for inference and for sheet creation. They may be the same object.
struct Clients {
    llm::LlmClient& inference;
    llm::LlmClient& sheet;
};

struct RunResult {
    std::vector<RunRecord> records;
    /// Sheets used per seed (cheat_sheet mode only).
    std::map<std::int64_t, cheatsheet::CheatSheet> sheets;
    /// Records found on disk from an earlier, interrupted run.
    std::size_t resumed = 0;
};

/// Everything a run needs that can be checked without calling a model.
struct RunInputs {
    datasets::TaskEntry task;
    std::vector<datasets::Example> examples;
    std::vector<AugmentedDemonstration> pool;  // canonical file order
    std::vector<datasets::Example> test;
};

namespace detail {

inline RunInputs check_preconditions(const RunConfig& config, const datasets::TaskRegistry& registry,
                                     const llm::TokenCounter& counter, const cheatsheet::SheetStore& store) {
    std::vector<std::string> problems;
    RunInputs in;
    try {
        config.validate();
    } catch (const Error& e) {
        problems.push_back(e.what());
    }
    if (!registry.contains(config.task_id)) {
        problems.push_back("task \"" + config.task_id + "\" is not registered");
        throw PreconditionError("run cannot start:\n  - " + csicl::detail::join(problems, "\n  - "));
    }
    in.task = registry.at(config.task_id);
    const auto& spec = in.task.spec;
    try {
        in.examples = datasets::load_task(in.task.path, spec);
        if (in.examples.size() != spec.total_size()) {
            problems.push_back("task file has " + std::to_string(in.examples.size()) + " records, registry expects " +
                               std::to_string(spec.total_size()));
        }
    } catch (const Error& e) {
        problems.push_back(e.what());
    }
    if (problems.empty()) {
        const auto canonical = datasets::split_examples(in.examples, spec, 0);
        in.test = canonical.test;
        std::vector<datasets::Example> pool_examples(in.examples.begin(),
                                                     in.examples.begin() + static_cast<std::ptrdiff_t>(spec.demo_pool_size));
        if (config.use_rationales) {
            const auto path = config.augmented_pool_path();
            if (!std::filesystem::exists(path)) {
                problems.push_back("augmented pool " + path.string() + " is missing (run `augment` first)");
            } else {
                try {
                    in.pool = augment::load_augmented_pool(path, config.task_id);
                    if (in.pool.size() != pool_examples.size()) {
                        problems.push_back("augmented pool has " + std::to_string(in.pool.size()) +
                                           " demonstrations, task pool has " + std::to_string(pool_examples.size()));
                    } else {
                        for (std::size_t i = 0; i < pool_examples.size(); ++i) {
                            if (in.pool[i].example() != pool_examples[i] || !in.pool[i].has_rationale()) {
                                problems.push_back("augmented pool entry " + std::to_string(i) +
                                                   " does not match the task file or lacks a rationale");
                                break;
                            }
                        }
                    }
                } catch (const Error& e) {
                    problems.push_back(e.what());
                }
            }
        } else {
            for (const auto& ex : pool_examples) in.pool.push_back(AugmentedDemonstration::plain(ex));
        }
    }
    const auto pool_size = spec.demo_pool_size;
    if (auto* f = std::get_if<icl::FewShot>(&config.mode); f && f->n > pool_size) {
        problems.push_back("few_shot n=" + std::to_string(f->n) + " exceeds the pool of " + std::to_string(pool_size));
    }
    if (auto* m = std::get_if<icl::ManyShot>(&config.mode); m && m->n > pool_size) {
        problems.push_back("many_shot n=" + std::to_string(m->n) + " exceeds the pool of " + std::to_string(pool_size));
    }
    if (auto* c = std::get_if<icl::CheatSheetMode>(&config.mode)) {
        if (c->format_examples > pool_size) problems.push_back("format_examples exceeds the pool size");
        if (!config.create_sheets) {
            for (auto seed : config.seeds) {
                if (!store.find(config.task_id, seed, config.variant, counter)) {
                    problems.push_back("no cheat sheet for seed " + std::to_string(seed) + " and create_sheets is off");
                }
            }
        }
        if (config.sheet_model_id.empty()) problems.push_back("sheet_model_id is empty");
    }
    if (auto* r = std::get_if<icl::RetrievalMode>(&config.mode);
        r && r->method == retrieval::Method::cosine && config.embedding_model_id.empty()) {
        problems.push_back("cosine retrieval needs embedding_model_id");
    }
    if (!problems.empty()) {
        throw PreconditionError("run cannot start:\n  - " + csicl::detail::join(problems, "\n  - "));
    }
    return in;
}

/// Per-test retrieval over demonstration inputs (not rationales).
class Retriever {
public:
    Retriever(const icl::RetrievalMode& mode, std::span<const AugmentedDemonstration> pool, const RunConfig& config,
              llm::LlmClient& client)
        : mode_(mode), client_(client), config_(config) {
        for (const auto& d : pool) docs_.push_back(d.input);
        if (mode.method == retrieval::Method::bm25) {
            bm25_ = retrieval::build_bm25(docs_, config.bm25);
        } else if (mode.method == retrieval::Method::cosine) {
            emb_ = retrieval::EmbeddingIndex::build(client.embed(config.embedding_model_id, docs_));
        }
    }

    retrieval::RetrievalResult retrieve(const std::string& query) const {
        switch (mode_.method) {
        case retrieval::Method::bm25: return retrieval::bm25_topk(*bm25_, query, mode_.k);
        case retrieval::Method::cosine: {
            const std::vector<std::string> q{query};
            const auto v = client_.embed(config_.embedding_model_id, q).front();
            return retrieval::cosine_topk(*emb_, v, mode_.k);
        }
        case retrieval::Method::set_coverage: return retrieval::set_coverage_topk(docs_, query, mode_.k);
        }
        throw PreconditionError("unknown retrieval method");
    }

private:
    icl::RetrievalMode mode_;
    llm::LlmClient& client_;
    const RunConfig& config_;
    std::vector<std::string> docs_;
    std::optional<retrieval::Bm25Index> bm25_;
    std::optional<retrieval::EmbeddingIndex> emb_;
};

} // namespace detail

inline std::filesystem::path records_path(const RunConfig& c) { return c.output_dir / "records.jsonl"; }

/// Runs every (seed, test input) pair of the configured experiment.
///
/// Per seed: shuffle the pool, build the mode's context (load or create the
/// sheet, or retrieve per test input), assemble and predict each test input.
/// Records are appended to records.jsonl as they complete; a rerun picks up
/// where an interrupted one stopped. The file is rewritten in (seed,
/// test_index) order at the end.
inline RunResult run_experiment(const RunConfig& config, const datasets::TaskRegistry& registry, Clients clients) {
    const auto counter = llm::make_token_counter(config.token_scheme);
    cheatsheet::SheetStore store(config.sheet_dir, config.sheet_override_dir);
    const auto in = detail::check_preconditions(config, registry, *counter, store);
    const auto& spec = in.task.spec;
    const auto label = run_label(config);
    const auto kind = icl::mode_kind(config.mode);

    std::filesystem::create_directories(config.output_dir);
    const auto rec_path = records_path(config);

    RunResult result;
    std::map<std::pair<std::int64_t, std::size_t>, RunRecord> done;
    for (auto& r : read_records(rec_path)) {
        if (r.task_id != config.task_id || r.mode != label) {
            throw PreconditionError("output dir " + config.output_dir.string() + " holds records of " + r.task_id + "/" +
                                    r.mode + "; use a separate output dir per run");
        }
        done.emplace(std::pair{r.seed, r.test_index}, std::move(r));
    }
    result.resumed = done.size();
    {
        std::vector<RunRecord> kept;
        for (const auto& [_, r] : done) kept.push_back(r);
        write_records(rec_path, kept);
    }
    std::ofstream sink(rec_path, std::ios::binary | std::ios::app);
    if (!sink) throw Error("cannot append to " + rec_path.string());

    std::optional<detail::Retriever> retriever;
    if (auto* rm = std::get_if<icl::RetrievalMode>(&config.mode)) {
        retriever.emplace(*rm, in.pool, config, clients.inference);
    }

    const icl::PredictOptions popts{config.model_id, config.max_output_tokens, spec.answer_format};
    for (const auto seed : config.seeds) {
        std::vector<std::size_t> todo;
        for (std::size_t t = 0; t < in.test.size(); ++t) {
            if (!done.contains({seed, t})) todo.push_back(t);
        }
        if (todo.empty()) continue;
        const auto demos = datasets::shuffle_demos(in.pool, seed);

        icl::InferenceMode mode = config.mode;
        std::optional<std::string> sheet_source;
        if (auto* cm = std::get_if<icl::CheatSheetMode>(&mode)) {
            auto sheet = store.find(config.task_id, seed, config.variant, *counter);
            if (!sheet) {
                sheet = cheatsheet::create_cheat_sheet(demos, cheatsheet::builtin_variant(config.variant), clients.sheet,
                                                       seed, {config.task_id, config.sheet_model_id, config.max_output_tokens},
                                                       *counter);
                store.save(*sheet, *counter);
            }
            sheet_source = std::string(cheatsheet::to_string(sheet->source));
            result.sheets[seed] = *sheet;
            cm->sheet = std::move(*sheet);
        }

        const std::size_t chunk = std::max<std::size_t>(config.parallelism, 1);
        for (std::size_t start = 0; start < todo.size(); start += chunk) {
            const std::size_t count = std::min(chunk, todo.size() - start);
            std::vector<RunRecord> batch(count);
            csicl::detail::parallel_for(count, config.parallelism, [&](std::size_t b) {
                const auto t = todo[start + b];
                const auto& test = in.test[t];
                icl::AssembledPrompt prompt;
                if (retriever) {
                    const auto hit = retriever->retrieve(test.input);
                    std::vector<AugmentedDemonstration> chosen;
                    for (auto idx : hit.demo_indices) chosen.push_back(in.pool[idx]);
                    chosen = datasets::shuffle_demos(std::move(chosen), seed);
                    prompt = icl::assemble_prompt(mode, demos, test, t, *counter,
                                                  std::span<const AugmentedDemonstration>(chosen));
                } else {
                    prompt = icl::assemble_prompt(mode, demos, test, t, *counter);
                }
                auto outcome = icl::predict(prompt, config.decoding, clients.inference, test.target, popts);
                RunRecord r;
                r.task_id = config.task_id;
                r.mode = label;
                r.mode_kind = kind;
                r.seed = seed;
                r.test_index = t;
                r.target = test.target;
                if (counter->provider_reported()) {
                    r.prompt_tokens = outcome.response.prompt_tokens;
                    r.completion_tokens = outcome.response.completion_tokens;
                } else {
                    r.prompt_tokens = prompt.input_token_count;
                    std::uint64_t out_tokens = 0;
                    for (const auto& s : outcome.response.texts) out_tokens += counter->count(s);
                    r.completion_tokens = out_tokens;
                }
                r.cached_prompt_tokens = outcome.response.cached_prompt_tokens;
                r.latency_seconds = outcome.response.latency_seconds;
                r.prediction = std::move(outcome.prediction);
                r.sheet_source = sheet_source;
                batch[b] = std::move(r);
            });
            for (auto& r : batch) {
                sink << to_json(r).dump() << '\n';
                sink.flush();
                done.emplace(std::pair{r.seed, r.test_index}, std::move(r));
            }
        }
    }
    sink.close();

    // Canonical order: config seed order, then test index.
    for (const auto seed : config.seeds) {
        for (std::size_t t = 0; t < in.test.size(); ++t) {
            auto it = done.find({seed, t});
            if (it != done.end()) result.records.push_back(it->second);
        }
    }
    write_records(rec_path, result.records);
    return result;
}

/// Writes report.json and report.md for one run's records.
inline EvalReport write_run_report(const RunConfig& config, std::span<const RunRecord> records) {
    const PriceTable prices = config.prices ? load_price_table(*config.prices) : PriceTable{config.model_id, 0.0, std::nullopt, 0.0};
    const auto rep = compute_report(records, prices);
    const std::vector<EvalReport> one{rep};
    std::ofstream(config.output_dir / "report.json", std::ios::binary | std::ios::trunc)
        << emit_report(one, ReportFormat::json);
    std::ofstream(config.output_dir / "report.md", std::ios::binary | std::ios::trunc)
        << emit_report(one, ReportFormat::markdown_table);
    return rep;
}

/// Augments the task's demonstration pool and writes it where runs expect it.
inline std::vector<AugmentedDemonstration> augment_task(const RunConfig& config, const datasets::TaskRegistry& registry,
                                                        llm::LlmClient& client) {
    const auto& task = registry.at(config.task_id);
    if (!task.seed_triples) {
        throw PreconditionError("task " + config.task_id + " has no seed_triples file in the registry");
    }
    const auto seeds = augment::load_seed_triples(*task.seed_triples);
    const auto examples = datasets::load_task(task.path, task.spec);
    const auto split = datasets::split_examples(examples, task.spec, 0);
    std::vector<datasets::Example> pool(examples.begin(),
                                        examples.begin() + static_cast<std::ptrdiff_t>(task.spec.demo_pool_size));
    auto augmented = augment::augment_demonstrations(
        pool, seeds, client, {config.model_id, config.max_output_tokens, config.seed_triple_count, config.parallelism});
    augment::save_augmented_pool(config.augmented_pool_path(), config.task_id, augmented);
    return augmented;
}

} // namespace csicl::harness

#pragma once

#include <csicl/cheatsheet/cheatsheet.hpp>
#include <csicl/demonstration.hpp>
#include <csicl/icl/answer.hpp>
#include <csicl/llm/client.hpp>
#include <csicl/llm/tokens.hpp>
#include <csicl/retrieval/retrieval.hpp>

#include <optional>
#include <sstream>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace csicl::icl {

/// Inference-time system prompt.
inline constexpr std::string_view kSystemPrompt =
    "Answer the question by following the provided examples. Ensure that your response ends with Answer: and your "
    "final answer.";

/// Between the conditioning context and the test question.
inline constexpr std::string_view kContextSeparator = "\n\n";

struct FewShot {
    std::size_t n = 8;
};

/// n == 0 means the whole pool.
struct ManyShot {
    std::size_t n = 0;
};

struct CheatSheetMode {
    std::size_t format_examples = 2;
    std::optional<cheatsheet::CheatSheet> sheet;
};

struct RetrievalMode {
    retrieval::Method method = retrieval::Method::bm25;
    std::size_t k = retrieval::kDefaultK;
};

using InferenceMode = std::variant<FewShot, ManyShot, CheatSheetMode, RetrievalMode>;

inline std::string mode_kind(const InferenceMode& mode) {
    struct V {
        std::string operator()(const FewShot&) const { return "few_shot"; }
        std::string operator()(const ManyShot&) const { return "many_shot"; }
        std::string operator()(const CheatSheetMode&) const { return "cheat_sheet"; }
        std::string operator()(const RetrievalMode&) const { return "retrieval"; }
    };
    return std::visit(V{}, mode);
}

/// Short human-readable label, e.g. "few_shot(8)", "cheat_sheet(fmt=2)".
inline std::string mode_label(const InferenceMode& mode) {
    struct V {
        std::string operator()(const FewShot& m) const { return "few_shot(" + std::to_string(m.n) + ")"; }
        std::string operator()(const ManyShot& m) const {
            return m.n == 0 ? std::string("many_shot(all)") : "many_shot(" + std::to_string(m.n) + ")";
        }
        std::string operator()(const CheatSheetMode& m) const {
            return "cheat_sheet(fmt=" + std::to_string(m.format_examples) + ")";
        }
        std::string operator()(const RetrievalMode& m) const {
            return "retrieval(" + std::string(retrieval::to_string(m.method)) + ",k=" + std::to_string(m.k) + ")";
        }
    };
    return std::visit(V{}, mode);
}

inline void validate_mode(const InferenceMode& mode) {
    if (auto* f = std::get_if<FewShot>(&mode); f && f->n < 1) throw PreconditionError("few_shot needs n >= 1");
    if (auto* r = std::get_if<RetrievalMode>(&mode); r && r->k < 1) throw PreconditionError("retrieval needs k >= 1");
}

struct AssembledPrompt {
    std::string system_text;
    std::string user_text;
    /// Tokens of system_text + user_text under the active scheme; 0 when counting is provider-reported.
    std::size_t input_token_count = 0;
    InferenceMode mode;
    std::size_t test_index = 0;
};

inline std::string render_demo_for_inference(const AugmentedDemonstration& demo) { return render_demo_block(demo); }

namespace detail {

inline std::string render_demos(std::span<const AugmentedDemonstration> demos) {
    std::string out;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        if (i) out += kDemoSeparator;
        out += render_demo_for_inference(demos[i]);
    }
    return out;
}

} // namespace detail

/// Builds the prompt for one test input.
///   few_shot / many_shot: the first n demos of the seed-ordered pool
///   cheat_sheet:          sheet text, then the first format_examples demos
///   retrieval:            the demos named by `retrieved`, in the given order
/// followed by a blank line and "Question: {x}\nAnswer:".
inline AssembledPrompt assemble_prompt(const InferenceMode& mode, std::span<const AugmentedDemonstration> demos_in_seed_order,
                                       const datasets::Example& test, std::size_t test_index,
                                       const llm::TokenCounter& counter,
                                       std::optional<std::span<const AugmentedDemonstration>> retrieved = std::nullopt) {
    validate_mode(mode);
    std::string context;
    auto take_first = [&](std::size_t n, const char* what) {
        if (demos_in_seed_order.size() < n) {
            throw PreconditionError(std::string(what) + " needs " + std::to_string(n) + " demonstrations, pool has " +
                                    std::to_string(demos_in_seed_order.size()));
        }
        return demos_in_seed_order.first(n);
    };
    if (auto* f = std::get_if<FewShot>(&mode)) {
        context = detail::render_demos(take_first(f->n, "few_shot"));
    } else if (auto* m = std::get_if<ManyShot>(&mode)) {
        const auto n = m->n == 0 ? demos_in_seed_order.size() : m->n;
        if (n == 0) throw PreconditionError("many_shot needs a nonempty pool");
        context = detail::render_demos(take_first(n, "many_shot"));
    } else if (auto* c = std::get_if<CheatSheetMode>(&mode)) {
        if (!c->sheet) throw PreconditionError("cheat_sheet mode needs a sheet");
        context = c->sheet->text;
        if (c->format_examples > 0) {
            context += kDemoSeparator;
            context += detail::render_demos(take_first(c->format_examples, "cheat_sheet format examples"));
        }
    } else {
        if (!retrieved) throw PreconditionError("retrieval mode needs retrieved demonstrations");
        if (retrieved->empty()) throw PreconditionError("retrieval returned no demonstrations");
        context = detail::render_demos(*retrieved);
    }
    AssembledPrompt p;
    p.system_text = std::string(kSystemPrompt);
    p.user_text = context + std::string(kContextSeparator) + "Question: " + test.input + "\nAnswer:";
    p.input_token_count = counter.provider_reported() ? 0 : counter.count(p.system_text) + counter.count(p.user_text);
    p.mode = mode;
    p.test_index = test_index;
    return p;
}

struct Greedy {};

struct SelfConsistency {
    double temperature = 0.7;
    std::uint32_t n_samples = 3;
};

using DecodingConfig = std::variant<Greedy, SelfConsistency>;

inline std::string decoding_label(const DecodingConfig& d) {
    if (auto* sc = std::get_if<SelfConsistency>(&d)) {
        std::ostringstream out;
        out << "self_consistency(t=" << sc->temperature << ",n=" << sc->n_samples << ")";
        return out.str();
    }
    return "greedy";
}

struct Prediction {
    std::vector<std::string> samples;
    std::vector<std::optional<std::string>> parsed;
    std::optional<std::string> final_answer;
    bool correct = false;
    bool format_error = false;

    friend bool operator==(const Prediction&, const Prediction&) = default;
};

/// Scores parsed samples against a gold target.
inline Prediction score_samples(std::vector<std::string> samples, std::string_view target, datasets::AnswerFormat format) {
    Prediction p;
    p.samples = std::move(samples);
    std::vector<std::string> votes;
    for (const auto& s : p.samples) {
        p.parsed.push_back(parse_answer(s, format));
        if (p.parsed.back()) votes.push_back(*p.parsed.back());
    }
    if (votes.empty()) {
        p.format_error = true;
        p.correct = false;
        return p;
    }
    p.final_answer = votes.size() == 1 ? votes.front() : majority_vote(votes);
    p.correct = *p.final_answer == normalize_target(target, format);
    return p;
}

struct PredictOutcome {
    Prediction prediction;
    llm::ChatResponse response;
};

struct PredictOptions {
    std::string model_id;
    std::uint64_t max_output_tokens = 0;
    datasets::AnswerFormat answer_format = datasets::AnswerFormat::free_text;
};

/// Greedy: one sample at temperature 0. Self-consistency: n samples at the
/// configured temperature, majority vote over those that parse.
inline PredictOutcome predict(const AssembledPrompt& prompt, const DecodingConfig& decoding, llm::LlmClient& client,
                              std::string_view target, const PredictOptions& options) {
    llm::ChatRequest req;
    req.model_id = options.model_id;
    req.system_text = prompt.system_text;
    req.user_text = prompt.user_text;
    req.max_output_tokens = options.max_output_tokens;
    if (auto* sc = std::get_if<SelfConsistency>(&decoding)) {
        if (sc->n_samples < 2) throw PreconditionError("self-consistency needs n_samples >= 2");
        req.temperature = sc->temperature;
        req.n_samples = sc->n_samples;
    } else {
        req.temperature = 0.0;
        req.n_samples = 1;
    }
    auto resp = client.complete(req);
    auto pred = score_samples(resp.texts, target, options.answer_format);
    return {std::move(pred), std::move(resp)};
}

} // namespace csicl::icl

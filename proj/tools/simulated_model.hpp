#pragma once

// Deterministic stand-in for a chat model on the synthetic boolean
// expressions task. Used to record replay fixtures and in tests.

#include <csicl/icl/inference.hpp>
#include <csicl/llm/transport.hpp>
#include <csicl/retrieval/retrieval.hpp>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace csicl::sim {

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Evaluates "True and not ( False or True )" style expressions with the
/// usual precedence (not > and > or). nullopt on anything else.
class BoolEval {
public:
    static std::optional<bool> eval(std::string_view expr) {
        BoolEval p;
        std::istringstream in{std::string(expr)};
        for (std::string w; in >> w;) p.toks_.push_back(w);
        if (!p.toks_.empty() && p.toks_.back() == "is") p.toks_.pop_back();
        auto v = p.parse_or();
        if (!v || p.pos_ != p.toks_.size()) return std::nullopt;
        return v;
    }

private:
    std::optional<bool> parse_or() {
        auto l = parse_and();
        while (l && peek("or")) {
            ++pos_;
            auto r = parse_and();
            if (!r) return std::nullopt;
            l = *l || *r;
        }
        return l;
    }
    std::optional<bool> parse_and() {
        auto l = parse_not();
        while (l && peek("and")) {
            ++pos_;
            auto r = parse_not();
            if (!r) return std::nullopt;
            l = *l && *r;
        }
        return l;
    }
    std::optional<bool> parse_not() {
        if (peek("not")) {
            ++pos_;
            auto v = parse_not();
            if (!v) return std::nullopt;
            return !*v;
        }
        return parse_atom();
    }
    std::optional<bool> parse_atom() {
        if (pos_ >= toks_.size()) return std::nullopt;
        const auto t = toks_[pos_++];
        if (t == "True") return true;
        if (t == "False") return false;
        if (t == "(") {
            auto v = parse_or();
            if (!v || !peek(")")) return std::nullopt;
            ++pos_;
            return v;
        }
        return std::nullopt;
    }
    bool peek(std::string_view w) const { return pos_ < toks_.size() && toks_[pos_] == w; }

    std::vector<std::string> toks_;
    std::size_t pos_ = 0;
};

inline std::string bool_word(bool b) { return b ? "True" : "False"; }

inline std::size_t word_count(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::size_t n = 0;
    for (std::string w; in >> w;) ++n;
    return n;
}

/// Text after the last line starting with `label` (up to the next newline).
inline std::string last_field(std::string_view text, std::string_view label) {
    std::string needle = "\n" + std::string(label);
    auto pos = text.rfind(needle);
    std::size_t start;
    if (pos == std::string_view::npos) {
        if (text.substr(0, label.size()) != label) return {};
        start = label.size();
    } else {
        start = pos + needle.size();
    }
    auto end = text.find('\n', start);
    auto out = std::string(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    while (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
}

class SimulatedTransport final : public llm::Transport {
public:
    static constexpr std::size_t kEmbeddingDim = 16;
    static constexpr const char* kCreatedAt = "2026-01-01T00:00:00Z";

    llm::ChatResponse complete(const llm::ChatRequest& request) override {
        ++calls_;
        llm::ChatResponse r;
        const auto& u = request.user_text;
        for (std::uint32_t i = 0; i < request.n_samples; ++i) {
            const auto salt = request.temperature > 0 ? "#" + std::to_string(i) : std::string{};
            if (request.system_text == icl::kSystemPrompt) {
                r.texts.push_back(answer(u, salt));
            } else if (u.ends_with("Explanation:")) {
                r.texts.push_back(rationale(u));
            } else {
                r.texts.push_back(sheet(request, u));
            }
        }
        r.prompt_tokens = word_count(request.system_text) + word_count(u);
        for (const auto& t : r.texts) r.completion_tokens += word_count(t);
        // Pretend the provider had the system prompt and first part cached.
        r.cached_prompt_tokens = r.prompt_tokens / 4;
        r.latency_seconds = 0.05 + 0.001 * static_cast<double>(r.prompt_tokens / 10);
        r.created_at = kCreatedAt;
        return r;
    }

    std::vector<llm::Embedding> embed(const std::string&, std::span<const std::string> texts) override {
        ++calls_;
        std::vector<llm::Embedding> out;
        for (const auto& t : texts) {
            llm::Embedding v(kEmbeddingDim, 0.0);
            v[0] = 0.125;
            for (const auto& w : retrieval::tokenize(t)) v[fnv1a(w) % kEmbeddingDim] += 1.0;
            out.push_back(std::move(v));
        }
        return out;
    }

    std::string_view name() const override { return "simulated"; }

    std::size_t calls() const noexcept { return calls_; }

private:
    static std::string rationale(const std::string& u) {
        const auto question = last_field(u, "Question: ");
        const auto target = last_field(u, "Answer: ");
        std::string expr = question.ends_with(" is") ? question.substr(0, question.size() - 3) : question;
        std::ostringstream o;
        o << "Brackets first, then \"not\", then \"and\", then \"or\". Reading " << expr << " this way leaves "
          << target << ". So the answer is " << target << ".";
        return o.str();
    }

    static std::string sheet(const llm::ChatRequest& req, const std::string& u) {
        const auto blocks = csicl::detail::count_occurrences(u, "Question: ");
        const auto first_q = [&] {
            auto p = u.find("Question: ");
            if (p == std::string::npos) return std::string{};
            auto e = u.find('\n', p);
            return u.substr(p + 10, e - p - 10);
        }();
        std::ostringstream o;
        o << "Boolean expression rules (" << blocks << " examples, " << req.model_id << ")\n"
          << "- Evaluate brackets first.\n"
          << "- Precedence: not > and > or.\n"
          << "- \"not not X\" is X.\n"
          << "- \"X or True\" is True; \"X and False\" is False.\n"
          << "- Hardest example: " << first_q << "\n"
          << "- Pool fingerprint: " << std::hex << fnv1a(u) % 0x10000;
        return o.str();
    }

    static std::string answer(const std::string& u, const std::string& salt) {
        const auto question = last_field(u, "Question: ");
        const auto truth = BoolEval::eval(question);
        const auto h = fnv1a(u + salt);
        if (!truth || h % 13 == 0) return "The expression is ambiguous to me.";
        const bool wrong = h % 5 == 0;
        const auto ans = bool_word(wrong ? !*truth : *truth);
        return "Evaluate brackets, then not, and, or.\nAnswer: " + ans;
    }

    std::atomic<std::size_t> calls_{0};
};

} // namespace csicl::sim

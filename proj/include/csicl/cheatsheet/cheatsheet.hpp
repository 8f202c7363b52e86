#pragma once

#include <csicl/demonstration.hpp>
#include <csicl/detail/strings.hpp>
#include <csicl/detail/time.hpp>
#include <csicl/llm/client.hpp>
#include <csicl/llm/tokens.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace csicl::cheatsheet {

enum class VariantId { cheat_sheet, textbook, textual_summary, concise_instruction };

inline constexpr std::array kAllVariants = {VariantId::cheat_sheet, VariantId::textbook,
                                            VariantId::textual_summary, VariantId::concise_instruction};

inline std::string_view to_string(VariantId v) {
    switch (v) {
    case VariantId::cheat_sheet: return "cheat_sheet";
    case VariantId::textbook: return "textbook";
    case VariantId::textual_summary: return "textual_summary";
    case VariantId::concise_instruction: return "concise_instruction";
    }
    return "cheat_sheet";
}

inline VariantId variant_from_string(std::string_view s) {
    for (auto v : kAllVariants) {
        if (to_string(v) == s) return v;
    }
    throw DataError("unknown prompt variant \"" + std::string(s) + "\"");
}

inline constexpr std::string_view kDemosSlot = "{demos}";

struct PromptVariant {
    VariantId id = VariantId::cheat_sheet;
    std::string template_text;

    void validate() const {
        if (detail::count_occurrences(template_text, kDemosSlot) != 1) {
            throw PreconditionError("prompt template for " + std::string(to_string(id)) +
                                    " must contain exactly one {demos} slot");
        }
    }
};

/// The built-in creation prompts. cheat_sheet is the default.
inline PromptVariant builtin_variant(VariantId id) {
    switch (id) {
    case VariantId::cheat_sheet:
        return {id,
                "Create a cheat sheet based on the examples below. You will be asked to answer questions similar "
                "to these examples during the test, without being allowed to refer to the examples at that time. "
                "Your task here is to make a cheat sheet that will help you answer such problems correctly. First, "
                "carefully read the examples below and identify which ones you find most difficult to answer.\n\n"
                "{demos}\n\n"
                "Now, create a cheat sheet to help you solve the difficult examples. Exclude any content that is "
                "easy for you, and only include specific, detailed points to address the challenging ones."};
    case VariantId::textbook:
        return {id,
                "Create a textbook based on the examples below. You will be asked to answer questions similar to "
                "these examples during the test, without being allowed to refer to the examples at that time. Your "
                "task here is to make a textbook that will help you answer such problems correctly. First, carefully "
                "read the examples below and identify the knowledge or reasoning steps required to answer similar "
                "questions correctly.\n\n"
                "{demos}\n\n"
                "Now, create a textbook that thoroughly describes the knowledge or reasoning steps needed to answer "
                "similar questions correctly."};
    case VariantId::textual_summary:
        return {id,
                "Create a textual summary based on the examples below. You will be asked to answer questions similar "
                "to these examples during the test, without being allowed to refer to the examples at that time. "
                "Your task here is to make a textual summary that will help you answer such problems correctly. "
                "First, carefully read the examples below and identify which ones you find most difficult to "
                "answer.\n\n"
                "{demos}\n\n"
                "Now, create a textual summary to help you solve the difficult examples. Exclude any content that is "
                "easy for you, and only include specific, detailed points to address the challenging ones."};
    case VariantId::concise_instruction:
        return {id,
                "You will be asked to answer questions similar to the examples below, but you will not be allowed "
                "to refer to the examples during the test. First, carefully read the examples below and identify "
                "which ones you find most difficult to answer correctly.\n\n"
                "{demos}\n\n"
                "Now, create a cheat sheet to help you address the difficult ones. Exclude any content that is easy "
                "for you, and include only specific, detailed points to address the difficult ones."};
    }
    throw PreconditionError("unknown variant");
}

enum class SheetSource { generated, manual_override };

inline std::string_view to_string(SheetSource s) {
    return s == SheetSource::generated ? "generated" : "manual_override";
}

inline SheetSource sheet_source_from_string(std::string_view s) {
    if (s == "generated") return SheetSource::generated;
    if (s == "manual_override") return SheetSource::manual_override;
    throw DataError("unknown sheet source \"" + std::string(s) + "\"");
}

struct Provenance {
    std::size_t n_demos = 0;
    std::string model_id;
    VariantId variant_id = VariantId::cheat_sheet;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct CheatSheet {
    std::string task_id;
    std::int64_t seed = 0;
    std::string text;
    SheetSource source = SheetSource::generated;
    Provenance created_from;
    std::size_t token_count = 0;
    std::string created_at;

    friend bool operator==(const CheatSheet&, const CheatSheet&) = default;
};

inline std::string render_demos_block(std::span<const AugmentedDemonstration> demos) {
    if (demos.empty()) throw PreconditionError("cannot render an empty demonstration block");
    std::string out;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        if (i) out += kDemoSeparator;
        out += render_demo_block(demos[i]);
    }
    return out;
}

/// Substitutes already-rendered demonstration text into the variant's slot.
inline std::string fill_template(const PromptVariant& variant, std::string_view demos_text) {
    variant.validate();
    const auto pos = variant.template_text.find(kDemosSlot);
    std::string out = variant.template_text.substr(0, pos);
    out += demos_text;
    out += variant.template_text.substr(pos + kDemosSlot.size());
    return out;
}

inline std::string build_creation_prompt(const PromptVariant& variant, std::span<const AugmentedDemonstration> demos) {
    variant.validate();
    return fill_template(variant, render_demos_block(demos));
}

struct CreateOptions {
    std::string task_id;
    std::string model_id;
    std::uint64_t max_output_tokens = 0;
};

/// One greedy call over the whole (seed-ordered) pool; the completion is the sheet.
inline CheatSheet create_cheat_sheet(std::span<const AugmentedDemonstration> demos, const PromptVariant& variant,
                                     llm::LlmClient& client, std::int64_t seed, const CreateOptions& options,
                                     const llm::TokenCounter& counter) {
    llm::ChatRequest req;
    req.model_id = options.model_id;
    req.user_text = build_creation_prompt(variant, demos);
    req.temperature = 0.0;
    req.max_output_tokens = options.max_output_tokens;
    const auto resp = client.complete(req);
    const auto& text = resp.texts.front();
    if (detail::trim(text).empty()) {
        throw Error("sheet creation for " + options.task_id + " seed " + std::to_string(seed) +
                    " returned an empty completion");
    }
    CheatSheet sheet;
    sheet.task_id = options.task_id;
    sheet.seed = seed;
    sheet.text = text;
    sheet.source = SheetSource::generated;
    sheet.created_from = {demos.size(), options.model_id, variant.id};
    sheet.token_count = counter.provider_reported() ? resp.completion_tokens : counter.count(text);
    sheet.created_at = resp.created_at;
    return sheet;
}

// Sheet file layout:
//   ---
//   key: value        (task_id, seed, source, model_id, variant_id, created_at, n_demos)
//   ---
//   <body, verbatim to end of file>

inline constexpr std::string_view kHeaderFence = "---";

inline std::string serialize_sheet(const CheatSheet& s) {
    std::ostringstream out;
    out << kHeaderFence << '\n'
        << "task_id: " << s.task_id << '\n'
        << "seed: " << s.seed << '\n'
        << "source: " << to_string(s.source) << '\n'
        << "model_id: " << s.created_from.model_id << '\n'
        << "variant_id: " << to_string(s.created_from.variant_id) << '\n'
        << "created_at: " << s.created_at << '\n'
        << "n_demos: " << s.created_from.n_demos << '\n'
        << kHeaderFence << '\n'
        << s.text;
    return out.str();
}

/// token_count is recomputed under `counter` unless counting is provider-reported,
/// in which case it is left at 0.
inline CheatSheet parse_sheet(std::string_view content, const llm::TokenCounter& counter,
                              const std::string& origin = "<sheet>") {
    auto fail = [&](const std::string& why) { return DataError("sheet " + origin + ": " + why); };
    auto next_line = [&](std::string_view& rest) -> std::optional<std::string_view> {
        if (rest.empty()) return std::nullopt;
        const auto nl = rest.find('\n');
        std::string_view line = rest.substr(0, nl);
        rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        return line;
    };
    std::string_view rest = content;
    auto first = next_line(rest);
    if (!first || *first != kHeaderFence) throw fail("missing opening '---' header fence");
    std::map<std::string, std::string, std::less<>> fields;
    bool closed = false;
    while (auto line = next_line(rest)) {
        if (*line == kHeaderFence) {
            closed = true;
            break;
        }
        const auto colon = line->find(':');
        if (colon == std::string_view::npos) throw fail("malformed header line \"" + std::string(*line) + "\"");
        fields[std::string(detail::trim(line->substr(0, colon)))] = std::string(detail::trim(line->substr(colon + 1)));
    }
    if (!closed) throw fail("header is not terminated by '---'");
    auto need = [&](const char* key) -> const std::string& {
        auto it = fields.find(key);
        if (it == fields.end()) throw fail(std::string("header lacks \"") + key + "\"");
        return it->second;
    };
    CheatSheet s;
    try {
        s.task_id = need("task_id");
        s.seed = std::stoll(need("seed"));
        s.source = sheet_source_from_string(need("source"));
        s.created_from.model_id = fields.count("model_id") ? fields["model_id"] : std::string{};
        s.created_from.variant_id =
            fields.count("variant_id") ? variant_from_string(fields["variant_id"]) : VariantId::cheat_sheet;
        s.created_from.n_demos = fields.count("n_demos") ? std::stoull(fields["n_demos"]) : 0;
        s.created_at = fields.count("created_at") ? fields["created_at"] : std::string{};
    } catch (const std::invalid_argument&) {
        throw fail("non-numeric seed or n_demos");
    } catch (const std::out_of_range&) {
        throw fail("seed or n_demos out of range");
    }
    if (s.task_id.empty()) throw fail("empty task_id");
    if (s.source == SheetSource::generated && s.created_from.model_id.empty()) {
        throw fail("generated sheet without model_id");
    }
    s.text = std::string(rest);
    if (detail::trim(s.text).empty()) throw fail("empty body");
    s.token_count = counter.provider_reported() ? 0 : counter.count(s.text);
    return s;
}

inline void save_cheat_sheet(const CheatSheet& sheet, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write sheet " + path.string());
        out << serialize_sheet(sheet);
    }
    std::filesystem::rename(tmp, path);
}

inline CheatSheet load_cheat_sheet(const std::filesystem::path& path, const llm::TokenCounter& counter) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open sheet " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sheet(buf.str(), counter, path.string());
}

/// "{task_id}.seed{n}.{variant}.md"
inline std::string sheet_filename(const std::string& task_id, std::int64_t seed, VariantId variant) {
    return task_id + ".seed" + std::to_string(seed) + "." + std::string(to_string(variant)) + ".md";
}

/// Directory of sheet files, with an optional directory of hand-edited
/// overrides consulted first. A sheet whose header says manual_override is
/// never overwritten by a generated one.
class SheetStore {
public:
    explicit SheetStore(std::filesystem::path dir, std::optional<std::filesystem::path> override_dir = std::nullopt)
        : dir_(std::move(dir)), override_dir_(std::move(override_dir)) {}

    std::filesystem::path path_for(const std::string& task_id, std::int64_t seed, VariantId variant) const {
        return dir_ / sheet_filename(task_id, seed, variant);
    }

    std::optional<CheatSheet> find(const std::string& task_id, std::int64_t seed, VariantId variant,
                                   const llm::TokenCounter& counter) const {
        const auto name = sheet_filename(task_id, seed, variant);
        if (override_dir_ && std::filesystem::exists(*override_dir_ / name)) {
            auto s = load_cheat_sheet(*override_dir_ / name, counter);
            s.source = SheetSource::manual_override;
            return s;
        }
        if (std::filesystem::exists(dir_ / name)) return load_cheat_sheet(dir_ / name, counter);
        return std::nullopt;
    }

    /// Returns false (and writes nothing) if a manual override already occupies the slot.
    bool save(const CheatSheet& sheet, const llm::TokenCounter& counter) {
        std::lock_guard lk(lock_for(sheet_filename(sheet.task_id, sheet.seed, sheet.created_from.variant_id)));
        const auto path = path_for(sheet.task_id, sheet.seed, sheet.created_from.variant_id);
        if (sheet.source == SheetSource::generated && std::filesystem::exists(path) &&
            load_cheat_sheet(path, counter).source == SheetSource::manual_override) {
            return false;
        }
        save_cheat_sheet(sheet, path);
        return true;
    }

    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::mutex& lock_for(const std::string& key) {
        std::lock_guard lk(map_mu_);
        return locks_[key];
    }

    std::filesystem::path dir_;
    std::optional<std::filesystem::path> override_dir_;
    std::mutex map_mu_;
    std::map<std::string, std::mutex> locks_;
};

} // namespace csicl::cheatsheet

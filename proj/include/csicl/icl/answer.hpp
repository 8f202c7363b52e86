#pragma once

#include <csicl/datasets/dataset.hpp>
#include <csicl/detail/strings.hpp>
#include <csicl/error.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace csicl::icl {

inline constexpr std::string_view kAnswerMarker = "Answer:";

namespace detail {

inline std::optional<std::string> normalize_choice(std::string_view s) {
    auto is_letter = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
    auto upper = [](char c) { return static_cast<char>(c >= 'a' && c <= 'z' ? c - 32 : c); };
    // "(B)" optionally followed by option text.
    if (s.size() >= 3 && s[0] == '(' && is_letter(s[1]) && s[2] == ')') return std::string(1, upper(s[1]));
    // "B", "B.", "B)" alone or followed by whitespace.
    if (!s.empty() && is_letter(s[0])) {
        std::size_t end = 1;
        if (end < s.size() && (s[end] == '.' || s[end] == ')')) ++end;
        if (end == s.size() || csicl::detail::is_space(s[end])) return std::string(1, upper(s[0]));
    }
    return std::nullopt;
}

inline std::optional<std::string> normalize_yes_no(std::string_view s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '!')) s.remove_suffix(1);
    s = csicl::detail::trim(s);
    std::string lower(s);
    for (char& c : lower) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c + 32);
    }
    if (lower == "yes" || lower == "no") return lower;
    return std::nullopt;
}

inline std::optional<std::string> normalize_free_text(std::string_view s) {
    s = csicl::detail::trim(s);
    if (!s.empty() && s.back() == '.') s.remove_suffix(1);
    s = csicl::detail::trim(s);
    if (s.empty()) return std::nullopt;
    return std::string(s);
}

} // namespace detail

/// Takes the text after the last "Answer:" (case-sensitive) up to the end of
/// that line and normalizes it for the task's answer format. Returns nullopt
/// when there is no marker or the remainder does not normalize.
inline std::optional<std::string> parse_answer(std::string_view raw, datasets::AnswerFormat format) {
    const auto pos = raw.rfind(kAnswerMarker);
    if (pos == std::string_view::npos) return std::nullopt;
    auto rest = raw.substr(pos + kAnswerMarker.size());
    rest = rest.substr(0, rest.find('\n'));
    rest = csicl::detail::trim(rest);
    switch (format) {
    case datasets::AnswerFormat::multiple_choice: return detail::normalize_choice(rest);
    case datasets::AnswerFormat::yes_no: return detail::normalize_yes_no(rest);
    case datasets::AnswerFormat::free_text: return detail::normalize_free_text(rest);
    }
    return std::nullopt;
}

/// Gold answers go through the same normalization as predictions; if that
/// fails the trimmed target is used as is.
inline std::string normalize_target(std::string_view target, datasets::AnswerFormat format) {
    const std::string probe = std::string(kAnswerMarker) + " " + std::string(target);
    if (auto n = parse_answer(probe, format)) return *n;
    return std::string(csicl::detail::trim(target));
}

/// Most frequent answer; ties go to whichever tied answer appeared first.
inline std::string majority_vote(std::span<const std::string> answers) {
    if (answers.empty()) throw PreconditionError("majority_vote needs at least one answer");
    std::map<std::string_view, std::size_t> counts;
    for (const auto& a : answers) ++counts[a];
    std::size_t best = 0;
    std::string_view winner;
    for (const auto& a : answers) {
        const auto c = counts[a];
        if (c > best) {
            best = c;
            winner = a;
        }
    }
    return std::string(winner);
}

} // namespace csicl::icl

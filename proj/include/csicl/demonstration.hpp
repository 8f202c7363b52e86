#pragma once

#include <csicl/datasets/dataset.hpp>

#include <string>

namespace csicl {

/// (x, r, y): an example plus a generated rationale. An empty rationale marks
/// a plain demonstration, which renders without an Explanation line.
struct AugmentedDemonstration {
    std::string input;
    std::string rationale;
    std::string target;

    static AugmentedDemonstration plain(const datasets::Example& ex) { return {ex.input, {}, ex.target}; }

    datasets::Example example() const { return {input, target}; }
    bool has_rationale() const noexcept { return !rationale.empty(); }

    friend bool operator==(const AugmentedDemonstration&, const AugmentedDemonstration&) = default;
};

/// "Question: {x}\nExplanation: {r}\nAnswer: {y}", or without the
/// Explanation line for plain demonstrations. The answer comes last so a
/// model imitating the block ends its output with "Answer: ...".
inline std::string render_demo_block(const AugmentedDemonstration& d) {
    std::string out = "Question: " + d.input + "\n";
    if (d.has_rationale()) out += "Explanation: " + d.rationale + "\n";
    out += "Answer: " + d.target;
    return out;
}

/// Separator placed between consecutive demonstration blocks.
inline constexpr std::string_view kDemoSeparator = "\n###\n";

} // namespace csicl

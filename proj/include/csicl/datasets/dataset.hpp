#pragma once

#include <csicl/datasets/prng.hpp>
#include <csicl/error.hpp>

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csicl::datasets {

enum class AnswerFormat { multiple_choice, yes_no, free_text };

inline std::string_view to_string(AnswerFormat f) {
    switch (f) {
    case AnswerFormat::multiple_choice: return "multiple_choice";
    case AnswerFormat::yes_no: return "yes_no";
    case AnswerFormat::free_text: return "free_text";
    }
    return "free_text";
}

inline AnswerFormat answer_format_from_string(std::string_view s) {
    if (s == "multiple_choice") return AnswerFormat::multiple_choice;
    if (s == "yes_no") return AnswerFormat::yes_no;
    if (s == "free_text") return AnswerFormat::free_text;
    throw DataError("unknown answer_format \"" + std::string(s) + "\"");
}

/// An input/target pair as it appears in a task file.
struct Example {
    std::string input;
    std::string target;

    friend bool operator==(const Example&, const Example&) = default;
};

struct TaskSpec {
    std::string task_id;
    std::string display_name;
    AnswerFormat answer_format = AnswerFormat::free_text;
    std::size_t demo_pool_size = 0;
    std::size_t test_size = 0;

    std::size_t total_size() const noexcept { return demo_pool_size + test_size; }

    /// Throws DataError if the task spec cannot drive a run. Cheat-sheet inference
    /// needs at least two format examples, hence the pool floor of 2.
    void validate() const {
        if (task_id.empty()) {
            throw DataError("task spec has an empty task_id");
        }
        if (demo_pool_size < 2) {
            throw DataError("task " + task_id + ": demo_pool_size must be >= 2, got " +
                            std::to_string(demo_pool_size));
        }
        if (test_size < 1) {
            throw DataError("task " + task_id + ": test_size must be >= 1");
        }
    }
};

/// Demonstration pool (in seed order) and test set for one seed.
struct DatasetSplit {
    std::vector<Example> demos;
    std::vector<Example> test;
    std::int64_t seed = 0;

    friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

/// Parses a BBH-style task document: {"examples": [{"input": ..., "target": ...}, ...]}.
inline std::vector<Example> parse_task_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("examples") || !doc.at("examples").is_array()) {
        throw DataError("task file must be an object with an \"examples\" array");
    }
    const auto& records = doc.at("examples");
    std::vector<Example> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (!rec.is_object()) {
            throw IndexedError(i, "record is not an object");
        }
        Example ex;
        for (auto [field, slot] : {std::pair{"input", &ex.input}, std::pair{"target", &ex.target}}) {
            auto it = rec.find(field);
            if (it == rec.end()) {
                throw IndexedError(i, std::string("missing field \"") + field + "\"");
            }
            if (!it->is_string()) {
                throw IndexedError(i, std::string("field \"") + field + "\" is not a string");
            }
            *slot = it->get<std::string>();
            if (slot->empty()) {
                throw IndexedError(i, std::string("field \"") + field + "\" is empty");
            }
        }
        out.push_back(std::move(ex));
    }
    return out;
}

/// Loads a task file. Records come back in file order. The task spec is only used
/// to label errors; size checks happen in split_examples.
inline std::vector<Example> load_task(const std::filesystem::path& path, const TaskSpec& spec) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("task " + spec.task_id + ": cannot open " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("task " + spec.task_id + ": " + path.string() + " is not valid JSON: " + e.what());
    }
    try {
        return parse_task_json(doc);
    } catch (const IndexedError& e) {
        throw IndexedError(e.index(), e.detail(), "task " + spec.task_id + " (" + path.string() + ")");
    }
}

/// Returns a seed-determined permutation of `demos`. See prng.hpp for the algorithm.
template <typename T>
std::vector<T> shuffle_demos(std::vector<T> demos, std::int64_t seed) {
    fisher_yates_shuffle(std::span<T>(demos), seed);
    return demos;
}

/// The first demo_pool_size records form the pool, the rest the test set.
/// Only the pool's order depends on the seed.
inline DatasetSplit split_examples(std::span<const Example> examples, const TaskSpec& spec, std::int64_t seed) {
    if (examples.size() != spec.total_size()) {
        throw DataError("task " + spec.task_id + ": expected " + std::to_string(spec.total_size()) +
                        " examples (" + std::to_string(spec.demo_pool_size) + " demos + " +
                        std::to_string(spec.test_size) + " test), got " + std::to_string(examples.size()));
    }
    DatasetSplit split;
    split.seed = seed;
    split.demos.assign(examples.begin(), examples.begin() + static_cast<std::ptrdiff_t>(spec.demo_pool_size));
    split.test.assign(examples.begin() + static_cast<std::ptrdiff_t>(spec.demo_pool_size), examples.end());
    split.demos = shuffle_demos(std::move(split.demos), seed);
    return split;
}

} // namespace csicl::datasets

#pragma once

#include <csicl/datasets/dataset.hpp>

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csicl::datasets {

struct TaskEntry {
    TaskSpec spec;
    std::filesystem::path path;
    std::optional<std::filesystem::path> seed_triples;
};

/// task_id -> task file + TaskSpec. Specs are validated on insertion, so a
/// registry never holds a task that cannot be run.
class TaskRegistry {
public:
    void add(TaskEntry entry) {
        entry.spec.validate();
        const auto id = entry.spec.task_id;
        if (!entries_.emplace(id, std::move(entry)).second) {
            throw DataError("duplicate task_id \"" + id + "\" in registry");
        }
    }

    const TaskEntry& at(const std::string& task_id) const {
        auto it = entries_.find(task_id);
        if (it == entries_.end()) {
            throw DataError("task \"" + task_id + "\" is not registered");
        }
        return it->second;
    }

    bool contains(const std::string& task_id) const { return entries_.contains(task_id); }

    std::vector<std::string> task_ids() const {
        std::vector<std::string> ids;
        for (const auto& [id, _] : entries_) ids.push_back(id);
        return ids;
    }

    std::size_t size() const noexcept { return entries_.size(); }

    /// Relative paths inside the file resolve against the registry's directory.
    static TaskRegistry load(const std::filesystem::path& file) {
        std::ifstream in(file, std::ios::binary);
        if (!in) {
            throw DataError("cannot open registry " + file.string());
        }
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError("registry " + file.string() + ": " + e.what());
        }
        const auto base = file.parent_path();
        TaskRegistry reg;
        if (!doc.contains("tasks") || !doc.at("tasks").is_array()) {
            throw DataError("registry " + file.string() + ": missing \"tasks\" array");
        }
        for (const auto& t : doc.at("tasks")) {
            try {
                TaskEntry e;
                e.spec.task_id = t.at("task_id").get<std::string>();
                e.spec.display_name = t.value("display_name", e.spec.task_id);
                e.spec.answer_format = answer_format_from_string(t.at("answer_format").get<std::string>());
                e.spec.demo_pool_size = t.at("demo_pool_size").get<std::size_t>();
                e.spec.test_size = t.at("test_size").get<std::size_t>();
                e.path = base / t.at("path").get<std::string>();
                if (t.contains("seed_triples")) {
                    e.seed_triples = base / t.at("seed_triples").get<std::string>();
                }
                reg.add(std::move(e));
            } catch (const nlohmann::json::exception& ex) {
                throw DataError("registry " + file.string() + ": " + ex.what());
            }
        }
        return reg;
    }

private:
    std::map<std::string, TaskEntry> entries_;
};

} // namespace csicl::datasets

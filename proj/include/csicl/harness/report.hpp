#pragma once

#include <csicl/error.hpp>
#include <csicl/icl/inference.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace csicl::harness {

/// One prediction on one test input under one seed.
struct RunRecord {
    std::string task_id;
    std::string mode;
    std::string mode_kind;
    std::int64_t seed = 0;
    std::size_t test_index = 0;
    std::string target;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t cached_prompt_tokens = 0;
    double latency_seconds = 0.0;
    icl::Prediction prediction;
    std::optional<std::string> sheet_source;

    friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

inline nlohmann::json to_json(const RunRecord& r) {
    nlohmann::json parsed = nlohmann::json::array();
    for (const auto& p : r.prediction.parsed) parsed.push_back(p ? nlohmann::json(*p) : nlohmann::json(nullptr));
    return {{"task_id", r.task_id},
            {"mode", r.mode},
            {"mode_kind", r.mode_kind},
            {"seed", r.seed},
            {"test_index", r.test_index},
            {"target", r.target},
            {"prompt_tokens", r.prompt_tokens},
            {"completion_tokens", r.completion_tokens},
            {"cached_prompt_tokens", r.cached_prompt_tokens},
            {"latency_seconds", r.latency_seconds},
            {"samples", r.prediction.samples},
            {"parsed", parsed},
            {"final_answer", r.prediction.final_answer ? nlohmann::json(*r.prediction.final_answer) : nlohmann::json(nullptr)},
            {"correct", r.prediction.correct},
            {"format_error", r.prediction.format_error},
            {"sheet_source", r.sheet_source ? nlohmann::json(*r.sheet_source) : nlohmann::json(nullptr)}};
}

inline RunRecord record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.mode_kind = j.at("mode_kind").get<std::string>();
    r.seed = j.at("seed").get<std::int64_t>();
    r.test_index = j.at("test_index").get<std::size_t>();
    r.target = j.value("target", std::string{});
    r.prompt_tokens = j.at("prompt_tokens").get<std::uint64_t>();
    r.completion_tokens = j.at("completion_tokens").get<std::uint64_t>();
    r.cached_prompt_tokens = j.value("cached_prompt_tokens", std::uint64_t{0});
    r.latency_seconds = j.value("latency_seconds", 0.0);
    r.prediction.samples = j.at("samples").get<std::vector<std::string>>();
    for (const auto& p : j.at("parsed")) {
        r.prediction.parsed.push_back(p.is_null() ? std::nullopt : std::optional<std::string>(p.get<std::string>()));
    }
    const auto& fa = j.at("final_answer");
    if (!fa.is_null()) r.prediction.final_answer = fa.get<std::string>();
    r.prediction.correct = j.at("correct").get<bool>();
    r.prediction.format_error = j.at("format_error").get<bool>();
    const auto& ss = j.value("sheet_source", nlohmann::json(nullptr));
    if (!ss.is_null()) r.sheet_source = ss.get<std::string>();
    return r;
}

/// Reads records.jsonl. A trailing line that does not parse (an interrupted
/// write) is dropped; a bad line anywhere else is an error.
inline std::vector<RunRecord> read_records(const std::filesystem::path& path) {
    std::vector<RunRecord> out;
    std::ifstream in(path, std::ios::binary);
    if (!in) return out;
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) lines.push_back(std::move(line));
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        try {
            out.push_back(record_from_json(nlohmann::json::parse(lines[i])));
        } catch (const nlohmann::json::exception& e) {
            if (i + 1 == lines.size()) break;
            throw IndexedError(i, e.what(), "records " + path.string());
        }
    }
    return out;
}

inline void write_records(const std::filesystem::path& path, std::span<const RunRecord> records) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp);
        for (const auto& r : records) out << to_json(r).dump() << '\n';
    }
    std::filesystem::rename(tmp, path);
}

/// Per-token prices for one model.
struct PriceTable {
    std::string model_id;
    double input_rate = 0.0;
    /// Applied to provider-reported cached prompt tokens when set.
    std::optional<double> cached_input_rate;
    double output_rate = 0.0;

    void validate() const {
        if (input_rate < 0 || output_rate < 0 || (cached_input_rate && *cached_input_rate < 0)) {
            throw DataError("price table for " + model_id + " has a negative rate");
        }
    }
};

/// {"model_id", "input_per_token", "cached_input_per_token"?, "output_per_token"}
inline PriceTable load_price_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open price table " + path.string());
    try {
        const auto j = nlohmann::json::parse(in);
        PriceTable p;
        p.model_id = j.value("model_id", std::string{});
        p.input_rate = j.at("input_per_token").get<double>();
        if (j.contains("cached_input_per_token")) p.cached_input_rate = j.at("cached_input_per_token").get<double>();
        p.output_rate = j.at("output_per_token").get<double>();
        p.validate();
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("price table " + path.string() + ": " + e.what());
    }
}

struct SeedBreakdown {
    std::int64_t seed = 0;
    std::size_t n = 0;
    std::size_t n_correct = 0;
    std::size_t format_errors = 0;
    double accuracy = 0.0;
    std::optional<std::string> sheet_source;

    friend bool operator==(const SeedBreakdown&, const SeedBreakdown&) = default;
};

struct EvalReport {
    std::string task_id;
    std::string mode;
    std::string mode_kind;
    std::size_t n_records = 0;
    double accuracy_mean = 0.0;
    double accuracy_std = 0.0;
    double avg_input_tokens = 0.0;
    double avg_output_tokens = 0.0;
    double cost_estimate = 0.0;
    double wall_clock_seconds = 0.0;
    double format_error_rate = 0.0;
    std::vector<SeedBreakdown> per_seed;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Accuracy per seed, then mean and population standard deviation across
/// seeds. Token averages are over all records. Wall clock sums per-call latency.
inline EvalReport compute_report(std::span<const RunRecord> records, const PriceTable& prices = {}) {
    if (records.empty()) throw PreconditionError("compute_report needs at least one record");
    prices.validate();
    EvalReport rep;
    rep.task_id = records.front().task_id;
    rep.mode = records.front().mode;
    rep.mode_kind = records.front().mode_kind;
    rep.n_records = records.size();
    std::map<std::int64_t, SeedBreakdown> seeds;
    double in_sum = 0.0, out_sum = 0.0, cost = 0.0, wall = 0.0;
    std::size_t fmt_errors = 0;
    for (const auto& r : records) {
        if (r.task_id != rep.task_id || r.mode != rep.mode) {
            throw PreconditionError("compute_report got records from more than one (task, mode): " + rep.task_id + "/" +
                                    rep.mode + " vs " + r.task_id + "/" + r.mode);
        }
        auto& s = seeds[r.seed];
        s.seed = r.seed;
        ++s.n;
        s.n_correct += r.prediction.correct ? 1 : 0;
        s.format_errors += r.prediction.format_error ? 1 : 0;
        if (r.sheet_source) s.sheet_source = r.sheet_source;
        fmt_errors += r.prediction.format_error ? 1 : 0;
        in_sum += static_cast<double>(r.prompt_tokens);
        out_sum += static_cast<double>(r.completion_tokens);
        const auto cached = std::min(r.cached_prompt_tokens, r.prompt_tokens);
        const double cached_rate = prices.cached_input_rate.value_or(prices.input_rate);
        cost += static_cast<double>(r.prompt_tokens - cached) * prices.input_rate +
                static_cast<double>(cached) * cached_rate + static_cast<double>(r.completion_tokens) * prices.output_rate;
        wall += r.latency_seconds;
    }
    double acc_sum = 0.0;
    for (auto& [_, s] : seeds) {
        s.accuracy = 100.0 * static_cast<double>(s.n_correct) / static_cast<double>(s.n);
        acc_sum += s.accuracy;
        rep.per_seed.push_back(s);
    }
    const double k = static_cast<double>(rep.per_seed.size());
    rep.accuracy_mean = acc_sum / k;
    double var = 0.0;
    for (const auto& s : rep.per_seed) var += (s.accuracy - rep.accuracy_mean) * (s.accuracy - rep.accuracy_mean);
    rep.accuracy_std = std::sqrt(var / k);
    const double n = static_cast<double>(records.size());
    rep.avg_input_tokens = in_sum / n;
    rep.avg_output_tokens = out_sum / n;
    rep.cost_estimate = cost;
    rep.wall_clock_seconds = wall;
    rep.format_error_rate = 100.0 * static_cast<double>(fmt_errors) / n;
    return rep;
}

inline nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json seeds = nlohmann::json::array();
    for (const auto& s : r.per_seed) {
        seeds.push_back({{"seed", s.seed},
                         {"n", s.n},
                         {"n_correct", s.n_correct},
                         {"format_errors", s.format_errors},
                         {"accuracy", s.accuracy},
                         {"sheet_source", s.sheet_source ? nlohmann::json(*s.sheet_source) : nlohmann::json(nullptr)}});
    }
    return {{"task_id", r.task_id},
            {"mode", r.mode},
            {"mode_kind", r.mode_kind},
            {"n_records", r.n_records},
            {"accuracy_mean", r.accuracy_mean},
            {"accuracy_std", r.accuracy_std},
            {"avg_input_tokens", r.avg_input_tokens},
            {"avg_output_tokens", r.avg_output_tokens},
            {"cost_estimate", r.cost_estimate},
            {"wall_clock_seconds", r.wall_clock_seconds},
            {"format_error_rate", r.format_error_rate},
            {"per_seed", seeds}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    EvalReport r;
    r.task_id = j.at("task_id").get<std::string>();
    r.mode = j.at("mode").get<std::string>();
    r.mode_kind = j.at("mode_kind").get<std::string>();
    r.n_records = j.at("n_records").get<std::size_t>();
    r.accuracy_mean = j.at("accuracy_mean").get<double>();
    r.accuracy_std = j.at("accuracy_std").get<double>();
    r.avg_input_tokens = j.at("avg_input_tokens").get<double>();
    r.avg_output_tokens = j.at("avg_output_tokens").get<double>();
    r.cost_estimate = j.at("cost_estimate").get<double>();
    r.wall_clock_seconds = j.at("wall_clock_seconds").get<double>();
    r.format_error_rate = j.at("format_error_rate").get<double>();
    for (const auto& s : j.at("per_seed")) {
        SeedBreakdown b;
        b.seed = s.at("seed").get<std::int64_t>();
        b.n = s.at("n").get<std::size_t>();
        b.n_correct = s.at("n_correct").get<std::size_t>();
        b.format_errors = s.at("format_errors").get<std::size_t>();
        b.accuracy = s.at("accuracy").get<double>();
        if (!s.at("sheet_source").is_null()) b.sheet_source = s.at("sheet_source").get<std::string>();
        r.per_seed.push_back(b);
    }
    return r;
}

struct SelectionDecision {
    std::string task_id;
    double few_accuracy = 0.0;
    double many_accuracy = 0.0;
    double delta = 0.0;
    bool selected = false;
};

/// Minimum many-shot over few-shot gain, in accuracy points, for a task to qualify.
inline constexpr double kSelectionThreshold = 1.0;

/// A task qualifies when many-shot beats few-shot by strictly more than one point.
inline SelectionDecision select_tasks(const EvalReport& few, const EvalReport& many) {
    if (few.task_id != many.task_id) {
        throw PreconditionError("select_tasks compares reports of different tasks: " + few.task_id + " vs " +
                                many.task_id);
    }
    if (few.mode_kind != "few_shot" || many.mode_kind != "many_shot") {
        throw PreconditionError("select_tasks expects a few_shot and a many_shot report, got " + few.mode_kind +
                                " and " + many.mode_kind);
    }
    SelectionDecision d;
    d.task_id = few.task_id;
    d.few_accuracy = few.accuracy_mean;
    d.many_accuracy = many.accuracy_mean;
    d.delta = many.accuracy_mean - few.accuracy_mean;
    d.selected = d.delta > kSelectionThreshold;
    return d;
}

enum class ReportFormat { markdown_table, json };

namespace detail {

inline std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace detail

inline std::string emit_report(std::span<const EvalReport> reports, ReportFormat format) {
    if (format == ReportFormat::json) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : reports) arr.push_back(to_json(r));
        return nlohmann::json{{"reports", arr}}.dump(2) + "\n";
    }
    std::string out;
    out += "| Task | Mode | Accuracy↑ | Input Token Length↓ | Output Tokens | Format Errors (%) | Cost | Wall-Clock (s) |\n";
    out += "|---|---|---:|---:|---:|---:|---:|---:|\n";
    for (const auto& r : reports) {
        out += "| " + r.task_id + " | " + r.mode + " | " + detail::fixed(r.accuracy_mean, 1) + " ± " +
               detail::fixed(r.accuracy_std, 2) + " | " + detail::fixed(r.avg_input_tokens, 1) + " | " +
               detail::fixed(r.avg_output_tokens, 1) + " | " + detail::fixed(r.format_error_rate, 1) + " | " +
               detail::fixed(r.cost_estimate, 6) + " | " + detail::fixed(r.wall_clock_seconds, 2) + " |\n";
    }
    // Task x mode accuracy matrix.
    std::vector<std::string> tasks;
    std::vector<std::string> modes;
    std::map<std::pair<std::string, std::string>, const EvalReport*> cell;
    for (const auto& r : reports) {
        if (std::find(tasks.begin(), tasks.end(), r.task_id) == tasks.end()) tasks.push_back(r.task_id);
        if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
        cell[{r.task_id, r.mode}] = &r;
    }
    out += "\n| Task |";
    for (const auto& m : modes) out += " " + m + " |";
    out += "\n|---|";
    for (std::size_t i = 0; i < modes.size(); ++i) out += "---:|";
    out += "\n";
    std::map<std::string, std::pair<double, int>> col_avg;
    for (const auto& t : tasks) {
        out += "| " + t + " |";
        for (const auto& m : modes) {
            auto it = cell.find({t, m});
            if (it == cell.end()) {
                out += " – |";
                continue;
            }
            out += " " + detail::fixed(it->second->accuracy_mean, 1) + " |";
            col_avg[m].first += it->second->accuracy_mean;
            col_avg[m].second += 1;
        }
        out += "\n";
    }
    if (tasks.size() > 1) {
        out += "| Average |";
        for (const auto& m : modes) {
            const auto& [sum, cnt] = col_avg[m];
            out += " " + (cnt ? detail::fixed(sum / cnt, 1) : std::string("–")) + " |";
        }
        out += "\n";
    }
    return out;
}

inline std::vector<EvalReport> parse_reports_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    std::vector<EvalReport> out;
    const auto& arr = j.is_array() ? j : j.at("reports");
    for (const auto& r : arr) out.push_back(report_from_json(r));
    return out;
}

} // namespace csicl::harness

#include "app.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace csicl;

namespace {

struct Globals {
    fs::path config;
    std::string seed_list;
    std::string transport;
    fs::path cache_dir;
    fs::path work_dir;
};

std::vector<std::int64_t> parse_seed_list(const std::string& s) {
    std::vector<std::int64_t> out;
    std::stringstream in(s);
    for (std::string item; std::getline(in, item, ',');) {
        item = detail::trim(item);
        if (item.empty()) continue;
        std::size_t used = 0;
        long long v = 0;
        try {
            v = std::stoll(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size()) throw DataError("--seed-list: \"" + item + "\" is not an integer");
        out.push_back(v);
    }
    if (out.empty()) throw DataError("--seed-list is empty");
    return out;
}

harness::RunConfig load_config(const Globals& g) {
    if (g.config.empty()) throw PreconditionError("--config is required");
    auto c = harness::load_run_config(g.config);
    if (!g.seed_list.empty()) c.seeds = parse_seed_list(g.seed_list);
    if (!g.transport.empty()) {
        c.transport.kind = harness::transport_kind_from_string(g.transport);
        if (c.sheet_transport) c.sheet_transport->kind = c.transport.kind;
    }
    if (!g.work_dir.empty()) {
        c.cache_dir = g.work_dir / "cache";
        c.output_dir = g.work_dir / "runs" / c.output_dir.filename();
        c.augmented_dir = g.work_dir / "augmented";
        c.sheet_dir = g.work_dir / c.sheet_dir.filename();
    }
    if (!g.cache_dir.empty()) c.cache_dir = g.cache_dir;
    c.validate();
    return c;
}

std::vector<AugmentedDemonstration> load_pool(const harness::RunConfig& c, const datasets::TaskEntry& task) {
    if (c.use_rationales) return augment::load_augmented_pool(c.augmented_pool_path(), c.task_id);
    const auto examples = datasets::load_task(task.path, task.spec);
    std::vector<AugmentedDemonstration> pool;
    for (std::size_t i = 0; i < task.spec.demo_pool_size; ++i) pool.push_back(AugmentedDemonstration::plain(examples[i]));
    return pool;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int cmd_augment(const Globals& g) {
    const auto c = load_config(g);
    const auto reg = datasets::TaskRegistry::load(c.registry);
    auto clients = app::make_clients(c);
    const auto pool = harness::augment_task(c, reg, *clients.inference);
    std::cout << "augmented " << pool.size() << " demonstrations -> " << c.augmented_pool_path().string() << " ("
              << clients.transport_calls() << " transport calls)\n";
    return 0;
}

int cmd_sheet_create(const Globals& g, bool force) {
    const auto c = load_config(g);
    const auto reg = datasets::TaskRegistry::load(c.registry);
    const auto& task = reg.at(c.task_id);
    const auto pool = load_pool(c, task);
    const auto counter = llm::make_token_counter(c.token_scheme);
    auto clients = app::make_clients(c);
    cheatsheet::SheetStore store(c.sheet_dir, c.sheet_override_dir);
    for (auto seed : c.seeds) {
        auto existing = store.find(c.task_id, seed, c.variant, *counter);
        if (existing && !force) {
            std::cout << "seed " << seed << ": kept " << cheatsheet::to_string(existing->source) << " sheet ("
                      << existing->token_count << " tokens)\n";
            continue;
        }
        const auto demos = datasets::shuffle_demos(pool, seed);
        auto sheet = cheatsheet::create_cheat_sheet(demos, cheatsheet::builtin_variant(c.variant), *clients.sheet, seed,
                                                    {c.task_id, c.sheet_model_id, c.max_output_tokens}, *counter);
        const bool saved = store.save(sheet, *counter);
        std::cout << "seed " << seed << ": " << (saved ? "created" : "not saved, manual override present") << " ("
                  << sheet.token_count << " tokens)\n";
    }
    return 0;
}

int cmd_sheet_show(const Globals& g, std::int64_t seed) {
    const auto c = load_config(g);
    const auto counter = llm::make_token_counter(c.token_scheme);
    cheatsheet::SheetStore store(c.sheet_dir, c.sheet_override_dir);
    const auto sheet = store.find(c.task_id, seed, c.variant, *counter);
    if (!sheet) {
        std::cerr << "no sheet for " << c.task_id << " seed " << seed << "\n";
        return 1;
    }
    std::cout << cheatsheet::serialize_sheet(*sheet);
    if (!sheet->text.ends_with('\n')) std::cout << '\n';
    std::cout << "(" << sheet->token_count << " tokens, scheme " << c.token_scheme.scheme_id << ")\n";
    return 0;
}

int cmd_run(const Globals& g) {
    const auto c = load_config(g);
    const auto reg = datasets::TaskRegistry::load(c.registry);
    auto clients = app::make_clients(c);
    const auto result = harness::run_experiment(c, reg, clients.clients());
    const auto rep = harness::write_run_report(c, result.records);
    std::cout << rep.task_id << " " << rep.mode << ": accuracy " << harness::detail::fixed(rep.accuracy_mean, 1) << " +/- "
              << harness::detail::fixed(rep.accuracy_std, 1) << ", avg input tokens "
              << harness::detail::fixed(rep.avg_input_tokens, 1) << ", " << result.records.size() << " records ("
              << result.resumed << " resumed), " << clients.transport_calls() << " transport calls\n"
              << "wrote " << (c.output_dir / "report.md").string() << "\n";
    return 0;
}

int cmd_report(const Globals& g, const std::vector<fs::path>& dirs, const std::string& format, const fs::path& prices) {
    std::vector<fs::path> run_dirs = dirs;
    std::optional<harness::PriceTable> table;
    if (!prices.empty()) table = harness::load_price_table(prices);
    if (!g.config.empty()) {
        const auto c = load_config(g);
        run_dirs.push_back(c.output_dir);
        if (!table && c.prices) table = harness::load_price_table(*c.prices);
    }
    if (run_dirs.empty()) throw PreconditionError("report needs --config or at least one run directory");
    std::vector<harness::EvalReport> reports;
    for (const auto& d : run_dirs) {
        const auto records = harness::read_records(d / "records.jsonl");
        if (records.empty()) throw DataError("no records in " + d.string());
        reports.push_back(harness::compute_report(records, table.value_or(harness::PriceTable{})));
    }
    const auto fmt = format == "json" ? harness::ReportFormat::json : harness::ReportFormat::markdown_table;
    std::cout << harness::emit_report(reports, fmt);
    return 0;
}

harness::EvalReport single_report(const fs::path& p) {
    const auto reports = harness::parse_reports_json(read_file(p));
    if (reports.size() != 1) throw DataError(p.string() + " must hold exactly one report");
    return reports.front();
}

int cmd_select(const fs::path& few, const fs::path& many) {
    const auto d = harness::select_tasks(single_report(few), single_report(many));
    std::cout << d.task_id << ": few " << harness::detail::fixed(d.few_accuracy, 1) << ", many "
              << harness::detail::fixed(d.many_accuracy, 1) << ", delta " << harness::detail::fixed(d.delta, 2) << " -> "
              << (d.selected ? "selected" : "not selected") << "\n";
    return 0;
}

int cmd_retrieve(const Globals& g, const std::string& query, const std::string& method, std::size_t k) {
    const auto c = load_config(g);
    const auto reg = datasets::TaskRegistry::load(c.registry);
    const auto pool = load_pool(c, reg.at(c.task_id));
    std::vector<std::string> docs;
    for (const auto& d : pool) docs.push_back(d.input);
    const auto m = retrieval::method_from_string(method);
    retrieval::RetrievalResult r;
    if (m == retrieval::Method::bm25) {
        r = retrieval::bm25_topk(retrieval::build_bm25(docs, c.bm25), query, k);
    } else if (m == retrieval::Method::cosine) {
        auto clients = app::make_clients(c);
        const auto index = retrieval::EmbeddingIndex::build(clients.inference->embed(c.embedding_model_id, docs));
        const std::vector<std::string> q{query};
        r = retrieval::cosine_topk(index, clients.inference->embed(c.embedding_model_id, q).front(), k);
    } else {
        r = retrieval::set_coverage_topk(docs, query, k);
    }
    for (std::size_t i = 0; i < r.demo_indices.size(); ++i) {
        std::cout << r.demo_indices[i] << "\t" << harness::detail::fixed(r.scores[i], 6) << "\t"
                  << docs[r.demo_indices[i]] << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cheat-sheet in-context learning toolkit"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config, "Run configuration (JSON)");
    app.add_option("--seed-list", g.seed_list, "Comma separated seeds, overrides the config");
    app.add_option("--transport", g.transport, "live or replay")->check(CLI::IsMember({"live", "replay"}));
    app.add_option("--cache-dir", g.cache_dir, "Response cache directory");
    app.add_option("--work-dir", g.work_dir, "Put cache, sheets, augmented pools and runs under this directory");

    auto* augment = app.add_subcommand("augment", "Generate rationales for the demonstration pool");

    auto* sheet = app.add_subcommand("sheet", "Cheat sheet management");
    sheet->require_subcommand(1);
    bool force = false;
    auto* sheet_create = sheet->add_subcommand("create", "Create one sheet per seed");
    sheet_create->add_flag("--force", force, "Regenerate even if a sheet exists");
    std::int64_t show_seed = 0;
    auto* sheet_show = sheet->add_subcommand("show", "Print the sheet for a seed");
    sheet_show->add_option("--seed", show_seed, "Seed")->default_val(0);

    auto* run = app.add_subcommand("run", "Run an experiment and write records and reports");

    std::vector<fs::path> run_dirs;
    std::string format = "markdown";
    fs::path prices;
    auto* report = app.add_subcommand("report", "Summarize one or more run directories");
    report->add_option("runs", run_dirs, "Run output directories");
    report->add_option("--format", format)->check(CLI::IsMember({"markdown", "json"}))->default_val("markdown");
    report->add_option("--prices", prices, "Price table (JSON)");

    fs::path few;
    fs::path many;
    auto* select = app.add_subcommand("select-tasks", "Apply the many-shot vs few-shot selection rule");
    select->add_option("--few", few, "report.json of the few-shot run")->required();
    select->add_option("--many", many, "report.json of the many-shot run")->required();

    std::string query;
    std::string method = "bm25";
    std::size_t k = retrieval::kDefaultK;
    auto* retrieve = app.add_subcommand("retrieve", "Print the top-k demonstrations for a query");
    retrieve->add_option("--query", query, "Query text")->required();
    retrieve->add_option("--method", method)->check(CLI::IsMember({"bm25", "cosine", "set_coverage"}));
    retrieve->add_option("--k", k)->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*augment) return cmd_augment(g);
        if (*sheet_create) return cmd_sheet_create(g, force);
        if (*sheet_show) return cmd_sheet_show(g, show_seed);
        if (*run) return cmd_run(g);
        if (*report) return cmd_report(g, run_dirs, format, prices);
        if (*select) return cmd_select(few, many);
        if (*retrieve) return cmd_retrieve(g, query, method, k);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

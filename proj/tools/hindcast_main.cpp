// Operator CLI: dataset build, run execution, report generation, and
// leakage-audit sampling/scoring.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <string>

#include "hindcast/analysis/report.hpp"
#include "hindcast/dataset/build.hpp"
#include "hindcast/net/http_transport.hpp"
#include "hindcast/runner/runner.hpp"

using namespace hindcast;

namespace {

int cmd_build_dataset(const std::string& source_path, const std::string& out_path,
                      const std::string& templates_path, const std::string& approved_ids_path) {
    std::ifstream in(source_path);
    if (!in) {
        std::cerr << "cannot open source: " << source_path << "\n";
        return 2;
    }
    std::vector<dataset::RawRecord> rows;
    std::string line;
    size_t line_no = 0;
    size_t unparseable = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto stripped = strip(line);
        if (stripped.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(stripped, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            std::cerr << "reject line " << line_no << ": not a JSON object\n";
            ++unparseable;
            continue;
        }
        rows.push_back(dataset::RawRecord::from_json(j));
    }

    prompts::PromptTemplateSet templates = prompts::default_templates();
    if (!templates_path.empty()) {
        std::ifstream tin(templates_path);
        if (!tin) {
            std::cerr << "cannot open templates: " << templates_path << "\n";
            return 2;
        }
        nlohmann::json j = nlohmann::json::parse(tin);
        std::map<std::string, std::string> kv;
        for (auto& [key, value] : j.items()) kv[key] = value.get<std::string>();
        templates = prompts::PromptTemplateSet::from_map(kv);
    }

    std::unique_ptr<dataset::AuditGate> gate;
    if (!approved_ids_path.empty()) {
        std::ifstream ain(approved_ids_path);
        if (!ain) {
            std::cerr << "cannot open approved-ids manifest: " << approved_ids_path << "\n";
            return 2;
        }
        std::set<std::string> ids;
        std::string id;
        while (std::getline(ain, id))
            if (!strip(id).empty()) ids.insert(std::string(strip(id)));
        gate = std::make_unique<dataset::ApprovedIdsGate>(std::move(ids));
    } else {
        gate = std::make_unique<dataset::PassThroughGate>();
    }

    auto report = dataset::build_dataset(rows, out_path, *gate, templates);
    for (auto& r : report.rejected)
        std::cerr << "reject row " << r.source_index << " (" << r.id << "): " << r.reason << "\n";
    std::cout << "questions_kept=" << report.n_kept << "\n";
    std::cout << "source_db_hash=" << report.source_db_hash << "\n";
    std::cout << "metadata_hash=" << report.metadata_hash << "\n";
    std::cout << "prompt_templates_hash=" << prompts::template_hash(templates) << "\n";
    return (unparseable + report.rejected.size()) > 0 ? 3 : 0;
}

int cmd_run(Settings& settings, store::RunSpec spec, const std::string& run_id) {
    auto problems = llm::validate_settings(settings, spec.model_slug);
    if (!problems.empty()) {
        for (auto& p : problems) std::cerr << "fatal: " << p << "\n";
        return 2;
    }

    runner::RunContext ctx;
    ctx.settings = settings;
    ctx.spec = spec;
    ctx.run_id = run_id;
    ctx.dataset_path = spec.dataset_ref;
    ctx.backends.chat = std::make_shared<net::HttpChatTransport>(settings.get("LLM_BASE_URL"));
    ctx.backends.search_backend =
        std::make_shared<net::TavilySearchBackend>(settings.get("TAVILY_BASE_URL"));
    std::string detector_base = settings.get("LEAK_DETECTOR_BASE_URL");
    if (detector_base.empty()) detector_base = settings.get("LLM_BASE_URL");
    ctx.backends.detector = std::make_shared<net::HttpChatTransport>(detector_base);

    try {
        auto info = runner::execute_run(ctx);
        std::cout << "run_id=" << info.run_id << "\n";
        std::cout << "run_dir=" << info.run_dir.string() << "\n";
        std::cout << "executed=" << info.executed << " cutoff_skipped=" << info.cutoff_skipped
                  << " total=" << info.total_samples << "\n";
        return info.aborted ? 4 : 0;
    } catch (const std::exception& e) {
        std::cerr << "run failed: " << e.what() << "\n";
        return 1;
    }
}

std::map<std::string, double> parse_costs(const std::vector<std::string>& entries) {
    std::map<std::string, double> costs;
    for (auto& entry : entries) {
        auto eq = entry.rfind('=');
        if (eq == std::string::npos) throw CLI::ValidationError("--cost expects model=value");
        costs[entry.substr(0, eq)] = std::stod(entry.substr(eq + 1));
    }
    return costs;
}

int cmd_analyze(const std::vector<std::string>& run_dirs, const std::string& dataset_path,
                const std::vector<std::string>& cost_entries, std::string out_dir) {
    dataset::Store ds(dataset_path);
    std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
    auto summaries = analysis::summarize_run(dirs, ds, parse_costs(cost_entries));
    if (out_dir.empty()) out_dir = (dirs.front() / "analysis").string();
    analysis::write_reports(out_dir, summaries);
    std::cout << analysis::per_model_summary_csv(summaries);
    std::cout << "reports written to " << out_dir << "\n";
    return 0;
}

int cmd_audit_sample(const std::vector<std::string>& run_dirs, analysis::AuditPlan plan,
                     const std::string& out_path) {
    std::vector<std::filesystem::path> dirs(run_dirs.begin(), run_dirs.end());
    std::vector<std::string> skipped;
    auto rows = analysis::sample_audit_rows(dirs, plan, &skipped);
    for (auto& s : skipped) std::cerr << "skip " << s << "\n";
    std::string sheet = analysis::audit_sheet_csv(rows, plan);
    if (out_path.empty()) {
        std::cout << sheet;
    } else {
        std::ofstream(out_path) << sheet;
        std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";
    }
    return 0;
}

int cmd_audit_score(const std::string& sheet_path) {
    std::ifstream in(sheet_path);
    if (!in) {
        std::cerr << "cannot open sheet: " << sheet_path << "\n";
        return 2;
    }
    auto confusion = analysis::score_audit_sheet(in);
    int n = confusion.tp + confusion.tn + confusion.fp + confusion.fn;
    if (n == 0) {
        std::cerr << "no labelled rows in the sheet\n";
        return 3;
    }
    auto stats = metrics::audit_stats(confusion.tp, confusion.tn, confusion.fp, confusion.fn);
    nlohmann::json out = {
        {"tp", confusion.tp},
        {"tn", confusion.tn},
        {"fp", confusion.fp},
        {"fn", confusion.fn},
        {"per_item_rate", stats.per_item_rate},
        {"wilson_upper_95", stats.wilson_upper_95},
    };
    if (stats.recall) out["recall"] = *stats.recall;
    if (stats.specificity) out["specificity"] = *stats.specificity;
    if (stats.leak_conditional) out["leak_conditional"] = *stats.leak_conditional;
    std::cout << out.dump(2) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hindcast: replay resolved discrete-choice events as time-masked forecasts"};
    app.require_subcommand(1);

    std::string env_file;
    app.add_option("--env-file", env_file, "dotenv-style file supplying configuration defaults");

    // build-dataset
    auto* build = app.add_subcommand("build-dataset", "materialize the question corpus");
    std::string source_path, out_path, templates_path, approved_ids_path;
    build->add_option("--source", source_path, "JSONL source rows")->required();
    build->add_option("--out", out_path, "output store path")->required();
    build->add_option("--templates", templates_path, "prompt template JSON (eight keys)");
    build->add_option("--approved-ids", approved_ids_path,
                      "manifest of pre-approved question ids (one per line)");

    // run
    auto* run = app.add_subcommand("run", "execute a time-masked evaluation run");
    store::RunSpec spec;
    std::string run_id;
    run->add_option("--dataset", spec.dataset_ref, "dataset store path")->required();
    run->add_option("--model", spec.model_slug, "model slug")->required();
    run->add_option("--cutoff", spec.model_cutoff,
                    "model knowledge cutoff (YYYY-MM-DD or YYYY-MM)")
        ->required();
    run->add_option("--delta", spec.delta_days, "temporal offset in days (default 1)");
    run->add_option("--trials", spec.trials, "independent trials per question (default 3)");
    run->add_option("--steps,-T", spec.step_cap, "message-round cap (default 6)");
    run->add_option("--searches,-C", spec.search_cap, "search-call cap (default 4)");
    run->add_option("--run-id", run_id, "existing run id to resume");
    run->add_flag("--reflection", spec.reflection_enabled, "enable the reflection scaffold");
    run->add_flag("--belief", spec.belief_enabled, "enable the belief-block protocol");
    run->add_option("--temperature", spec.temperature, "sampling temperature (default 0.7)");
    run->add_option("--max-tokens", spec.max_tokens, "completion token cap (default 12000)");

    // analyze
    auto* analyze = app.add_subcommand("analyze", "aggregate run stores into reports");
    std::vector<std::string> run_dirs, cost_entries;
    std::string dataset_path, analyze_out;
    analyze->add_option("--run", run_dirs, "run directory (repeatable)")->required();
    analyze->add_option("--dataset", dataset_path, "dataset store path")->required();
    analyze->add_option("--cost", cost_entries, "total invoice per model, model=usd (repeatable)");
    analyze->add_option("--out", analyze_out, "output directory (default <first run>/analysis)");

    // audit-sample
    auto* audit = app.add_subcommand("audit-sample", "sample search results for human labelling");
    std::vector<std::string> audit_dirs;
    analysis::AuditPlan plan;
    std::string sheet_out;
    bool seed_given = false;
    audit->add_option("--run", audit_dirs, "run directory (repeatable)")->required();
    audit->add_option("--models", plan.models, "virtual model slugs to audit (default first 3)");
    audit->add_option("--questions", plan.questions_per_model, "questions per model (default 30)");
    audit->add_option("--trials", plan.trials, "trials per question (default 3)");
    audit->add_option("--per-item", plan.results_per_item, "results per item (default 1)");
    audit->add_option("--seed", plan.seed, "sampling seed (recorded in the sheet header)")
        ->each([&](const std::string&) { seed_given = true; });
    audit->add_option("--out", sheet_out, "sheet output path (default stdout)");

    // audit-score
    auto* score = app.add_subcommand("audit-score", "score a human-labelled audit sheet");
    std::string sheet_path;
    score->add_option("--sheet", sheet_path, "filled audit sheet")->required();

    CLI11_PARSE(app, argc, argv);

    Settings settings = Settings::from_env(env_file);

    if (build->parsed())
        return cmd_build_dataset(source_path, out_path, templates_path, approved_ids_path);
    if (run->parsed()) {
        if (spec.dataset_ref.empty()) spec.dataset_ref = settings.get("SOURCE_DB");
        return cmd_run(settings, spec, run_id);
    }
    if (analyze->parsed()) return cmd_analyze(run_dirs, dataset_path, cost_entries, analyze_out);
    if (audit->parsed()) {
        if (!seed_given) plan.seed = std::random_device{}();
        return cmd_audit_sample(audit_dirs, plan, sheet_out);
    }
    if (score->parsed()) return cmd_audit_score(sheet_path);
    return 0;
}

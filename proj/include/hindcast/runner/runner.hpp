#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/concurrency.hpp"
#include "hindcast/core/settings.hpp"
#include "hindcast/dataset/build.hpp"
#include "hindcast/dataset/store.hpp"
#include "hindcast/gateway/chat.hpp"
#include "hindcast/leakfilter/leakfilter.hpp"
#include "hindcast/parser/answer.hpp"
#include "hindcast/parser/belief.hpp"
#include "hindcast/react/loop.hpp"
#include "hindcast/renderer/render.hpp"
#include "hindcast/search/search.hpp"
#include "hindcast/store/run_store.hpp"

namespace hindcast::runner {

// Plain line logger: stdout plus the run log file.
class RunLogger {
public:
    explicit RunLogger(const std::filesystem::path& path, bool echo = true) : echo_(echo) {
        file_.open(path, std::ios::app);
    }
    void line(const std::string& text) {
        std::lock_guard lock(mu_);
        std::string stamped = store::utc_now_iso() + " " + text;
        if (file_) file_ << stamped << "\n" << std::flush;
        if (echo_) std::cout << stamped << "\n";
    }

private:
    std::mutex mu_;
    std::ofstream file_;
    bool echo_;
};

struct RunBackends {
    std::shared_ptr<llm::ChatTransport> chat;
    std::shared_ptr<search::SearchBackend> search_backend;
    std::shared_ptr<llm::ChatTransport> detector;  // defaults to the chat transport
};

struct RunContext {
    Settings settings;
    store::RunSpec spec;
    std::string run_id;  // empty: fresh id
    std::filesystem::path dataset_path;
    RunBackends backends;
    Sleeper sleep = real_sleep;
    // Return false to stop dispatching further samples (the resumable-kill
    // path). Called after every completed sample.
    std::function<bool(int done, int total)> progress;
    bool echo_log = true;
};

struct RunOutcomeInfo {
    std::string run_id;
    std::filesystem::path run_dir;
    int total_samples = 0;
    int pre_accounted = 0;
    int executed = 0;
    int cutoff_skipped = 0;
    bool aborted = false;
    std::string abort_reason;
};

namespace detail {

inline parser::QuestionShape shape_of(const dataset::Question& q) {
    return {q.question_type, q.choice_type, q.options};
}

// Belief-trace JSON: a list of per-step probability vectors.
inline std::string belief_trace_json(const std::vector<parser::BeliefVector>& trace) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& b : trace) arr.push_back(b.probabilities);
    return arr.dump();
}

inline std::string messages_json(const std::vector<llm::ChatMessage>& messages) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& m : messages) arr.push_back(m.to_json());
    return arr.dump();
}

}  // namespace detail

// End-to-end execution of one run spec: plan with cutoff exclusions
// pre-seeded, bounded concurrent trials, hash-chained persistence, resume by
// run id. Auth aborts the run with the partial store intact.
inline RunOutcomeInfo execute_run(RunContext& ctx) {
    const auto& spec = ctx.spec;
    RunOutcomeInfo info;

    dataset::Store ds(ctx.dataset_path.string());
    auto questions = ds.load_questions();
    auto templates = ds.load_templates();
    auto metadata = ds.load_metadata();

    // Optional override: a JSON file carrying the eight renderer keys. The
    // default (and normal) path is the store's prompt_templates table.
    if (!ctx.settings.get("PROMPT_TEMPLATES_PATH").empty()) {
        std::ifstream in(ctx.settings.get("PROMPT_TEMPLATES_PATH"));
        if (!in)
            throw std::runtime_error("PROMPT_TEMPLATES_PATH not readable: " +
                                     ctx.settings.get("PROMPT_TEMPLATES_PATH"));
        nlohmann::json j = nlohmann::json::parse(in);
        std::map<std::string, std::string> kv;
        for (auto& [key, value] : j.items()) kv[key] = value.get<std::string>();
        templates = prompts::PromptTemplateSet::from_map(kv);
    }

    prompts::ProtocolConfig protocol;
    protocol.reflection_enabled = spec.reflection_enabled;
    protocol.belief_enabled = spec.belief_enabled;
    protocol.step_cap = spec.step_cap;
    protocol.search_cap = spec.search_cap;
    protocol.lookahead = ctx.settings.get_int("REACT_FORCE_FINAL_ANSWER_LOOKAHEAD");
    protocol.reflection_text = prompts::load_text_resource(
        ctx.settings.get("REFLECTION_PROTOCOL_PATH"), prompts::kReflectionScaffold, "reflection");
    protocol.belief_text = prompts::load_text_resource(ctx.settings.get("BELIEF_PROTOCOL_PATH"),
                                                       prompts::kBeliefRequest, "belief");

    bool filter_enabled = ctx.settings.get_bool("ENABLE_SEARCH_LEAK_FILTER");
    std::string detector_prompt =
        prompts::load_text_resource(ctx.settings.get("LEAK_DETECTOR_PROMPT_PATH"),
                                    leakfilter::kDetectorPrompt, "detector prompt");
    if (filter_enabled && detector_prompt.empty())
        throw std::runtime_error("leak filter enabled but the detector prompt is empty");

    store::HashChain chain;
    chain.source_db_hash = sha256_file(ctx.dataset_path.string());
    auto features = metadata.find("features_json");
    chain.metadata_hash = sha256_hex(features != metadata.end() ? features->second : "");
    chain.prompt_templates_hash = prompts::template_hash(templates);
    if (spec.reflection_enabled) chain.reflection_protocol_hash = sha256_16(protocol.reflection_text);
    if (spec.belief_enabled) chain.belief_protocol_hash = sha256_16(protocol.belief_text);
    if (filter_enabled)
        chain.leak_detector_prompt_hash = leakfilter::detector_prompt_hash(detector_prompt);

    nlohmann::json snapshot = store::redact_settings(ctx.settings);
    snapshot["leak_detector_enabled"] = filter_enabled;
    snapshot["leak_detector_model"] = ctx.settings.get("LEAK_DETECTOR_MODEL");
    if (chain.leak_detector_prompt_hash)
        snapshot["leak_detector_prompt_hash"] = *chain.leak_detector_prompt_hash;
    snapshot["reflection_protocol_source"] =
        ctx.settings.get("REFLECTION_PROTOCOL_PATH").empty()
            ? "builtin"
            : ctx.settings.get("REFLECTION_PROTOCOL_PATH");
    snapshot["belief_protocol_source"] = ctx.settings.get("BELIEF_PROTOCOL_PATH").empty()
                                             ? "builtin"
                                             : ctx.settings.get("BELIEF_PROTOCOL_PATH");
    snapshot["detector_prompt_source"] = ctx.settings.get("LEAK_DETECTOR_PROMPT_PATH").empty()
                                             ? "builtin"
                                             : ctx.settings.get("LEAK_DETECTOR_PROMPT_PATH");

    info.run_id = ctx.run_id.empty() ? store::new_run_id() : ctx.run_id;
    store::RunLayout layout =
        store::RunLayout::init(ctx.settings.get("RUNS_ROOT"), info.run_id);
    info.run_dir = layout.root;
    store::write_manifest(layout, info.run_id, spec, chain, snapshot);

    RunLogger log(layout.log_path, ctx.echo_log);

    std::string virtual_slug =
        store::encode_virtual_slug(spec.model_slug, spec.step_cap, spec.search_cap);
    auto db_path = layout.db_dir / (store::sanitize_slug(virtual_slug) + ".db");
    store::TrialDb db(db_path.string(), spec.trials);
    db.write_meta("run_id", info.run_id);
    db.write_meta("model", virtual_slug);
    db.write_meta("run_spec", spec.to_json().dump());
    db.write_meta("source_db_hash", chain.source_db_hash);
    db.write_meta("metadata_hash", chain.metadata_hash);
    db.write_meta("prompt_templates_hash", chain.prompt_templates_hash);
    db.write_meta("reflection_protocol_hash", chain.reflection_protocol_hash.value_or(""));
    db.write_meta("belief_protocol_hash", chain.belief_protocol_hash.value_or(""));
    db.write_meta("leak_detector_prompt_hash", chain.leak_detector_prompt_hash.value_or(""));
    db.write_meta("config_snapshot", snapshot.dump());

    auto model_cutoff = Date::parse_cutoff(spec.model_cutoff);
    if (!model_cutoff)
        throw std::invalid_argument("unparseable model cutoff: " + spec.model_cutoff);

    // Plan: pre-seed cutoff exclusions so the [done/total] counters stay
    // predictable from the first log line.
    struct Task {
        const dataset::Question* q;
        int trial;
        std::string prompt;
    };
    std::vector<Task> tasks;
    std::mutex db_mu;  // single writer
    info.total_samples = static_cast<int>(questions.size()) * spec.trials;

    std::map<std::string, std::string> prompts_by_q;
    for (auto& q : questions) {
        auto verdict = dataset::admissible(q, *model_cutoff, spec.delta_days);
        dataset::MaskedQuestion masked = dataset::mask(q, spec.delta_days);
        prompts::RenderedPrompt rendered =
            prompts::append_protocols(prompts::render_user_prompt(masked, templates), protocol);
        prompts_by_q[q.id] = rendered.text;
        db.ensure_row(q.id, virtual_slug, model_cutoff->to_iso(), spec.delta_days, rendered.text);
        for (int j = 1; j <= spec.trials; ++j) {
            if (db.accounted(q.id, j)) {
                ++info.pre_accounted;
                continue;
            }
            if (!verdict.admissible) {
                db.seed_cutoff_skip(q.id, j);
                ++info.cutoff_skipped;
                ++info.pre_accounted;
                log.line("skip " + q.id + " trial " + std::to_string(j) + ": " +
                         to_string(verdict.reason));
                continue;
            }
            tasks.push_back({&q, j, rendered.text});
        }
    }
    log.line("[" + std::to_string(info.pre_accounted) + "/" +
             std::to_string(info.total_samples) + "] planned; " +
             std::to_string(tasks.size()) + " samples to execute");

    llm::GatewayConfig gateway_cfg = llm::GatewayConfig::from_settings(ctx.settings);
    auto llm_keys = std::make_shared<llm::KeyRing>(ctx.settings.get_list("LLM_API_KEY"));
    auto llm_permits = std::make_shared<Semaphore>(ctx.settings.get_int("LLM_MAX_CONCURRENCY"));
    auto search_permits =
        std::make_shared<Semaphore>(ctx.settings.get_int("SEARCH_MAX_CONCURRENCY"));

    std::shared_ptr<search::SearchGateway> search_gateway;
    if (ctx.backends.search_backend) {
        auto pool = search::KeyPool::shared_for(ctx.settings.get_list("TAVILY_API_KEY"),
                                                ctx.settings.get_double("SEARCH_COOLDOWN_S"));
        search::SearchConfig scfg;
        scfg.max_results = ctx.settings.get_int("SEARCH_MAX_RESULTS");
        scfg.truncate_chars = static_cast<size_t>(ctx.settings.get_int("SEARCH_TRUNCATE_CHARS"));
        scfg.retry_max = ctx.settings.get_int("SEARCH_RETRY_MAX");
        scfg.backoff_s = ctx.settings.get_double_list("SEARCH_BACKOFF_S");
        search_gateway = std::make_shared<search::SearchGateway>(ctx.backends.search_backend,
                                                                 pool, scfg, ctx.sleep);
    }

    std::shared_ptr<leakfilter::Detector> detector;
    if (filter_enabled) {
        leakfilter::DetectorConfig dcfg;
        dcfg.enabled = true;
        dcfg.model = ctx.settings.get("LEAK_DETECTOR_MODEL");
        dcfg.prompt_template = detector_prompt;
        dcfg.fail_action = ctx.settings.get("LEAK_DETECTOR_FAIL_ACTION") == "keep"
                               ? leakfilter::FailAction::keep
                               : leakfilter::FailAction::drop;
        dcfg.backoff_s = ctx.settings.get_double_list("LEAK_DETECTOR_BACKOFF_S");
        dcfg.max_concurrency = ctx.settings.get_int("LEAK_DETECTOR_MAX_CONCURRENCY");
        auto detector_keys = std::make_shared<llm::KeyRing>(
            ctx.settings.get("LEAK_DETECTOR_API_KEY").empty()
                ? ctx.settings.get_list("LLM_API_KEY")
                : ctx.settings.get_list("LEAK_DETECTOR_API_KEY"));
        detector = std::make_shared<leakfilter::Detector>(
            dcfg, ctx.backends.detector ? ctx.backends.detector : ctx.backends.chat,
            detector_keys, ctx.sleep);
    }

    react::LoopConfig loop_cfg;
    loop_cfg.step_cap = spec.step_cap;
    loop_cfg.search_cap = spec.search_cap;
    loop_cfg.lookahead = protocol.lookahead;
    loop_cfg.drop_tools_on_budget_exceeded =
        ctx.settings.get_bool("REACT_BUDGET_EXCEEDED_DROP_TOOLS");
    loop_cfg.min_search_calls = ctx.settings.get_int("REACT_MIN_SEARCH_CALLS");
    loop_cfg.final_answer_retry = ctx.settings.get_bool("REACT_FINAL_ANSWER_RETRY");

    bool write_trace = ctx.settings.get_bool("WRITE_MESSAGES_TRACE");
    std::atomic<bool> cancel{false};
    std::atomic<bool> auth_failed{false};
    std::atomic<int> done{info.pre_accounted};
    std::string abort_reason;
    std::mutex abort_mu;

    auto run_one = [&](const Task& task) {
        const dataset::Question& q = *task.q;
        auto masked = dataset::mask(q, spec.delta_days);
        Date chi = masked.prediction_cutoff;

        react::ModelCaller caller = [&](const std::vector<llm::ChatMessage>& messages,
                                        const std::vector<nlohmann::json>& tools) {
            llm::ChatRequest req;
            req.model_slug = spec.model_slug;  // the ::r/::c suffix never reaches the wire
            req.messages = messages;
            req.tools = tools;
            req.sampling.temperature = spec.temperature;
            req.sampling.top_p = spec.top_p;
            req.sampling.max_tokens = spec.max_tokens;
            req.sampling.timeout_s = ctx.settings.get_double("LLM_TIMEOUT_S");
            SemaphoreGuard permit(*llm_permits);
            return llm::send_chat(req, *ctx.backends.chat, *llm_keys, gateway_cfg, ctx.sleep);
        };
        react::SearchFn search_fn = [&](const std::string& query) {
            if (!search_gateway) throw search::SearchCallError("no search backend configured");
            SemaphoreGuard permit(*search_permits);
            return search_gateway->search(query, chi);
        };
        react::FilterFn filter_fn = [&](const std::vector<search::SearchResultItem>& items) {
            return leakfilter::filter_results(items, chi, detector.get());
        };

        react::TrialResult trial = react::run_loop(task.prompt, loop_cfg, caller, search_fn,
                                                   filter_fn);

        store::TrialPersist persist;
        persist.created_at = store::utc_now_iso();
        if (trial.error != llm::ErrorKind::none) persist.error = llm::to_string(trial.error);
        if (trial.final_raw) {
            persist.final_answer_raw = trial.final_raw;
            auto parsed = parser::parse_answer(*trial.final_raw, detail::shape_of(q));
            if (parsed.ok())
                persist.final_answer_letters = dataset::letters_to_string(*parsed.value);
        }
        if (spec.belief_enabled) {
            std::vector<parser::BeliefVector> trace;
            for (auto& block : trial.belief_blocks)
                if (auto b = parser::parse_belief_block(block, detail::shape_of(q)))
                    trace.push_back(*b);
            persist.belief_parse_ok = !trace.empty();
            if (!trace.empty()) {
                persist.belief_final = nlohmann::json(trace.back().probabilities).dump();
                persist.belief_trace = detail::belief_trace_json(trace);
            }
        }
        persist.final_answer_retry_used = trial.final_answer_retry_used;
        nlohmann::json calls = nlohmann::json::array();
        for (auto& c : trial.search_calls) calls.push_back(c.to_json());
        persist.search_calls_json = calls.dump();
        if (write_trace) persist.messages_trace = detail::messages_json(trial.messages);
        persist.finish_reason = trial.markers.finish_reason;
        persist.response_id = trial.markers.response_id;
        persist.system_fingerprint = trial.markers.system_fingerprint;
        persist.service_tier = trial.markers.service_tier;
        persist.nudges_used = trial.nudges_used;
        nlohmann::json steps = nlohmann::json::array();
        for (auto& s : trial.step_metrics) {
            steps.push_back(s.to_json());
            persist.latency_ms += s.latency_ms;
            persist.prompt_tokens += s.prompt_tokens;
            persist.completion_tokens += s.completion_tokens;
        }
        persist.step_metrics_json = steps.dump();

        {
            std::lock_guard lock(db_mu);
            db.write_trial(q.id, task.trial, persist);
        }
        int now_done = ++done;
        log.line("[" + std::to_string(now_done) + "/" + std::to_string(info.total_samples) +
                 "] " + q.id + " trial " + std::to_string(task.trial) +
                 (persist.error ? " error=" + *persist.error : ""));
        if (ctx.progress && !ctx.progress(now_done, info.total_samples)) cancel = true;
    };

    int workers = ctx.settings.get_int("LLM_MAX_CONCURRENCY");
    std::atomic<int> executed{0};
    try {
        parallel_for_indexed(tasks.size(), workers, [&](size_t i) {
            if (cancel || auth_failed) return;
            try {
                run_one(tasks[i]);
                ++executed;
            } catch (const llm::AuthError& e) {
                auth_failed = true;
                std::lock_guard lock(abort_mu);
                abort_reason = e.what();
            }
        });
    } catch (...) {
        info.aborted = true;
        throw;
    }
    info.executed = executed;

    if (auth_failed) {
        info.aborted = true;
        info.abort_reason = abort_reason;
        log.line("run aborted: " + abort_reason + " (store is resumable)");
    } else if (cancel) {
        info.aborted = true;
        info.abort_reason = "cancelled";
        log.line("run cancelled; accounted samples persist, resume with the same run id");
    } else {
        log.line("run complete");
    }
    return info;
}

}  // namespace hindcast::runner

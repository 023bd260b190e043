#pragma once

#include <chrono>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/gateway/chat.hpp"
#include "hindcast/leakfilter/leakfilter.hpp"
#include "hindcast/parser/answer.hpp"
#include "hindcast/parser/belief.hpp"
#include "hindcast/search/search.hpp"

namespace hindcast::react {

enum class InjectionPath {
    none,
    last_step_hard_cutoff,
    penultimate_soft_warning,
    budget_commit_notice,
    unboxed_continuation,
};

struct LoopConfig {
    int step_cap = 6;     // T
    int search_cap = 4;   // C
    int lookahead = 2;    // REACT_FORCE_FINAL_ANSWER_LOOKAHEAD
    bool drop_tools_on_budget_exceeded = true;
    int min_search_calls = 0;
    bool final_answer_retry = false;
};

struct LoopState {
    int step = 1;
    int searches_used = 0;
    bool last_turn_unboxed = false;
};

// Mutually exclusive runtime injection paths, evaluated at the top of every
// iteration in descending priority. At most one fires per turn.
inline InjectionPath select_injection(const LoopState& s, const LoopConfig& cfg) {
    if (s.step >= cfg.step_cap) return InjectionPath::last_step_hard_cutoff;
    if (cfg.step_cap - s.step < cfg.lookahead && s.searches_used < cfg.search_cap)
        return InjectionPath::penultimate_soft_warning;
    if (s.searches_used >= cfg.search_cap && cfg.drop_tools_on_budget_exceeded)
        return InjectionPath::budget_commit_notice;
    if (s.last_turn_unboxed) return InjectionPath::unboxed_continuation;
    return InjectionPath::none;
}

inline bool injection_strips_tools(InjectionPath p) {
    return p == InjectionPath::last_step_hard_cutoff || p == InjectionPath::budget_commit_notice;
}

// Exact live-counter header carried by every harness-injected message.
inline std::string status_header(const LoopState& s, const LoopConfig& cfg) {
    return "[Harness status] step " + std::to_string(s.step) + "/" +
           std::to_string(cfg.step_cap) + " (" + std::to_string(cfg.step_cap - s.step) +
           " remaining) \xC2\xB7 web_search " + std::to_string(s.searches_used) + "/" +
           std::to_string(cfg.search_cap) + " used (" +
           std::to_string(cfg.search_cap - s.searches_used) + " left).";
}

inline std::string injection_directive(InjectionPath p) {
    switch (p) {
        case InjectionPath::last_step_hard_cutoff:
            return "This is the final step: reply with content only and state your final "
                   "prediction inside \\boxed{...} now.";
        case InjectionPath::penultimate_soft_warning:
            return "The step budget is nearly exhausted: one more search is permitted, "
                   "otherwise commit your final \\boxed{...} prediction.";
        case InjectionPath::budget_commit_notice:
            return "The search budget is spent: continue without search and commit your "
                   "final \\boxed{...} prediction on this or the next turn.";
        case InjectionPath::unboxed_continuation:
            return "Your last reply contained no parseable \\boxed{...} prediction: resume "
                   "reasoning or commit \\boxed{...} now.";
        case InjectionPath::none:
            break;
    }
    return "";
}

// One executed (or budget-refused) web_search, with its forensic audit.
struct SearchCallRecord {
    int step = 0;
    std::string query;
    bool executed = false;
    bool ok = false;
    std::string error;
    leakfilter::AuditRecord audit;
    bool cleared_answer = false;

    nlohmann::json to_json() const {
        return {{"step", step},          {"query", query},
                {"executed", executed},  {"ok", ok},
                {"error", error},        {"audit", audit.to_json()},
                {"cleared_answer", cleared_answer}};
    }
    static SearchCallRecord from_json(const nlohmann::json& j) {
        SearchCallRecord r;
        r.step = j.value("step", 0);
        r.query = j.value("query", "");
        r.executed = j.value("executed", false);
        r.ok = j.value("ok", false);
        r.error = j.value("error", "");
        if (j.contains("audit")) r.audit = leakfilter::AuditRecord::from_json(j["audit"]);
        r.cleared_answer = j.value("cleared_answer", false);
        return r;
    }
};

struct StepMetric {
    int step = 0;
    std::string action;  // search | content | answer | error
    std::int64_t latency_ms = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    nlohmann::json to_json() const {
        return {{"step", step},
                {"action", action},
                {"latency_ms", latency_ms},
                {"prompt_tokens", prompt_tokens},
                {"completion_tokens", completion_tokens}};
    }
};

struct TrialResult {
    std::optional<std::string> final_raw;  // terminal text; nullopt = invalid output
    llm::ErrorKind error = llm::ErrorKind::none;
    std::string error_detail;
    std::vector<llm::ChatMessage> messages;
    std::vector<SearchCallRecord> search_calls;
    std::vector<std::string> belief_blocks;  // raw per-step blocks, in order
    int steps_used = 0;
    int searches_used = 0;
    int nudges_used = 0;
    bool final_answer_retry_used = false;
    llm::ResponseMarkers markers;
    std::vector<StepMetric> step_metrics;
};

using ModelCaller = std::function<llm::ChatOutcome(const std::vector<llm::ChatMessage>&,
                                                   const std::vector<nlohmann::json>&)>;
using SearchFn = std::function<search::SearchResponse(const std::string& query)>;
using FilterFn =
    std::function<leakfilter::FilterOutcome(const std::vector<search::SearchResultItem>&)>;

namespace detail {

inline nlohmann::json results_payload(const leakfilter::FilterOutcome& filtered,
                                      const std::string& provider_answer) {
    nlohmann::json results = nlohmann::json::array();
    for (auto& item : filtered.kept) {
        results.push_back({{"title", item.title},
                           {"url", item.url},
                           {"published_date", item.published_date
                                                  ? nlohmann::json(*item.published_date)
                                                  : nlohmann::json(nullptr)},
                           {"content", item.content},
                           {"raw_content", item.raw_content}});
    }
    nlohmann::json payload = {{"results", results}};
    // A fully-dropped call clears the synthesised answer too; it derives from
    // the same pages.
    payload["answer"] = filtered.cleared_answer ? "" : provider_answer;
    return payload;
}

}  // namespace detail

// The budgeted time-masked interaction loop. The prediction cutoff is bound
// into the search/filter callables by the caller and never appears in any
// model-visible message this loop produces. Message append is the only state
// mutation, so the transcript stays a legal chat history throughout.
inline TrialResult run_loop(const std::string& user_prompt, const LoopConfig& cfg,
                            const ModelCaller& model, const SearchFn& search_fn,
                            const FilterFn& filter_fn) {
    TrialResult trial;
    trial.messages.push_back({"user", user_prompt, {}, {}});
    LoopState state;
    bool min_search_nudged = false;

    auto timed_call = [&](const std::vector<nlohmann::json>& tools) {
        auto started = std::chrono::steady_clock::now();
        llm::ChatOutcome out = model(trial.messages, tools);
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - started)
                           .count();
        StepMetric metric{state.step, "content", elapsed, out.markers.prompt_tokens,
                          out.markers.completion_tokens};
        trial.step_metrics.push_back(metric);
        return out;
    };

    for (state.step = 1; state.step <= cfg.step_cap; ++state.step) {
        trial.steps_used = state.step;
        InjectionPath path = select_injection(state, cfg);
        if (path != InjectionPath::none) {
            trial.messages.push_back(
                {"user", status_header(state, cfg) + "\n" + injection_directive(path), {}, {}});
            ++trial.nudges_used;
        }
        std::vector<nlohmann::json> tools;
        bool tools_stripped = injection_strips_tools(path) ||
                              (state.searches_used >= cfg.search_cap &&
                               cfg.drop_tools_on_budget_exceeded) ||
                              cfg.search_cap == 0;
        if (!tools_stripped) tools.push_back(search::web_search_schema());

        llm::ChatOutcome out = timed_call(tools);
        trial.markers = out.markers;
        if (!out.ok) {
            trial.error = out.error_kind;
            trial.error_detail = out.error_detail;
            trial.step_metrics.back().action = "error";
            return trial;
        }

        if (!out.tool_calls.empty()) {
            trial.step_metrics.back().action = "search";
            trial.messages.push_back({"assistant", out.content, out.tool_calls, {}});
            for (auto& call : out.tool_calls) {
                llm::ChatMessage reply{"tool", "", {}, call.id};
                nlohmann::json args = nlohmann::json::parse(call.arguments_json, nullptr, false);
                std::string query =
                    args.is_object() && args.contains("query") && args["query"].is_string()
                        ? args["query"].get<std::string>()
                        : "";
                if (call.name != "web_search") {
                    // Tool errors inside an assistant-tool cycle surface the
                    // live counters through the payload, never as an extra
                    // user turn.
                    reply.content = nlohmann::json{{"error", "unknown tool: " + call.name},
                                                   {"status", status_header(state, cfg)}}
                                        .dump();
                } else if (state.searches_used >= cfg.search_cap) {
                    // Over budget: no external call is made.
                    SearchCallRecord record;
                    record.step = state.step;
                    record.query = query;
                    record.executed = false;
                    record.error = "search budget exhausted";
                    trial.search_calls.push_back(record);
                    reply.content =
                        nlohmann::json{{"results", nlohmann::json::array()},
                                       {"status", status_header(state, cfg) +
                                                      " The search budget is exhausted; no "
                                                      "search was executed. Commit your final "
                                                      "\\boxed{...} prediction."}}
                            .dump();
                } else {
                    SearchCallRecord record;
                    record.step = state.step;
                    record.query = query;
                    record.executed = true;
                    ++state.searches_used;
                    trial.searches_used = state.searches_used;
                    try {
                        search::SearchResponse resp = search_fn(query);
                        leakfilter::FilterOutcome filtered = filter_fn(resp.items);
                        record.ok = true;
                        record.audit = filtered.audit;
                        record.cleared_answer = filtered.cleared_answer;
                        reply.content = detail::results_payload(filtered, resp.answer).dump();
                    } catch (const search::SearchCallError& e) {
                        record.ok = false;
                        record.error = e.what();
                        reply.content = nlohmann::json{{"error", "search failed"},
                                                       {"status", status_header(state, cfg)}}
                                            .dump();
                    }
                    trial.search_calls.push_back(std::move(record));
                }
                trial.messages.push_back(std::move(reply));
            }
            state.last_turn_unboxed = false;
            continue;
        }

        // Content turn.
        trial.messages.push_back({"assistant", out.content, {}, {}});
        for (auto& block : parser::extract_belief_blocks(out.content))
            trial.belief_blocks.push_back(block);
        bool boxed = parser::extract_last_boxed(out.content).has_value();
        if (boxed && state.searches_used < cfg.min_search_calls && !min_search_nudged &&
            state.step < cfg.step_cap) {
            min_search_nudged = true;
            trial.messages.push_back(
                {"user",
                 status_header(state, cfg) +
                     "\nConsider using web_search to gather evidence before committing.",
                 {},
                 {}});
            ++trial.nudges_used;
            state.last_turn_unboxed = false;
            continue;
        }
        if (boxed) {
            trial.step_metrics.back().action = "answer";
            trial.final_raw = out.content;
            return trial;
        }
        state.last_turn_unboxed = true;
    }

    // No parseable answer within T steps.
    if (cfg.final_answer_retry) {
        trial.final_answer_retry_used = true;
        LoopState retry_state = state;
        retry_state.step = cfg.step_cap;
        trial.messages.push_back({"user",
                                  status_header(retry_state, cfg) + "\n" +
                                      injection_directive(InjectionPath::last_step_hard_cutoff),
                                  {},
                                  {}});
        ++trial.nudges_used;
        llm::ChatOutcome out = timed_call({});
        if (out.ok) {
            trial.messages.push_back({"assistant", out.content, {}, {}});
            if (parser::extract_last_boxed(out.content)) {
                trial.final_raw = out.content;
                trial.markers = out.markers;
            }
        }
    }
    return trial;  // final_raw absent: invalid-output marker
}

}  // namespace hindcast::react

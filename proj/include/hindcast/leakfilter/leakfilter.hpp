#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/concurrency.hpp"
#include "hindcast/core/dates.hpp"
#include "hindcast/core/sha256.hpp"
#include "hindcast/gateway/chat.hpp"
#include "hindcast/renderer/render.hpp"
#include "hindcast/search/search.hpp"

namespace hindcast::leakfilter {

// Everything the detector is allowed to see. The six whitelisted fields only:
// no stem, no candidates, no gold set, no dialogue, no run identifiers.
struct DetectorInput {
    std::string title;
    std::string url;
    std::optional<std::string> published_date;
    std::string content;
    std::string raw_content;
    Date cutoff_date;
};

enum class VerdictKind { keep, drop };

struct Verdict {
    VerdictKind verdict = VerdictKind::drop;
    std::string reason;
};

// Default audit prompt. It frames the detector as a temporal auditor;
// specific, scheduled, and speculative post-cutoff events all count as
// leakage, and doubt resolves to drop. A file override replaces the text and
// shifts the recorded fingerprint.
inline constexpr std::string_view kDetectorPrompt =
    "You are a temporal information auditor. Review the web page excerpt below and decide "
    "whether it contains any information about events occurring after the cutoff date "
    "{cutoff_date}.\n"
    "\n"
    "Treat as post-cutoff leakage: specific events dated after the cutoff, events scheduled "
    "to occur after the cutoff, and speculative or announced future developments beyond the "
    "cutoff. Judge only from the text provided here; do not rely on anything you know from "
    "elsewhere. If in doubt, choose drop.\n"
    "\n"
    "Page excerpt:\n"
    "title: {title}\n"
    "url: {url}\n"
    "published_date: {published_date}\n"
    "content: {content}\n"
    "raw_content: {raw_content}\n"
    "\n"
    "Reply with a single line containing only a JSON object, either "
    "{\"verdict\": \"keep\"} or {\"verdict\": \"drop\"}, optionally with a short "
    "\"reason\" string.";

inline std::string render_detector_prompt(const DetectorInput& input,
                                          std::string_view prompt_template = kDetectorPrompt) {
    std::string text(prompt_template);
    text = prompts::replace_token(text, "{cutoff_date}", input.cutoff_date.to_iso());
    text = prompts::replace_token(text, "{title}", input.title);
    text = prompts::replace_token(text, "{url}", input.url);
    text = prompts::replace_token(text, "{published_date}",
                                  input.published_date.value_or("unknown"));
    text = prompts::replace_token(text, "{content}", input.content);
    return prompts::replace_token(text, "{raw_content}", input.raw_content);
}

inline std::string detector_prompt_hash(std::string_view prompt_template = kDetectorPrompt) {
    return sha256_16(prompt_template);
}

// Verdict parser: accepts a whole-body JSON object or the first
// brace-balanced object embedded in prose. Structural defects return nullopt
// so the caller can apply its retry budget; never throws.
inline std::optional<Verdict> parse_verdict(std::string_view reply) {
    std::string_view t = strip(reply);
    if (t.empty()) return std::nullopt;

    std::vector<std::string> candidates;
    if (t.front() == '{' && t.back() == '}') candidates.emplace_back(t);
    size_t open = t.find('{');
    if (open != std::string_view::npos) {
        int depth = 0;
        for (size_t i = open; i < t.size(); ++i) {
            if (t[i] == '{') ++depth;
            else if (t[i] == '}' && --depth == 0) {
                candidates.emplace_back(t.substr(open, i - open + 1));
                break;
            }
        }
    }

    for (auto& c : candidates) {
        nlohmann::json o = nlohmann::json::parse(c, nullptr, false);
        if (o.is_discarded()) continue;
        if (!o.is_object()) continue;
        std::string v = o.contains("verdict") && o["verdict"].is_string()
                            ? o["verdict"].get<std::string>()
                            : "";
        std::string r;
        if (o.contains("reason") && o["reason"].is_string()) r = o["reason"].get<std::string>();
        if (v != "keep" && v != "drop") return std::nullopt;
        return Verdict{v == "keep" ? VerdictKind::keep : VerdictKind::drop, r};
    }
    return std::nullopt;
}

enum class FailAction { drop, keep };

struct DetectorConfig {
    bool enabled = true;
    std::string model;
    std::string prompt_template = std::string(kDetectorPrompt);
    FailAction fail_action = FailAction::drop;
    std::vector<double> backoff_s = {2, 5, 15};
    double timeout_s = 60.0;
    int max_tokens = 512;
    int max_concurrency = 5;
};

struct DetectionResult {
    enum class Outcome { keep, drop, failed };
    Outcome outcome = Outcome::failed;
    std::string reason;
    std::string failure_kind;  // auth | client | server | network | invalid_verdict
    int attempts = 0;

    std::string verdict_string() const {
        switch (outcome) {
            case Outcome::keep: return "keep";
            case Outcome::drop: return "drop";
            case Outcome::failed: return "failed:" + failure_kind;
        }
        return "failed:" + failure_kind;
    }
};

// Content-level audit of one item. Deterministic detector parameters
// (temperature 0); transient failures (5xx, network, non-JSON 200, invalid
// verdict) re-enter the retry loop; 401/403 and other 4xx never retry.
class Detector {
public:
    Detector(DetectorConfig cfg, std::shared_ptr<llm::ChatTransport> transport,
             std::shared_ptr<llm::KeyRing> keys, Sleeper sleep = real_sleep)
        : cfg_(std::move(cfg)), transport_(std::move(transport)), keys_(std::move(keys)),
          sleep_(std::move(sleep)) {}

    const DetectorConfig& config() const { return cfg_; }

    DetectionResult detect_one(const DetectorInput& input) {
        nlohmann::json body = {
            {"model", cfg_.model},
            {"messages",
             nlohmann::json::array(
                 {{{"role", "user"}, {"content", render_detector_prompt(input, cfg_.prompt_template)}}})},
            {"temperature", 0.0},
            {"max_tokens", cfg_.max_tokens},
        };
        llm::assert_detector_safe(body);

        DetectionResult result;
        size_t backoff_cursor = 0;
        for (;;) {
            ++result.attempts;
            llm::TransportResult res = transport_->post_chat(body, cfg_.timeout_s, keys_->next());
            std::string transient_kind;
            if (res.transport_exception) {
                transient_kind = "network";
            } else if (res.status >= 500 && res.status <= 599) {
                transient_kind = "server";
            } else if (res.status == 401 || res.status == 403) {
                result.failure_kind = "auth";
                return result;
            } else if (res.status >= 400 && res.status < 500) {
                result.failure_kind = "client";
                return result;
            } else {
                llm::ChatOutcome parsed = llm::detail::parse_completion(res.body);
                if (!parsed.ok) {
                    transient_kind = "invalid_verdict";  // non-JSON 200 body
                } else if (auto verdict = parse_verdict(parsed.content)) {
                    result.outcome = verdict->verdict == VerdictKind::keep
                                         ? DetectionResult::Outcome::keep
                                         : DetectionResult::Outcome::drop;
                    result.reason = verdict->reason;
                    return result;
                } else {
                    transient_kind = "invalid_verdict";
                }
            }
            if (backoff_cursor >= cfg_.backoff_s.size()) {
                result.failure_kind = transient_kind;
                return result;
            }
            sleep_(cfg_.backoff_s[backoff_cursor++]);
        }
    }

private:
    DetectorConfig cfg_;
    std::shared_ptr<llm::ChatTransport> transport_;
    std::shared_ptr<llm::KeyRing> keys_;
    Sleeper sleep_;
};

// Forensic record persisted per search call. detector_verdicts and
// published_dates_raw both have length n_results_raw; n_results_kept matches
// the forwarded list.
struct AuditRecord {
    int n_results_raw = 0;
    int n_results_kept = 0;
    std::vector<std::string> detector_verdicts;
    std::vector<std::optional<std::string>> published_dates_raw;
    std::int64_t detector_latency_ms = 0;
    std::optional<std::string> detector_error_kind;
    bool detector_active = true;

    nlohmann::json to_json() const {
        nlohmann::json dates = nlohmann::json::array();
        for (auto& d : published_dates_raw)
            dates.push_back(d ? nlohmann::json(*d) : nlohmann::json(nullptr));
        return {
            {"n_results_raw", n_results_raw},
            {"n_results_kept", n_results_kept},
            {"detector_verdicts", detector_verdicts},
            {"published_dates_raw", dates},
            {"detector_latency_ms", detector_latency_ms},
            {"detector_error_kind",
             detector_error_kind ? nlohmann::json(*detector_error_kind) : nlohmann::json(nullptr)},
            {"detector_active", detector_active},
        };
    }

    static AuditRecord from_json(const nlohmann::json& j) {
        AuditRecord r;
        r.n_results_raw = j.value("n_results_raw", 0);
        r.n_results_kept = j.value("n_results_kept", 0);
        for (auto& v : j.value("detector_verdicts", nlohmann::json::array()))
            r.detector_verdicts.push_back(v.get<std::string>());
        for (auto& d : j.value("published_dates_raw", nlohmann::json::array()))
            r.published_dates_raw.push_back(d.is_null() ? std::optional<std::string>{}
                                                        : std::optional<std::string>(d.get<std::string>()));
        r.detector_latency_ms = j.value("detector_latency_ms", 0);
        if (j.contains("detector_error_kind") && !j["detector_error_kind"].is_null())
            r.detector_error_kind = j["detector_error_kind"].get<std::string>();
        r.detector_active = j.value("detector_active", true);
        return r;
    }
};

struct FilterOutcome {
    std::vector<search::SearchResultItem> kept;
    AuditRecord audit;
    bool cleared_answer = false;
};

// Audits every item of one search call independently and drops failures
// closed (under the default fail action). When every item drops, the
// provider-synthesised answer is cleared too: it derives from the same pages.
inline FilterOutcome filter_results(const std::vector<search::SearchResultItem>& items,
                                    const Date& cutoff, Detector* detector) {
    FilterOutcome out;
    out.audit.n_results_raw = static_cast<int>(items.size());
    for (auto& item : items) out.audit.published_dates_raw.push_back(item.published_date);

    if (!detector || !detector->config().enabled) {
        out.kept = items;
        out.audit.n_results_kept = static_cast<int>(items.size());
        out.audit.detector_verdicts.assign(items.size(), "keep");
        out.audit.detector_active = false;
        return out;
    }

    auto started = std::chrono::steady_clock::now();
    std::vector<DetectionResult> results(items.size());
    parallel_for_indexed(items.size(), detector->config().max_concurrency, [&](size_t i) {
        results[i] = detector->detect_one(DetectorInput{items[i].title, items[i].url,
                                                        items[i].published_date, items[i].content,
                                                        items[i].raw_content, cutoff});
    });
    out.audit.detector_latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                        std::chrono::steady_clock::now() - started)
                                        .count();

    for (size_t i = 0; i < items.size(); ++i) {
        const auto& r = results[i];
        out.audit.detector_verdicts.push_back(r.verdict_string());
        if (r.outcome == DetectionResult::Outcome::failed && !out.audit.detector_error_kind)
            out.audit.detector_error_kind = r.failure_kind;
        bool keep = r.outcome == DetectionResult::Outcome::keep ||
                    (r.outcome == DetectionResult::Outcome::failed &&
                     detector->config().fail_action == FailAction::keep);
        if (keep) out.kept.push_back(items[i]);
    }
    out.audit.n_results_kept = static_cast<int>(out.kept.size());
    out.cleared_answer = !items.empty() && out.kept.empty();
    return out;
}

}  // namespace hindcast::leakfilter

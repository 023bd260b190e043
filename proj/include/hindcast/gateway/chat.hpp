#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/concurrency.hpp"
#include "hindcast/core/settings.hpp"
#include "hindcast/core/strings.hpp"
#include "hindcast/gateway/errors.hpp"

namespace hindcast::llm {

struct ToolCall {
    std::string id;
    std::string name;
    std::string arguments_json;
};

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;
    std::vector<ToolCall> tool_calls;  // assistant turns only
    std::string tool_call_id;          // tool turns only

    nlohmann::json to_json() const {
        nlohmann::json j = {{"role", role}, {"content", content}};
        if (!tool_calls.empty()) {
            j["tool_calls"] = nlohmann::json::array();
            for (auto& tc : tool_calls)
                j["tool_calls"].push_back(
                    {{"id", tc.id},
                     {"type", "function"},
                     {"function", {{"name", tc.name}, {"arguments", tc.arguments_json}}}});
        }
        if (!tool_call_id.empty()) j["tool_call_id"] = tool_call_id;
        return j;
    }
};

struct SamplingParams {
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 12000;
    double timeout_s = 240.0;
};

struct ChatRequest {
    std::string model_slug;
    std::vector<ChatMessage> messages;
    std::vector<nlohmann::json> tools;  // length 0 or 1; the web_search schema
    SamplingParams sampling;
};

// Provider-side metadata copied verbatim from the completion payload.
struct ResponseMarkers {
    std::optional<std::string> finish_reason;
    std::optional<std::string> response_id;
    std::optional<std::string> system_fingerprint;
    std::optional<std::string> service_tier;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

struct ChatOutcome {
    bool ok = false;
    std::string content;
    std::vector<ToolCall> tool_calls;
    ResponseMarkers markers;
    ErrorKind error_kind = ErrorKind::none;
    std::string error_detail;
    int attempts = 0;
};

// Wire-level result of one POST /chat/completions. transport_exception is set
// (status 0) when the request never produced an HTTP response.
struct TransportResult {
    int status = 0;
    std::string body;
    std::map<std::string, std::string> headers;
    std::optional<std::string> transport_exception;
};

class ChatTransport {
public:
    virtual ~ChatTransport() = default;
    virtual TransportResult post_chat(const nlohmann::json& body, double timeout_s,
                                      const std::string& api_key) = 0;
};

// Round-robin rotation over the configured key list.
class KeyRing {
public:
    explicit KeyRing(std::vector<std::string> keys) : keys_(std::move(keys)) {}
    std::string next() {
        if (keys_.empty()) return "";
        std::lock_guard lock(mu_);
        return keys_[cursor_++ % keys_.size()];
    }

private:
    std::vector<std::string> keys_;
    std::mutex mu_;
    size_t cursor_ = 0;
};

inline bool is_reasoning_slug(const std::string& slug, const std::vector<std::string>& patterns) {
    std::string lower = to_lower(slug);
    for (auto& p : patterns)
        if (!p.empty() && contains(lower, to_lower(p))) return true;
    return false;
}

// Serialized request body. Reasoning-class slugs omit temperature/top_p;
// slugs in the override list send max_completion_tokens instead of
// max_tokens. No plugins field exists on any path.
inline nlohmann::json build_request_body(const ChatRequest& req,
                                         const std::vector<std::string>& reasoning_patterns,
                                         const std::vector<std::string>& max_completion_slugs) {
    nlohmann::json body;
    body["model"] = req.model_slug;
    body["messages"] = nlohmann::json::array();
    for (auto& m : req.messages) body["messages"].push_back(m.to_json());
    if (!is_reasoning_slug(req.model_slug, reasoning_patterns)) {
        body["temperature"] = req.sampling.temperature;
        body["top_p"] = req.sampling.top_p;
    }
    bool use_completion_param = false;
    for (auto& s : max_completion_slugs)
        if (s == req.model_slug) use_completion_param = true;
    body[use_completion_param ? "max_completion_tokens" : "max_tokens"] = req.sampling.max_tokens;
    if (!req.tools.empty()) {
        body["tools"] = nlohmann::json::array();
        for (auto& t : req.tools) body["tools"].push_back(t);
    }
    return body;
}

// Send-time browsing barrier for the main-LLM lane. Runs unconditionally on
// every outbound request; a violation aborts before anything leaves the
// process.
inline void assert_no_browsing(const nlohmann::json& body) {
    std::string slug = body.value("model", "");
    if (ends_with(slug, ":online"))
        throw BrowsingBarrierError("model slug carries the :online suffix: " + slug);
    if (body.contains("plugins"))
        throw BrowsingBarrierError("plugins field present in the request body");
    if (body.contains("tools")) {
        const auto& tools = body.at("tools");
        if (tools.size() > 1)
            throw BrowsingBarrierError("tool list length must be 0 or 1");
        for (const auto& t : tools) {
            std::string name = t.value("function", nlohmann::json::object()).value("name", "");
            if (name != "web_search")
                throw BrowsingBarrierError("unexpected tool name: " + name);
        }
    }
}

// Detector-lane barrier: no tools of any kind, no plugins, no tool_choice.
inline void assert_detector_safe(const nlohmann::json& body) {
    std::string slug = body.value("model", "");
    if (ends_with(slug, ":online"))
        throw BrowsingBarrierError("detector slug carries the :online suffix: " + slug);
    for (const char* field : {"tools", "plugins", "tool_choice"})
        if (body.contains(field))
            throw BrowsingBarrierError(std::string("detector request carries ") + field);
}

struct RetryPolicy {
    std::vector<double> network_backoff_s = {2, 5, 15, 30, 60};
    std::vector<double> rate_limit_backoff_s = {10, 30, 60, 120, 300};
    std::vector<double> server_5xx_backoff_s = {5, 15, 30, 60, 120};
};

struct GatewayConfig {
    RetryPolicy retry;
    std::vector<std::string> reasoning_patterns = {"o1", "o3", "o4", "r1", "qwq"};
    std::vector<std::string> max_completion_slugs;

    static GatewayConfig from_settings(const Settings& s) {
        GatewayConfig c;
        c.retry.network_backoff_s = s.get_double_list("LLM_BACKOFF_NETWORK_S");
        c.retry.rate_limit_backoff_s = s.get_double_list("LLM_BACKOFF_RATE_LIMIT_S");
        c.retry.server_5xx_backoff_s = s.get_double_list("LLM_BACKOFF_SERVER_5XX_S");
        c.reasoning_patterns = s.get_list("LLM_REASONING_MODEL_PATTERNS");
        c.max_completion_slugs = s.get_list("MODEL_MAX_TOKENS_PARAM");
        return c;
    }
};

namespace detail {

inline std::optional<double> parse_retry_after(const std::map<std::string, std::string>& headers) {
    for (auto& [key, value] : headers) {
        if (to_lower(key) != "retry-after") continue;
        // Integer seconds only; anything else falls back to the schedule.
        auto t = strip(value);
        if (t.empty()) return std::nullopt;
        for (char c : t)
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        return std::stod(std::string(t));
    }
    return std::nullopt;
}

inline ChatOutcome parse_completion(const std::string& body) {
    ChatOutcome out;
    nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
        out.ok = false;
        out.error_kind = ErrorKind::unknown;
        out.error_detail = "malformed completion payload";
        return out;
    }
    const auto& choice = j["choices"][0];
    const auto& msg = choice.value("message", nlohmann::json::object());
    if (msg.contains("content") && msg["content"].is_string())
        out.content = msg["content"].get<std::string>();
    if (msg.contains("tool_calls")) {
        for (const auto& tc : msg["tool_calls"]) {
            ToolCall call;
            call.id = tc.value("id", "");
            const auto& fn = tc.value("function", nlohmann::json::object());
            call.name = fn.value("name", "");
            if (fn.contains("arguments")) {
                const auto& args = fn["arguments"];
                call.arguments_json = args.is_string() ? args.get<std::string>() : args.dump();
            }
            out.tool_calls.push_back(std::move(call));
        }
    }
    if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
        out.markers.finish_reason = choice["finish_reason"].get<std::string>();
    if (j.contains("id") && j["id"].is_string())
        out.markers.response_id = j["id"].get<std::string>();
    if (j.contains("system_fingerprint") && j["system_fingerprint"].is_string())
        out.markers.system_fingerprint = j["system_fingerprint"].get<std::string>();
    if (j.contains("service_tier") && j["service_tier"].is_string())
        out.markers.service_tier = j["service_tier"].get<std::string>();
    if (j.contains("usage")) {
        out.markers.prompt_tokens = j["usage"].value("prompt_tokens", 0);
        out.markers.completion_tokens = j["usage"].value("completion_tokens", 0);
    }
    out.ok = true;
    return out;
}

}  // namespace detail

// Retrying send for the main-LLM lane. Per-kind backoff sequences are
// consumed in order, one entry per attempt, and reset across distinct
// samples (each send_chat call owns fresh cursors). Auth raises; policy,
// bad-request, and unknown failures return without retry. The caller holds
// the concurrency permit.
inline ChatOutcome send_chat(const ChatRequest& req, ChatTransport& transport, KeyRing& keys,
                             const GatewayConfig& cfg, const Sleeper& sleep = real_sleep) {
    nlohmann::json body =
        build_request_body(req, cfg.reasoning_patterns, cfg.max_completion_slugs);
    assert_no_browsing(body);

    size_t network_cursor = 0, rate_cursor = 0, server_cursor = 0;
    ChatOutcome out;
    for (;;) {
        ++out.attempts;
        TransportResult res = transport.post_chat(body, req.sampling.timeout_s, keys.next());
        ErrorKind kind = classify_error(
            res.transport_exception ? std::nullopt : std::optional<int>(res.status),
            res.body.empty() ? std::nullopt : std::optional<std::string>(res.body),
            res.transport_exception);
        if (kind == ErrorKind::none) {
            ChatOutcome parsed = detail::parse_completion(res.body);
            parsed.attempts = out.attempts;
            return parsed;
        }
        if (kind == ErrorKind::auth)
            throw AuthError("authentication rejected (" + std::to_string(res.status) + ")");
        if (kind == ErrorKind::content_policy || kind == ErrorKind::bad_request ||
            kind == ErrorKind::unknown) {
            out.ok = false;
            out.error_kind = kind;
            out.error_detail = res.body.substr(0, 512);
            return out;
        }

        const std::vector<double>* seq = nullptr;
        size_t* cursor = nullptr;
        if (kind == ErrorKind::network) {
            seq = &cfg.retry.network_backoff_s;
            cursor = &network_cursor;
        } else if (kind == ErrorKind::rate_limit) {
            seq = &cfg.retry.rate_limit_backoff_s;
            cursor = &rate_cursor;
        } else {
            seq = &cfg.retry.server_5xx_backoff_s;
            cursor = &server_cursor;
        }
        if (*cursor >= seq->size()) {
            out.ok = false;
            out.error_kind = kind;
            out.error_detail = res.transport_exception.value_or(res.body.substr(0, 512));
            return out;
        }
        double wait = (*seq)[*cursor];
        if (kind == ErrorKind::rate_limit)
            if (auto hinted = detail::parse_retry_after(res.headers)) wait = *hinted;
        ++*cursor;
        sleep(wait);
    }
}

// Startup validation, before any network call. Returns the list of fatal
// problems; empty means ok.
inline std::vector<std::string> validate_settings(const Settings& s,
                                                  const std::string& model_slug) {
    std::vector<std::string> fatal;
    auto is_placeholder = [](const std::string& v) {
        auto lower = to_lower(strip(v));
        return lower.empty() || lower == "changeme" || lower == "placeholder" ||
               lower == "your-api-key" || lower == "your_api_key" || lower == "xxx";
    };
    if (ends_with(model_slug, ":online"))
        fatal.push_back("model slug must not end in :online: " + model_slug);
    if (s.get("LLM_BASE_URL").empty())
        fatal.push_back("LLM_BASE_URL is not configured");
    if (is_placeholder(s.get("LLM_API_KEY")))
        fatal.push_back("LLM_API_KEY is missing or a placeholder");
    if (s.get_int("REACT_MAX_SEARCH_CALLS") > 0 && is_placeholder(s.get("TAVILY_API_KEY")))
        fatal.push_back("TAVILY_API_KEY is missing or a placeholder");
    if (s.get_bool("ENABLE_SEARCH_LEAK_FILTER")) {
        if (ends_with(s.get("LEAK_DETECTOR_MODEL"), ":online"))
            fatal.push_back("LEAK_DETECTOR_MODEL must not end in :online");
        if (s.get("LEAK_DETECTOR_MODEL").empty())
            fatal.push_back("LEAK_DETECTOR_MODEL is required when the leak filter is enabled");
    }
    return fatal;
}

}  // namespace hindcast::llm

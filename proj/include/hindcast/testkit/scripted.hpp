#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/dates.hpp"
#include "hindcast/gateway/chat.hpp"
#include "hindcast/search/search.hpp"

namespace hindcast::testkit {

// One scripted assistant reply: either a content turn or a web_search call.
struct ScriptedReply {
    std::string content;
    std::optional<std::string> tool_query;

    static ScriptedReply say(std::string text) { return {std::move(text), std::nullopt}; }
    static ScriptedReply search(std::string query, std::string text = "") {
        return {std::move(text), std::move(query)};
    }

    nlohmann::json completion_body(int call_index) const {
        nlohmann::json message = {{"role", "assistant"}, {"content", content}};
        std::string finish = "stop";
        if (tool_query) {
            message["tool_calls"] = nlohmann::json::array(
                {{{"id", "call_" + std::to_string(call_index)},
                  {"type", "function"},
                  {"function",
                   {{"name", "web_search"},
                    {"arguments", nlohmann::json({{"query", *tool_query}}).dump()}}}}});
            finish = "tool_calls";
        }
        return {{"id", "scripted-" + std::to_string(call_index)},
                {"choices",
                 nlohmann::json::array({{{"message", message}, {"finish_reason", finish}}})},
                {"usage", {{"prompt_tokens", 17}, {"completion_tokens", 9}}},
                {"system_fingerprint", "fp_scripted"}};
    }

    static ScriptedReply from_json(const nlohmann::json& j) {
        ScriptedReply r;
        r.content = j.value("content", "");
        if (j.contains("tool_query")) r.tool_query = j["tool_query"].get<std::string>();
        return r;
    }
};

// Wire-level failure injected at a given 1-based call index.
struct FailureInjection {
    int call_index = 0;
    int status = 0;
    std::string body;
    std::optional<std::string> transport_exception;
    std::map<std::string, std::string> headers;
};

// Deterministic chat transport. Replies dispatch either sequentially by call
// index or by routing on a needle found in the last user-ish message, with a
// per-route step cursor; scripts key on step index, not message text, so
// prompt wording changes do not invalidate behavioural tests.
class ScriptedChatTransport : public llm::ChatTransport {
public:
    void push_reply(ScriptedReply r) { sequence_.push_back(std::move(r)); }
    void add_route(const std::string& needle, std::vector<ScriptedReply> replies) {
        routes_.push_back({needle, std::move(replies)});
    }
    void inject_failure(FailureInjection f) { failures_[f.call_index] = std::move(f); }

    int calls() const { return calls_; }
    std::vector<nlohmann::json> request_log() const {
        std::lock_guard lock(mu_);
        return requests_;
    }

    llm::TransportResult post_chat(const nlohmann::json& body, double /*timeout_s*/,
                                   const std::string& /*api_key*/) override {
        std::lock_guard lock(mu_);
        ++calls_;
        requests_.push_back(body);
        if (auto it = failures_.find(calls_); it != failures_.end()) {
            llm::TransportResult res;
            res.status = it->second.status;
            res.body = it->second.body;
            res.headers = it->second.headers;
            res.transport_exception = it->second.transport_exception;
            return res;
        }
        // Routed scripts key on the conversation's step index (the number of
        // assistant turns already in the history), so concurrent trials over
        // the same route stay deterministic and prompt wording changes do not
        // invalidate the script.
        const ScriptedReply* reply = nullptr;
        std::string all_text;
        size_t step_index = 0;
        for (auto& m : body.value("messages", nlohmann::json::array())) {
            std::string role = m.value("role", "");
            if (role == "user") all_text += m.value("content", "");
            if (role == "assistant") ++step_index;
        }
        for (auto& route : routes_) {
            if (all_text.find(route.needle) == std::string::npos) continue;
            if (!route.replies.empty())
                reply = &route.replies[std::min(step_index, route.replies.size() - 1)];
            break;
        }
        if (!reply && !sequence_.empty()) {
            size_t idx = std::min(sequence_cursor_, sequence_.size() - 1);
            reply = &sequence_[idx];
            ++sequence_cursor_;
        }
        llm::TransportResult res;
        if (!reply) {
            res.status = 500;
            res.body = "script underrun";
            return res;
        }
        res.status = 200;
        res.body = reply->completion_body(calls_).dump();
        return res;
    }

private:
    struct Route {
        std::string needle;
        std::vector<ScriptedReply> replies;
    };
    mutable std::mutex mu_;
    std::vector<ScriptedReply> sequence_;
    size_t sequence_cursor_ = 0;
    std::vector<Route> routes_;
    std::map<int, FailureInjection> failures_;
    int calls_ = 0;
    std::vector<nlohmann::json> requests_;
};

// Offline corpus served exactly as the production adapter would: the date
// filter applies at serve time, items missing a published_date pass through
// for the content-level detector to adjudicate.
struct CorpusDoc {
    std::string id;
    std::string title;
    std::string url;
    std::optional<std::string> published_date;
    std::string content;
    std::string raw_content;

    static CorpusDoc from_json(const nlohmann::json& j) {
        CorpusDoc d;
        d.id = j.value("id", "");
        d.title = j.value("title", "");
        d.url = j.value("url", "");
        if (j.contains("published_date") && !j["published_date"].is_null())
            d.published_date = j["published_date"].get<std::string>();
        d.content = j.value("content", "");
        d.raw_content = j.value("raw_content", "");
        return d;
    }
};

struct SearchFailureInjection {
    search::KeyFailure kind = search::KeyFailure::other;
    int status = 500;
    std::string detail = "injected";
};

class ScriptedSearchBackend : public search::SearchBackend {
public:
    void add_doc(CorpusDoc d) { docs_.push_back(std::move(d)); }
    void set_ranking(const std::string& query, std::vector<std::string> ids) {
        rankings_[query] = std::move(ids);
    }
    // Consumed in order: one injected failure per matching call.
    void inject_failure_for_key(const std::string& api_key, SearchFailureInjection f) {
        key_failures_[api_key].push_back(f);
    }
    void inject_failure_at(int call_index, SearchFailureInjection f) {
        call_failures_[call_index] = f;
    }

    int calls() const { return calls_; }

    search::BackendResult search(const std::string& query, const Date& cutoff,
                                 const std::string& api_key, int max_results) override {
        std::lock_guard lock(mu_);
        ++calls_;
        if (auto it = call_failures_.find(calls_); it != call_failures_.end()) {
            auto f = it->second;
            return failure(f);
        }
        if (auto it = key_failures_.find(api_key); it != key_failures_.end() && !it->second.empty()) {
            auto f = it->second.front();
            it->second.erase(it->second.begin());
            return failure(f);
        }

        std::vector<const CorpusDoc*> ranked;
        if (auto it = rankings_.find(query); it != rankings_.end()) {
            for (auto& id : it->second)
                for (auto& d : docs_)
                    if (d.id == id) ranked.push_back(&d);
        } else {
            for (auto& d : docs_) ranked.push_back(&d);
        }

        search::BackendResult out;
        out.ok = true;
        for (auto* d : ranked) {
            if (static_cast<int>(out.response.items.size()) >= max_results) break;
            if (d->published_date) {
                auto date = Date::parse_iso(*d->published_date);
                if (date && *date > cutoff) continue;  // provider-side date restriction
            }
            out.response.items.push_back(
                {d->title, d->url, d->published_date, d->content, d->raw_content});
        }
        if (!out.response.items.empty())
            out.response.answer = "summary: " + out.response.items.front().title;
        return out;
    }

private:
    static search::BackendResult failure(const SearchFailureInjection& f) {
        search::BackendResult out;
        out.ok = false;
        out.failure = {f.kind, f.status, f.detail};
        return out;
    }

    std::mutex mu_;
    std::vector<CorpusDoc> docs_;
    std::map<std::string, std::vector<std::string>> rankings_;
    std::map<std::string, std::vector<SearchFailureInjection>> key_failures_;
    std::map<int, SearchFailureInjection> call_failures_;
    int calls_ = 0;
};

// Detector stand-in: drops any item whose rendered audit prompt contains one
// of the configured needles; keeps otherwise. Failure injections ride on call
// indices like the chat transport.
class ScriptedDetectorTransport : public llm::ChatTransport {
public:
    void add_drop_needle(std::string needle) { drop_needles_.push_back(std::move(needle)); }
    void inject_failure(FailureInjection f) { failures_[f.call_index] = std::move(f); }
    void push_raw_reply(std::string content) { raw_replies_.push_back(std::move(content)); }

    int calls() const { return calls_; }
    std::vector<nlohmann::json> request_log() const {
        std::lock_guard lock(mu_);
        return requests_;
    }

    llm::TransportResult post_chat(const nlohmann::json& body, double /*timeout_s*/,
                                   const std::string& /*api_key*/) override {
        std::lock_guard lock(mu_);
        ++calls_;
        requests_.push_back(body);
        if (auto it = failures_.find(calls_); it != failures_.end()) {
            llm::TransportResult res;
            res.status = it->second.status;
            res.body = it->second.body;
            res.transport_exception = it->second.transport_exception;
            return res;
        }
        std::string verdict_content;
        if (!raw_replies_.empty()) {
            size_t idx = std::min(raw_cursor_, raw_replies_.size() - 1);
            verdict_content = raw_replies_[idx];
            ++raw_cursor_;
        } else {
            std::string prompt;
            for (auto& m : body.value("messages", nlohmann::json::array()))
                prompt += m.value("content", "");
            bool drop = false;
            for (auto& needle : drop_needles_)
                if (prompt.find(needle) != std::string::npos) drop = true;
            verdict_content = drop ? R"({"verdict": "drop", "reason": "post-cutoff reference"})"
                                   : R"({"verdict": "keep"})";
        }
        nlohmann::json completion = {
            {"id", "det-" + std::to_string(calls_)},
            {"choices",
             nlohmann::json::array(
                 {{{"message", {{"role", "assistant"}, {"content", verdict_content}}},
                   {"finish_reason", "stop"}}})},
            {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}},
        };
        llm::TransportResult res;
        res.status = 200;
        res.body = completion.dump();
        return res;
    }

private:
    mutable std::mutex mu_;
    std::vector<std::string> drop_needles_;
    std::vector<std::string> raw_replies_;
    size_t raw_cursor_ = 0;
    std::map<int, FailureInjection> failures_;
    int calls_ = 0;
    std::vector<nlohmann::json> requests_;
};

inline Sleeper recording_sleeper(std::vector<double>& log) {
    return [&log](double seconds) { log.push_back(seconds); };
}

inline Sleeper no_sleep() {
    return [](double) {};
}

}  // namespace hindcast::testkit

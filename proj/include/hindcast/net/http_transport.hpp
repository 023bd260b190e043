#pragma once

// Production wire adapters. Kept out of the test binaries: everything under
// tests/ runs against the scripted backends instead.

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "hindcast/core/dates.hpp"
#include "hindcast/gateway/chat.hpp"
#include "hindcast/search/search.hpp"

namespace hindcast::net {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // remainder, no trailing slash
};

inline ParsedUrl parse_base_url(const std::string& base_url) {
    ParsedUrl out;
    auto scheme_end = base_url.find("://");
    size_t path_start = base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) {
        out.origin = base_url;
    } else {
        out.origin = base_url.substr(0, path_start);
        out.path = base_url.substr(path_start);
    }
    while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

// OpenAI-compatible POST /chat/completions over HTTPS with a bearer key.
class HttpChatTransport : public llm::ChatTransport {
public:
    explicit HttpChatTransport(const std::string& base_url) : base_(parse_base_url(base_url)) {}

    llm::TransportResult post_chat(const nlohmann::json& body, double timeout_s,
                                   const std::string& api_key) override {
        llm::TransportResult out;
        httplib::Client client(base_.origin);
        client.set_connection_timeout(std::chrono::duration<double>(timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(timeout_s));
        client.set_write_timeout(std::chrono::duration<double>(timeout_s));
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post(base_.path + "/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res) {
            out.transport_exception = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
        for (auto& [key, value] : res->headers) out.headers.emplace(key, value);
        return out;
    }

private:
    ParsedUrl base_;
};

// Tavily-compatible REST search with provider-side date restriction. The
// cutoff is the harness's value; the query is the only model-controlled
// argument.
class TavilySearchBackend : public search::SearchBackend {
public:
    explicit TavilySearchBackend(const std::string& base_url = "https://api.tavily.com")
        : base_(parse_base_url(base_url)) {}

    search::BackendResult search(const std::string& query, const Date& cutoff,
                                 const std::string& api_key, int max_results) override {
        search::BackendResult out;
        nlohmann::json body = {
            {"api_key", api_key},
            {"query", query},
            {"search_depth", "basic"},
            {"max_results", max_results},
            {"end_date", cutoff.to_iso()},
            {"include_answer", true},
            {"include_raw_content", true},
        };
        httplib::Client client(base_.origin);
        client.set_read_timeout(std::chrono::seconds(60));
        auto res = client.Post(base_.path + "/search", body.dump(), "application/json");
        if (!res) {
            out.failure = {search::KeyFailure::other, 0, httplib::to_string(res.error())};
            return out;
        }
        if (res->status == 401 || res->status == 403) {
            out.failure = {search::KeyFailure::auth, res->status, res->body};
            return out;
        }
        if (res->status == 429) {
            out.failure = {search::KeyFailure::rate_limit, res->status, res->body};
            return out;
        }
        if (res->status < 200 || res->status >= 300) {
            out.failure = {search::KeyFailure::other, res->status, res->body};
            return out;
        }
        nlohmann::json payload = nlohmann::json::parse(res->body, nullptr, false);
        if (payload.is_discarded()) {
            out.failure = {search::KeyFailure::other, res->status, "non-JSON 200 body"};
            return out;
        }
        out.ok = true;
        out.response.answer = payload.value("answer", "");
        for (auto& item : payload.value("results", nlohmann::json::array())) {
            search::SearchResultItem r;
            r.title = item.value("title", "");
            r.url = item.value("url", "");
            if (item.contains("published_date") && item["published_date"].is_string())
                r.published_date = item["published_date"].get<std::string>();
            r.content = item.value("content", "");
            if (item.contains("raw_content") && item["raw_content"].is_string())
                r.raw_content = item["raw_content"].get<std::string>();
            out.response.items.push_back(std::move(r));
        }
        return out;
    }

private:
    ParsedUrl base_;
};

}  // namespace hindcast::net

#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/concurrency.hpp"
#include "hindcast/core/dates.hpp"
#include "hindcast/search/keypool.hpp"

namespace hindcast::search {

// One retrieved page. content / raw_content are truncated (suffix drop only)
// before anything downstream sees them.
struct SearchResultItem {
    std::string title;
    std::string url;
    std::optional<std::string> published_date;
    std::string content;
    std::string raw_content;
};

struct SearchResponse {
    std::vector<SearchResultItem> items;
    std::string answer;  // provider-synthesised quick answer; derived content
};

struct SearchFailure {
    KeyFailure kind = KeyFailure::other;
    int status = 0;
    std::string detail;
};

struct BackendResult {
    bool ok = false;
    SearchResponse response;
    SearchFailure failure;
};

// Provider boundary. The cutoff is supplied by the harness; the query is the
// only model-controlled argument.
class SearchBackend {
public:
    virtual ~SearchBackend() = default;
    virtual BackendResult search(const std::string& query, const Date& cutoff,
                                 const std::string& api_key, int max_results) = 0;
};

// The single tool surface exposed to the model. Exactly one property and one
// required field; any drift fails the structural check below before use.
inline const nlohmann::json& web_search_schema() {
    static const nlohmann::json schema = [] {
        nlohmann::json s = {
            {"type", "function"},
            {"function",
             {{"name", "web_search"},
              {"description",
               "Search the web for evidence. Provide only the search query; result "
               "selection and freshness are handled for you."},
              {"parameters",
               {{"type", "object"},
                {"properties",
                 {{"query",
                   {{"type", "string"}, {"description", "The search query string."}}}}},
                {"required", nlohmann::json::array({"query"})}}}}},
        };
        const auto& params = s["function"]["parameters"];
        if (params["properties"].size() != 1 || !params["properties"].contains("query"))
            throw std::logic_error("web_search schema drift: properties must be exactly {query}");
        if (params["required"] != nlohmann::json::array({"query"}))
            throw std::logic_error("web_search schema drift: required must be [query]");
        return s;
    }();
    return schema;
}

struct SearchConfig {
    int max_results = 5;
    size_t truncate_chars = 8000;
    int retry_max = 3;
    std::vector<double> backoff_s = {2, 5, 15};
};

struct SearchCallError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class PoolExhaustedError : public SearchCallError {
public:
    using SearchCallError::SearchCallError;
};

// Date-restricted search with key-pool semantics: auth blacklists and swaps,
// rate limits cool down and swap (neither consumes the retry budget), other
// failures burn the 3-attempt budget with backoff on the same key.
class SearchGateway {
public:
    SearchGateway(std::shared_ptr<SearchBackend> backend, std::shared_ptr<KeyPool> pool,
                  SearchConfig cfg = {}, Sleeper sleep = real_sleep)
        : backend_(std::move(backend)), pool_(std::move(pool)), cfg_(cfg),
          sleep_(std::move(sleep)) {
        web_search_schema();  // structural check before first use
    }

    SearchResponse search(const std::string& query, const Date& cutoff) {
        int retries_used = 0;
        std::optional<KeyPool::Lease> lease;
        for (;;) {
            if (!lease) {
                lease = pool_->acquire();
                if (!lease)
                    throw PoolExhaustedError("search key pool exhausted (all keys blacklisted or cooling)");
            }
            BackendResult result =
                backend_->search(query, cutoff, lease->key, cfg_.max_results);
            if (result.ok) {
                truncate(result.response);
                return std::move(result.response);
            }
            switch (result.failure.kind) {
                case KeyFailure::auth:
                    pool_->report_auth_failure(lease->index);
                    lease.reset();  // immediate swap, no retry consumed
                    break;
                case KeyFailure::rate_limit:
                    pool_->report_rate_limit(lease->index);
                    lease.reset();  // immediate swap, no retry consumed
                    break;
                case KeyFailure::other:
                    if (retries_used >= cfg_.retry_max)
                        throw SearchCallError("search failed after retries: " +
                                              result.failure.detail);
                    if (static_cast<size_t>(retries_used) < cfg_.backoff_s.size())
                        sleep_(cfg_.backoff_s[retries_used]);
                    ++retries_used;  // same key retried
                    break;
            }
        }
    }

private:
    void truncate(SearchResponse& r) const {
        if (r.items.size() > static_cast<size_t>(cfg_.max_results))
            r.items.resize(cfg_.max_results);
        for (auto& item : r.items) {
            if (item.content.size() > cfg_.truncate_chars)
                item.content.resize(cfg_.truncate_chars);
            if (item.raw_content.size() > cfg_.truncate_chars)
                item.raw_content.resize(cfg_.truncate_chars);
        }
    }

    std::shared_ptr<SearchBackend> backend_;
    std::shared_ptr<KeyPool> pool_;
    SearchConfig cfg_;
    Sleeper sleep_;
};

}  // namespace hindcast::search

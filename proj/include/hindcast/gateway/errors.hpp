#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "hindcast/core/strings.hpp"

namespace hindcast::llm {

enum class ErrorKind {
    none,
    network,
    rate_limit,
    server_5xx,
    auth,
    content_policy,
    bad_request,
    unknown,
};

inline std::string to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::none: return "none";
        case ErrorKind::network: return "network";
        case ErrorKind::rate_limit: return "rate_limit";
        case ErrorKind::server_5xx: return "server_5xx";
        case ErrorKind::auth: return "auth";
        case ErrorKind::content_policy: return "content_policy";
        case ErrorKind::bad_request: return "bad_request";
        case ErrorKind::unknown: return "unknown";
    }
    return "unknown";
}

// Moderation needles checked on HTTP 400 bodies, before the generic
// bad_request bucket.
inline constexpr const char* kContentPolicyNeedles[] = {
    "content_policy", "content_filter",       "safety",
    "data_inspection_failed", "inappropriate content", "sensitive",
};

// Total classification of one failure signal. Transport exceptions always win
// (no status to inspect); content_policy is adjudicated before bad_request.
inline ErrorKind classify_error(std::optional<int> status, std::optional<std::string> body,
                                std::optional<std::string> transport_exception) {
    if (transport_exception) return ErrorKind::network;
    if (!status) return ErrorKind::unknown;
    int s = *status;
    if (s == 429) return ErrorKind::rate_limit;
    if (s >= 500 && s <= 599) return ErrorKind::server_5xx;
    if (s == 401 || s == 403) return ErrorKind::auth;
    if (s == 400) {
        std::string lower = to_lower(body.value_or(""));
        for (const char* needle : kContentPolicyNeedles)
            if (contains(lower, needle)) return ErrorKind::content_policy;
        return ErrorKind::bad_request;
    }
    if (s >= 200 && s < 300) return ErrorKind::none;
    return ErrorKind::unknown;
}

// 401/403: cancels the whole run, in-flight work included.
class AuthError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An outbound request tripped a browsing-barrier assertion; never sent.
class BrowsingBarrierError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

}  // namespace hindcast::llm

#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hindcast/core/strings.hpp"

namespace hindcast::search {

enum class KeyFailure { auth, rate_limit, other };

using Clock = std::function<std::chrono::steady_clock::time_point()>;

inline std::chrono::steady_clock::time_point steady_now() {
    return std::chrono::steady_clock::now();
}

// Least-used API-key dispatch. Auth failures blacklist a key permanently;
// rate limits put it on a timed cooldown; neither consumes the caller's
// network-retry quota. State transitions are atomic under one lock.
class KeyPool {
public:
    explicit KeyPool(std::vector<std::string> keys, double cooldown_s = 60.0,
                     Clock clock = steady_now)
        : cooldown_s_(cooldown_s), clock_(std::move(clock)) {
        for (size_t i = 0; i < keys.size(); ++i)
            states_.push_back(State{keys[i], Status::healthy, {}, 0});
    }

    struct Lease {
        size_t index;
        std::string key;
    };

    // Healthy key with minimal usage count; ties break by configuration
    // order. nullopt when every key is blacklisted or cooling.
    std::optional<Lease> acquire() {
        std::lock_guard lock(mu_);
        auto now = clock_();
        std::optional<size_t> best;
        for (size_t i = 0; i < states_.size(); ++i) {
            auto& st = states_[i];
            if (st.status == Status::cooldown && now >= st.cooldown_until)
                st.status = Status::healthy;
            if (st.status != Status::healthy) continue;
            if (!best || st.usage_count < states_[*best].usage_count) best = i;
        }
        if (!best) return std::nullopt;
        ++states_[*best].usage_count;
        return Lease{*best, states_[*best].key};
    }

    void report_auth_failure(size_t index) {
        std::lock_guard lock(mu_);
        states_.at(index).status = Status::blacklisted;  // absorbing
    }

    void report_rate_limit(size_t index) {
        std::lock_guard lock(mu_);
        auto& st = states_.at(index);
        if (st.status == Status::blacklisted) return;
        st.status = Status::cooldown;
        st.cooldown_until = clock_() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                           std::chrono::duration<double>(cooldown_s_));
    }

    struct Snapshot {
        std::string status;
        std::uint64_t usage_count;
    };
    std::vector<Snapshot> snapshot() {
        std::lock_guard lock(mu_);
        auto now = clock_();
        std::vector<Snapshot> out;
        for (auto& st : states_) {
            std::string status = "healthy";
            if (st.status == Status::blacklisted)
                status = "blacklisted";
            else if (st.status == Status::cooldown && now < st.cooldown_until)
                status = "cooldown";
            out.push_back({status, st.usage_count});
        }
        return out;
    }

    // One pool instance per distinct key tuple within the process, so usage
    // counts accumulate across grid cells.
    static std::shared_ptr<KeyPool> shared_for(const std::vector<std::string>& keys,
                                               double cooldown_s = 60.0) {
        static std::mutex registry_mu;
        static std::map<std::string, std::shared_ptr<KeyPool>> registry;
        std::string id = join(keys, "\x1f");
        std::lock_guard lock(registry_mu);
        auto it = registry.find(id);
        if (it != registry.end()) return it->second;
        auto pool = std::make_shared<KeyPool>(keys, cooldown_s);
        registry[id] = pool;
        return pool;
    }

private:
    enum class Status { healthy, cooldown, blacklisted };
    struct State {
        std::string key;
        Status status;
        std::chrono::steady_clock::time_point cooldown_until;
        std::uint64_t usage_count;
    };

    std::mutex mu_;
    std::vector<State> states_;
    double cooldown_s_;
    Clock clock_;
};

}  // namespace hindcast::search

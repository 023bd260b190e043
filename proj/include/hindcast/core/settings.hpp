#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hindcast/core/strings.hpp"

namespace hindcast {

// Flat key/value configuration. Values resolve as: explicit override >
// process environment > dotenv file > catalog default. The raw map is what
// the redacted snapshot serializes.
class Settings {
public:
    static const std::map<std::string, std::string>& defaults() {
        static const std::map<std::string, std::string> catalog = {
            {"LLM_BASE_URL", ""},
            {"LLM_API_KEY", ""},
            {"LLM_TEMPERATURE", "0.7"},
            {"LLM_TOP_P", "1.0"},
            {"LLM_MAX_TOKENS", "12000"},
            {"LLM_TIMEOUT_S", "240"},
            {"LLM_MAX_CONCURRENCY", "5"},
            {"LLM_BACKOFF_NETWORK_S", "2,5,15,30,60"},
            {"LLM_BACKOFF_RATE_LIMIT_S", "10,30,60,120,300"},
            {"LLM_BACKOFF_SERVER_5XX_S", "5,15,30,60,120"},
            {"LLM_REASONING_MODEL_PATTERNS", "o1,o3,o4,r1,qwq"},
            {"MODEL_MAX_TOKENS_PARAM", ""},
            {"TAVILY_API_KEY", ""},
            {"TAVILY_BASE_URL", "https://api.tavily.com"},
            {"SEARCH_RETRY_MAX", "3"},
            {"SEARCH_BACKOFF_S", "2,5,15"},
            {"SEARCH_MAX_CONCURRENCY", "5"},
            {"SEARCH_COOLDOWN_S", "60"},
            {"SEARCH_MAX_RESULTS", "5"},
            {"SEARCH_TRUNCATE_CHARS", "8000"},
            {"ENABLE_SEARCH_LEAK_FILTER", "true"},
            {"LEAK_DETECTOR_MODEL", ""},
            {"LEAK_DETECTOR_BASE_URL", ""},
            {"LEAK_DETECTOR_API_KEY", ""},
            {"LEAK_DETECTOR_FAIL_ACTION", "drop"},
            {"LEAK_DETECTOR_BACKOFF_S", "2,5,15"},
            {"LEAK_DETECTOR_MAX_CONCURRENCY", "5"},
            {"LEAK_DETECTOR_PROMPT_PATH", ""},
            {"ENABLE_REFLECTION_PROTOCOL", "false"},
            {"ENABLE_BELIEF_PROTOCOL", "false"},
            {"REFLECTION_PROTOCOL_PATH", ""},
            {"BELIEF_PROTOCOL_PATH", ""},
            {"PROMPT_TEMPLATES_PATH", ""},
            {"REACT_MAX_STEPS", "6"},
            {"REACT_MAX_SEARCH_CALLS", "4"},
            {"REACT_MIN_SEARCH_CALLS", "0"},
            {"REACT_BUDGET_EXCEEDED_DROP_TOOLS", "true"},
            {"REACT_FORCE_FINAL_ANSWER_LOOKAHEAD", "2"},
            {"REACT_FINAL_ANSWER_RETRY", "false"},
            {"RUNS_ROOT", "runs"},
            {"SOURCE_DB", "dataset.db"},
            {"WRITE_MESSAGES_TRACE", "true"},
        };
        return catalog;
    }

    static Settings from_defaults() {
        Settings s;
        s.values_ = defaults();
        return s;
    }

    static Settings from_env(const std::string& dotenv_path = "") {
        Settings s = from_defaults();
        if (!dotenv_path.empty()) s.load_dotenv(dotenv_path);
        for (auto& [key, _] : defaults()) {
            if (const char* v = std::getenv(key.c_str())) s.values_[key] = v;
        }
        return s;
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it != values_.end()) return it->second;
        static const std::string empty;
        return empty;
    }

    bool get_bool(const std::string& key) const {
        auto v = to_lower(get(key));
        return v == "1" || v == "true" || v == "yes" || v == "on";
    }

    int get_int(const std::string& key) const { return std::stoi(get(key)); }
    double get_double(const std::string& key) const { return std::stod(get(key)); }

    std::vector<double> get_double_list(const std::string& key) const {
        std::vector<double> out;
        for (auto& part : split_list(get(key))) out.push_back(std::stod(part));
        return out;
    }

    std::vector<std::string> get_list(const std::string& key) const {
        return split_list(get(key));
    }

    const std::map<std::string, std::string>& raw() const { return values_; }

private:
    // KEY=VALUE lines; '#' starts a comment; surrounding quotes stripped.
    void load_dotenv(const std::string& path) {
        std::ifstream in(path);
        if (!in) return;
        std::string line;
        while (std::getline(in, line)) {
            auto t = strip(line);
            if (t.empty() || t.front() == '#') continue;
            auto eq = t.find('=');
            if (eq == std::string_view::npos) continue;
            std::string key(strip(t.substr(0, eq)));
            std::string value(strip(t.substr(eq + 1)));
            if (value.size() >= 2 && ((value.front() == '"' && value.back() == '"') ||
                                      (value.front() == '\'' && value.back() == '\'')))
                value = value.substr(1, value.size() - 2);
            if (!key.empty()) values_[key] = value;
        }
    }

    std::map<std::string, std::string> values_;
};

}  // namespace hindcast

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/settings.hpp"
#include "hindcast/core/sha256.hpp"
#include "hindcast/core/sqlite.hpp"
#include "hindcast/core/strings.hpp"

namespace hindcast::store {

inline std::string utc_now_iso() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[24];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

// YYYYMMDD-HHMMSS-xxxx; the hex suffix keeps same-second runs distinct.
inline std::string new_run_id() {
    auto now = std::chrono::system_clock::now();
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char stamp[18];
    std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    std::uniform_int_distribution<int> hex(0, 15);
    std::string suffix;
    for (int i = 0; i < 4; ++i) suffix += "0123456789abcdef"[hex(rng)];
    return std::string(stamp) + "-" + suffix;
}

// "/" maps to "__", anything else outside [A-Za-z0-9._-] to "_".
inline std::string sanitize_slug(const std::string& slug) {
    std::string out;
    for (char c : slug) {
        if (c == '/') {
            out += "__";
        } else if ((c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                   c == '.' || c == '_' || c == '-') {
            out += c;
        } else {
            out += '_';
        }
    }
    return out;
}

// Budget grid cells ride on the virtual slug {real}::r{T}::c{C}.
inline std::string encode_virtual_slug(const std::string& real, int step_cap, int search_cap) {
    return real + "::r" + std::to_string(step_cap) + "::c" + std::to_string(search_cap);
}

struct VirtualSlug {
    std::string real;
    std::optional<int> step_cap;
    std::optional<int> search_cap;
};

// Peels the ::r/::c suffix; a malformed suffix leaves the slug plain.
inline VirtualSlug parse_virtual_slug(const std::string& slug) {
    auto parse_int = [](const std::string& s) -> std::optional<int> {
        if (s.empty()) return std::nullopt;
        for (char c : s)
            if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        return std::stoi(s);
    };
    size_t c_pos = slug.rfind("::c");
    if (c_pos != std::string::npos) {
        size_t r_pos = slug.rfind("::r", c_pos);
        if (r_pos != std::string::npos) {
            auto r = parse_int(slug.substr(r_pos + 3, c_pos - r_pos - 3));
            auto c = parse_int(slug.substr(c_pos + 3));
            if (r && c) return {slug.substr(0, r_pos), r, c};
        }
    }
    return {slug, std::nullopt, std::nullopt};
}

struct RunLayout {
    std::filesystem::path root;
    std::filesystem::path manifest_path;
    std::filesystem::path db_dir;
    std::filesystem::path analysis_dir;
    std::filesystem::path log_path;

    // Creates the fixed directory tree. Re-entering an existing run id is the
    // resume path: nothing is overwritten.
    static RunLayout init(const std::filesystem::path& runs_root, const std::string& run_id) {
        RunLayout l;
        l.root = runs_root / run_id;
        l.manifest_path = l.root / "manifest.json";
        l.db_dir = l.root / "db";
        l.analysis_dir = l.root / "analysis";
        std::filesystem::create_directories(l.db_dir);
        std::filesystem::create_directories(l.analysis_dir);
        std::filesystem::create_directories(l.root / "logs");
        l.log_path = l.root / "logs" / (run_id + ".log");
        return l;
    }
};

// Every key whose name contains API_KEY reduces to first-4 + sha256-12 of the
// full value; a leaked snapshot exposes neither the key nor the per-provider
// key count.
inline nlohmann::json redact_settings(const Settings& settings) {
    nlohmann::json snapshot;
    for (auto& [key, value] : settings.raw()) {
        if (contains(key, "API_KEY")) {
            if (value.empty())
                snapshot[key] = "";
            else
                snapshot[key] = value.substr(0, 4) + sha256_12(value);
        } else {
            snapshot[key] = value;
        }
    }
    return snapshot;
}

// The reproducibility tuple: everything needed to replay the run.
struct RunSpec {
    std::string dataset_ref;
    std::string model_slug;
    std::string model_cutoff;  // ISO date, day granularity
    int delta_days = 1;
    int step_cap = 6;
    int search_cap = 4;
    std::string renderer_id = "renderer-v1";
    std::string parser_id = "parser-v1";
    std::string normalization_id = "letter-set-v1";
    std::string aggregation_id = "hierarchical-v1";
    int trials = 3;
    double temperature = 0.7;
    double top_p = 1.0;
    int max_tokens = 12000;
    bool reflection_enabled = false;
    bool belief_enabled = false;

    nlohmann::json to_json() const {
        return {{"dataset_ref", dataset_ref},
                {"model_slug", model_slug},
                {"model_cutoff", model_cutoff},
                {"delta_days", delta_days},
                {"step_cap", step_cap},
                {"search_cap", search_cap},
                {"renderer_id", renderer_id},
                {"parser_id", parser_id},
                {"normalization_id", normalization_id},
                {"aggregation_id", aggregation_id},
                {"trials", trials},
                {"temperature", temperature},
                {"top_p", top_p},
                {"max_tokens", max_tokens},
                {"reflection_enabled", reflection_enabled},
                {"belief_enabled", belief_enabled}};
    }

    static RunSpec from_json(const nlohmann::json& j) {
        RunSpec r;
        r.dataset_ref = j.value("dataset_ref", "");
        r.model_slug = j.value("model_slug", "");
        r.model_cutoff = j.value("model_cutoff", "");
        r.delta_days = j.value("delta_days", 1);
        r.step_cap = j.value("step_cap", 6);
        r.search_cap = j.value("search_cap", 4);
        r.renderer_id = j.value("renderer_id", "renderer-v1");
        r.parser_id = j.value("parser_id", "parser-v1");
        r.normalization_id = j.value("normalization_id", "letter-set-v1");
        r.aggregation_id = j.value("aggregation_id", "hierarchical-v1");
        r.trials = j.value("trials", 3);
        r.temperature = j.value("temperature", 0.7);
        r.top_p = j.value("top_p", 1.0);
        r.max_tokens = j.value("max_tokens", 12000);
        r.reflection_enabled = j.value("reflection_enabled", false);
        r.belief_enabled = j.value("belief_enabled", false);
        return r;
    }
};

struct HashChain {
    std::string source_db_hash;
    std::string metadata_hash;
    std::string prompt_templates_hash;
    std::optional<std::string> reflection_protocol_hash;  // sha256-16
    std::optional<std::string> belief_protocol_hash;      // sha256-16
    std::optional<std::string> leak_detector_prompt_hash; // sha256-16

    nlohmann::json to_json() const {
        auto opt = [](const std::optional<std::string>& v) {
            return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
        };
        return {{"source_db_hash", source_db_hash},
                {"metadata_hash", metadata_hash},
                {"prompt_templates_hash", prompt_templates_hash},
                {"reflection_protocol_hash", opt(reflection_protocol_hash)},
                {"belief_protocol_hash", opt(belief_protocol_hash)},
                {"leak_detector_prompt_hash", opt(leak_detector_prompt_hash)}};
    }
};

// Everything the loop produced for one (question, trial), ready to persist.
struct TrialPersist {
    std::string created_at;
    std::optional<std::string> error;
    std::optional<std::string> final_answer_letters;
    std::optional<std::string> final_answer_raw;
    std::optional<std::string> belief_final;      // JSON
    std::optional<std::string> belief_trace;      // JSON list
    std::optional<bool> belief_parse_ok;
    bool final_answer_retry_used = false;
    std::string search_calls_json = "[]";
    std::optional<std::string> messages_trace;    // JSON; dropped when disabled
    std::optional<std::string> finish_reason;
    std::optional<std::string> response_id;
    std::optional<std::string> system_fingerprint;
    std::optional<std::string> service_tier;
    int nudges_used = 0;
    std::string step_metrics_json = "[]";
    std::int64_t latency_ms = 0;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
};

// One SQLite file per virtual model slug. One row per question; trials live
// in s{j}_ column groups so the resume rule can interrogate each sample
// independently. Single-writer; readers may open completed stores freely.
class TrialDb {
public:
    TrialDb(const std::string& path, int n_trials) : db_(path), n_trials_(n_trials) {
        migrate_schema();
    }

    static std::vector<std::pair<std::string, std::string>> base_columns() {
        return {{"q_id", "TEXT"},       {"model", "TEXT"},   {"cutoff", "TEXT"},
                {"delta", "INTEGER"},   {"created_at", "TEXT"}, {"error", "TEXT"},
                {"user_prompt", "TEXT"}};
    }

    static std::vector<std::pair<std::string, std::string>> trial_columns(int j) {
        std::string p = "s" + std::to_string(j) + "_";
        return {{p + "created_at", "TEXT"},
                {p + "error", "TEXT"},
                {p + "final_answer_letters", "TEXT"},
                {p + "final_answer_raw", "TEXT"},
                {p + "belief_final", "TEXT"},
                {p + "belief_trace", "TEXT"},
                {p + "belief_parse_ok", "INTEGER"},
                {p + "final_answer_retry_used", "INTEGER"},
                {p + "search_calls", "TEXT"},
                {p + "messages_trace", "TEXT"},
                {p + "finish_reason", "TEXT"},
                {p + "nudges_used", "INTEGER"},
                {p + "step_metrics", "TEXT"},
                {p + "response_id", "TEXT"},
                {p + "system_fingerprint", "TEXT"},
                {p + "service_tier", "TEXT"},
                {p + "latency_ms", "INTEGER"},
                {p + "prompt_tokens", "INTEGER"},
                {p + "completion_tokens", "INTEGER"}};
    }

    // Column introspection plus one additive ALTER per missing column. A
    // fresh database and one missing any subset both reach the full column
    // set in a single pass; existing rows are untouched. An existing column
    // with a different declared type is a hard failure.
    void migrate_schema() {
        db_.exec("CREATE TABLE IF NOT EXISTS run_results (q_id TEXT PRIMARY KEY)");
        db_.exec("CREATE TABLE IF NOT EXISTS run_meta (key TEXT PRIMARY KEY, value TEXT)");

        std::map<std::string, std::string> existing;
        {
            auto st = db_.prepare("PRAGMA table_info(run_results)");
            while (st.step()) existing[st.column_text(1)] = st.column_text(2);
        }
        auto ensure = [&](const std::string& name, const std::string& type) {
            auto it = existing.find(name);
            if (it == existing.end()) {
                db_.exec("ALTER TABLE run_results ADD COLUMN " + name + " " + type);
                return;
            }
            if (to_upper(it->second) != type)
                throw sql::Error("run_results." + name + " has incompatible type '" +
                                 it->second + "', expected " + type);
        };
        for (auto& [name, type] : base_columns()) ensure(name, type);
        for (int j = 1; j <= n_trials_; ++j)
            for (auto& [name, type] : trial_columns(j)) ensure(name, type);
    }

    void ensure_row(const std::string& q_id, const std::string& model, const std::string& cutoff,
                    int delta, const std::string& user_prompt) {
        auto st = db_.prepare(
            "INSERT INTO run_results (q_id, model, cutoff, delta, created_at, user_prompt) "
            "VALUES (?1, ?2, ?3, ?4, ?5, ?6) "
            "ON CONFLICT(q_id) DO UPDATE SET user_prompt = excluded.user_prompt");
        st.bind(1, q_id).bind(2, model).bind(3, cutoff).bind(4, static_cast<std::int64_t>(delta));
        st.bind(5, utc_now_iso()).bind(6, user_prompt);
        st.step();
    }

    // Accounted-for iff the trial was created and its error slot is empty or
    // the cutoff-skip marker. Anything else re-emits on resume.
    bool accounted(const std::string& q_id, int j) {
        std::string p = "s" + std::to_string(j) + "_";
        auto st = db_.prepare("SELECT " + p + "created_at, " + p +
                              "error FROM run_results WHERE q_id = ?1");
        st.bind(1, q_id);
        if (!st.step()) return false;
        if (st.is_null(0)) return false;
        if (st.is_null(1)) return true;
        return st.column_text(1) == "skipped_training_cutoff";
    }

    // Cutoff-skips are pre-seeded ahead of any LLM work.
    void seed_cutoff_skip(const std::string& q_id, int j) {
        std::string p = "s" + std::to_string(j) + "_";
        auto st = db_.prepare("UPDATE run_results SET " + p + "created_at = ?1, " + p +
                              "error = 'skipped_training_cutoff' WHERE q_id = ?2");
        st.bind(1, utc_now_iso()).bind(2, q_id);
        st.step();
    }

    void write_trial(const std::string& q_id, int j, const TrialPersist& t) {
        std::string p = "s" + std::to_string(j) + "_";
        auto st = db_.prepare(
            "UPDATE run_results SET " + p + "created_at=?1, " + p + "error=?2, " + p +
            "final_answer_letters=?3, " + p + "final_answer_raw=?4, " + p + "belief_final=?5, " +
            p + "belief_trace=?6, " + p + "belief_parse_ok=?7, " + p +
            "final_answer_retry_used=?8, " + p + "search_calls=?9, " + p +
            "messages_trace=?10, " + p + "finish_reason=?11, " + p + "nudges_used=?12, " + p +
            "step_metrics=?13, " + p + "response_id=?14, " + p + "system_fingerprint=?15, " + p +
            "service_tier=?16, " + p + "latency_ms=?17, " + p + "prompt_tokens=?18, " + p +
            "completion_tokens=?19 WHERE q_id=?20");
        st.bind(1, t.created_at).bind_opt(2, t.error).bind_opt(3, t.final_answer_letters);
        st.bind_opt(4, t.final_answer_raw).bind_opt(5, t.belief_final).bind_opt(6, t.belief_trace);
        if (t.belief_parse_ok)
            st.bind(7, static_cast<std::int64_t>(*t.belief_parse_ok ? 1 : 0));
        else
            st.bind_null(7);
        st.bind(8, static_cast<std::int64_t>(t.final_answer_retry_used ? 1 : 0));
        st.bind(9, t.search_calls_json).bind_opt(10, t.messages_trace).bind_opt(11, t.finish_reason);
        st.bind(12, static_cast<std::int64_t>(t.nudges_used)).bind(13, t.step_metrics_json);
        st.bind_opt(14, t.response_id).bind_opt(15, t.system_fingerprint).bind_opt(16, t.service_tier);
        st.bind(17, t.latency_ms).bind(18, t.prompt_tokens).bind(19, t.completion_tokens);
        st.bind(20, q_id);
        st.step();
    }

    void write_meta(const std::string& key, const std::string& value) {
        auto st = db_.prepare("INSERT OR REPLACE INTO run_meta (key, value) VALUES (?1, ?2)");
        st.bind(1, key).bind(2, value);
        st.step();
    }

    std::optional<std::string> read_meta(const std::string& key) {
        auto st = db_.prepare("SELECT value FROM run_meta WHERE key = ?1");
        st.bind(1, key);
        if (!st.step()) return std::nullopt;
        return st.column_text(0);
    }

    struct TrialRead {
        std::optional<std::string> created_at;
        std::optional<std::string> error;
        std::optional<std::string> final_answer_letters;
        std::optional<std::string> final_answer_raw;
        std::optional<std::string> belief_final;
        std::optional<std::string> belief_trace;
        std::optional<bool> belief_parse_ok;
        std::string search_calls_json = "[]";
        int nudges_used = 0;
    };

    struct RowRead {
        std::string q_id;
        std::optional<std::string> error;
        std::vector<TrialRead> trials;
    };

    std::vector<RowRead> read_rows() {
        std::string cols = "q_id, error";
        for (int j = 1; j <= n_trials_; ++j) {
            std::string p = "s" + std::to_string(j) + "_";
            cols += ", " + p + "created_at, " + p + "error, " + p + "final_answer_letters, " + p +
                    "final_answer_raw, " + p + "belief_final, " + p + "belief_trace, " + p +
                    "belief_parse_ok, " + p + "search_calls, " + p + "nudges_used";
        }
        std::vector<RowRead> rows;
        auto st = db_.prepare("SELECT " + cols + " FROM run_results ORDER BY q_id");
        while (st.step()) {
            RowRead row;
            row.q_id = st.column_text(0);
            row.error = st.column_opt_text(1);
            int col = 2;
            for (int j = 1; j <= n_trials_; ++j) {
                TrialRead t;
                t.created_at = st.column_opt_text(col++);
                t.error = st.column_opt_text(col++);
                t.final_answer_letters = st.column_opt_text(col++);
                t.final_answer_raw = st.column_opt_text(col++);
                t.belief_final = st.column_opt_text(col++);
                t.belief_trace = st.column_opt_text(col++);
                if (!st.is_null(col)) t.belief_parse_ok = st.column_int64(col) != 0;
                ++col;
                if (!st.is_null(col)) t.search_calls_json = st.column_text(col);
                ++col;
                t.nudges_used = static_cast<int>(st.column_int64(col++));
                row.trials.push_back(std::move(t));
            }
            rows.push_back(std::move(row));
        }
        return rows;
    }

    int n_trials() const { return n_trials_; }
    sql::Db& db() { return db_; }

private:
    sql::Db db_;
    int n_trials_;
};

inline void write_manifest(const RunLayout& layout, const std::string& run_id,
                           const RunSpec& spec, const HashChain& chain,
                           const nlohmann::json& config_snapshot) {
    if (std::filesystem::exists(layout.manifest_path)) return;  // resume path
    nlohmann::json manifest = chain.to_json();
    manifest["run_id"] = run_id;
    manifest["created_at"] = utc_now_iso();
    manifest["run_spec"] = spec.to_json();
    manifest["config_snapshot"] = config_snapshot;
    manifest["analysis_schema"] = "v1";
    std::ofstream out(layout.manifest_path);
    out << manifest.dump(2) << "\n";
}

}  // namespace hindcast::store

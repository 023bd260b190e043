#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hindcast/core/sqlite.hpp"
#include "hindcast/dataset/question.hpp"
#include "hindcast/renderer/templates.hpp"

namespace hindcast::dataset {

// Single-file store with three tables: questions, prompt_templates,
// dataset_metadata. Column names are load-bearing; downstream joins key on
// them. Read-only after construction.
class Store {
public:
    explicit Store(const std::string& path) : db_(path), path_(path) {}

    static Store create(const std::string& path) {
        Store s(path);
        s.db_.exec(
            "CREATE TABLE IF NOT EXISTS questions ("
            "  id TEXT PRIMARY KEY,"
            "  choice_type TEXT NOT NULL,"
            "  question_type TEXT NOT NULL,"
            "  event TEXT NOT NULL,"
            "  options TEXT NOT NULL,"
            "  answer TEXT NOT NULL,"
            "  end_time TEXT NOT NULL)");
        s.db_.exec(
            "CREATE TABLE IF NOT EXISTS prompt_templates ("
            "  key TEXT PRIMARY KEY,"
            "  value TEXT NOT NULL)");
        s.db_.exec(
            "CREATE TABLE IF NOT EXISTS dataset_metadata ("
            "  key TEXT PRIMARY KEY,"
            "  value TEXT NOT NULL)");
        return s;
    }

    void insert_question(const Question& q) {
        nlohmann::json options = q.options;
        auto st = db_.prepare(
            "INSERT INTO questions (id, choice_type, question_type, event, options, answer, "
            "end_time) VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)");
        st.bind(1, q.id)
            .bind(2, to_string(q.choice_type))
            .bind(3, to_string(q.question_type))
            .bind(4, q.event)
            .bind(5, options.dump())
            .bind(6, letters_to_string(q.answer))
            .bind(7, q.end_time.to_iso());
        st.step();
    }

    void write_templates(const prompts::PromptTemplateSet& templates) {
        auto st = db_.prepare("INSERT OR REPLACE INTO prompt_templates (key, value) VALUES (?1, ?2)");
        for (auto& [key, value] : templates.as_map()) {
            st.bind(1, key).bind(2, value);
            st.step();
            st.reset();
        }
    }

    void write_metadata(const std::string& key, const std::string& value) {
        auto st = db_.prepare(
            "INSERT OR REPLACE INTO dataset_metadata (key, value) VALUES (?1, ?2)");
        st.bind(1, key).bind(2, value);
        st.step();
    }

    std::vector<Question> load_questions() {
        std::vector<Question> out;
        auto st = db_.prepare(
            "SELECT id, choice_type, question_type, event, options, answer, end_time "
            "FROM questions ORDER BY rowid");
        while (st.step()) {
            Question q;
            q.id = st.column_text(0);
            auto ct = choice_type_from(st.column_text(1));
            auto qt = question_type_from(st.column_text(2));
            if (!ct || !qt)
                throw std::runtime_error(q.id + ": unrecognised type enum in store");
            q.choice_type = *ct;
            q.question_type = *qt;
            q.event = st.column_text(3);
            for (auto& opt : nlohmann::json::parse(st.column_text(4)))
                q.options.push_back(opt.get<std::string>());
            q.answer = letters_from_string(st.column_text(5));
            auto end = Date::parse_iso(st.column_text(6));
            if (!end) throw std::runtime_error(q.id + ": unparseable end_time in store");
            q.end_time = *end;
            q.validate();
            out.push_back(std::move(q));
        }
        return out;
    }

    prompts::PromptTemplateSet load_templates() {
        std::map<std::string, std::string> kv;
        auto st = db_.prepare("SELECT key, value FROM prompt_templates");
        while (st.step()) kv[st.column_text(0)] = st.column_text(1);
        return prompts::PromptTemplateSet::from_map(kv);
    }

    std::map<std::string, std::string> load_metadata() {
        std::map<std::string, std::string> kv;
        auto st = db_.prepare("SELECT key, value FROM dataset_metadata");
        while (st.step()) kv[st.column_text(0)] = st.column_text(1);
        return kv;
    }

    const std::string& path() const { return path_; }
    sql::Db& db() { return db_; }

private:
    sql::Db db_;
    std::string path_;
};

}  // namespace hindcast::dataset

#pragma once

#include <sqlite3.h>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hindcast::sql {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Statement {
public:
    Statement(sqlite3* db, std::string_view text) : db_(db) {
        if (sqlite3_prepare_v2(db, text.data(), static_cast<int>(text.size()), &stmt_, nullptr) !=
            SQLITE_OK)
            throw Error(std::string("prepare failed: ") + sqlite3_errmsg(db));
    }
    Statement(const Statement&) = delete;
    Statement& operator=(const Statement&) = delete;
    Statement(Statement&& other) noexcept : db_(other.db_), stmt_(other.stmt_) {
        other.stmt_ = nullptr;
    }
    ~Statement() {
        if (stmt_) sqlite3_finalize(stmt_);
    }

    Statement& bind(int idx, std::string_view v) {
        check(sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()),
                                SQLITE_TRANSIENT));
        return *this;
    }
    Statement& bind(int idx, std::int64_t v) {
        check(sqlite3_bind_int64(stmt_, idx, v));
        return *this;
    }
    Statement& bind(int idx, double v) {
        check(sqlite3_bind_double(stmt_, idx, v));
        return *this;
    }
    Statement& bind_null(int idx) {
        check(sqlite3_bind_null(stmt_, idx));
        return *this;
    }
    Statement& bind_opt(int idx, const std::optional<std::string>& v) {
        return v ? bind(idx, std::string_view(*v)) : bind_null(idx);
    }

    // True while a row is available.
    bool step() {
        int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw Error(std::string("step failed: ") + sqlite3_errmsg(db_));
    }

    bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }
    std::string column_text(int col) const {
        const unsigned char* p = sqlite3_column_text(stmt_, col);
        return p ? reinterpret_cast<const char*>(p) : "";
    }
    std::optional<std::string> column_opt_text(int col) const {
        if (is_null(col)) return std::nullopt;
        return column_text(col);
    }
    std::int64_t column_int64(int col) const { return sqlite3_column_int64(stmt_, col); }
    double column_double(int col) const { return sqlite3_column_double(stmt_, col); }

    void reset() {
        sqlite3_reset(stmt_);
        sqlite3_clear_bindings(stmt_);
    }

private:
    void check(int rc) {
        if (rc != SQLITE_OK) throw Error(std::string("bind failed: ") + sqlite3_errmsg(db_));
    }
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

class Db {
public:
    explicit Db(const std::string& path) {
        if (sqlite3_open(path.c_str(), &db_) != SQLITE_OK) {
            std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
            if (db_) sqlite3_close(db_);
            throw Error("cannot open database " + path + ": " + msg);
        }
        sqlite3_busy_timeout(db_, 10000);
    }
    Db(const Db&) = delete;
    Db& operator=(const Db&) = delete;
    Db(Db&& other) noexcept : db_(other.db_) { other.db_ = nullptr; }
    ~Db() {
        if (db_) sqlite3_close(db_);
    }

    void exec(const std::string& sql) {
        char* err = nullptr;
        if (sqlite3_exec(db_, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
            std::string msg = err ? err : "unknown";
            sqlite3_free(err);
            throw Error("exec failed: " + msg + " in: " + sql);
        }
    }

    Statement prepare(std::string_view text) { return Statement(db_, text); }

    std::vector<std::string> table_columns(const std::string& table) {
        std::vector<std::string> cols;
        Statement st(db_, "PRAGMA table_info(" + table + ")");
        while (st.step()) cols.push_back(st.column_text(1));
        return cols;
    }

    bool table_exists(const std::string& table) {
        Statement st(db_, "SELECT name FROM sqlite_master WHERE type='table' AND name=?1");
        st.bind(1, table);
        return st.step();
    }

    sqlite3* handle() { return db_; }

private:
    sqlite3* db_ = nullptr;
};

}  // namespace hindcast::sql

#include "iterforge/common/database.hpp"

#include <sqlite3.h>

#include "iterforge/common/error.hpp"

namespace iterforge {

namespace {

struct Statement {
  sqlite3_stmt* stmt = nullptr;
  ~Statement() { sqlite3_finalize(stmt); }
};

}  // namespace

Database::Database(const std::filesystem::path& file) {
  if (sqlite3_open(file.c_str(), &db_) != SQLITE_OK) {
    std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
    sqlite3_close(db_);
    db_ = nullptr;
    throw Error(ErrorCode::kIo, "cannot open database " + file.string() + ": " + msg);
  }
  sqlite3_busy_timeout(db_, 5000);
  exec("PRAGMA journal_mode=WAL");
  exec("PRAGMA synchronous=NORMAL");
}

Database::~Database() { sqlite3_close(db_); }

void Database::exec(std::string_view sql) {
  std::lock_guard lock(mu_);
  char* err = nullptr;
  std::string text(sql);
  if (sqlite3_exec(db_, text.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
    std::string msg = err ? err : "unknown";
    sqlite3_free(err);
    throw Error(ErrorCode::kIo, "sql error: " + msg);
  }
}

void Database::query(std::string_view sql, const std::vector<std::string>& binds,
                     const std::function<void(const Row&)>& row) {
  std::lock_guard lock(mu_);
  Statement st;
  if (sqlite3_prepare_v2(db_, sql.data(), static_cast<int>(sql.size()), &st.stmt, nullptr) !=
      SQLITE_OK) {
    throw Error(ErrorCode::kIo, std::string("sql prepare: ") + sqlite3_errmsg(db_));
  }
  for (std::size_t i = 0; i < binds.size(); ++i) {
    sqlite3_bind_text(st.stmt, static_cast<int>(i + 1), binds[i].data(),
                      static_cast<int>(binds[i].size()), SQLITE_TRANSIENT);
  }
  for (;;) {
    int rc = sqlite3_step(st.stmt);
    if (rc == SQLITE_DONE) break;
    if (rc != SQLITE_ROW) {
      throw Error(ErrorCode::kIo, std::string("sql step: ") + sqlite3_errmsg(db_));
    }
    if (!row) continue;
    int n = sqlite3_column_count(st.stmt);
    Row values;
    values.reserve(static_cast<std::size_t>(n));
    for (int c = 0; c < n; ++c) {
      if (sqlite3_column_type(st.stmt, c) == SQLITE_NULL) {
        values.emplace_back(std::nullopt);
      } else {
        const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(st.stmt, c));
        values.emplace_back(std::string(text, static_cast<std::size_t>(sqlite3_column_bytes(st.stmt, c))));
      }
    }
    row(values);
  }
}

void Database::transaction(const std::function<void()>& fn) {
  std::lock_guard lock(mu_);
  exec("BEGIN IMMEDIATE");
  try {
    fn();
  } catch (...) {
    try {
      exec("ROLLBACK");
    } catch (...) {
    }
    throw;
  }
  exec("COMMIT");
}

}  // namespace iterforge

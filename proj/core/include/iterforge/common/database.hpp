#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

struct sqlite3;
struct sqlite3_stmt;

namespace iterforge {

// Thin RAII wrapper over an SQLite connection. One connection is shared by
// all repositories of a store; calls are serialized on an internal mutex.
class Database {
 public:
  explicit Database(const std::filesystem::path& file);
  ~Database();
  Database(const Database&) = delete;
  Database& operator=(const Database&) = delete;

  void exec(std::string_view sql);

  // Runs |sql| with text bindings; each result row is passed to |row| as
  // column texts (NULL columns become std::nullopt).
  using Row = std::vector<std::optional<std::string>>;
  void query(std::string_view sql, const std::vector<std::string>& binds,
             const std::function<void(const Row&)>& row = {});

  // Runs |fn| inside BEGIN IMMEDIATE / COMMIT; rolls back on exception.
  void transaction(const std::function<void()>& fn);

 private:
  sqlite3* db_ = nullptr;
  std::recursive_mutex mu_;
};

}  // namespace iterforge

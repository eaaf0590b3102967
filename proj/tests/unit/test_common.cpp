#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "iterforge/common/database.hpp"
#include "iterforge/common/error.hpp"
#include "iterforge/common/files.hpp"
#include "iterforge/common/ids.hpp"
#include "iterforge/common/sha256.hpp"
#include "test_support.hpp"

using namespace iterforge;
using iterforge::testing::TempDir;

TEST(Sha256, KnownVectors) {
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Sha256, StreamingMatchesOneShot) {
  std::string data(100000, '\0');
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<char>(i * 31 + 7);
  Sha256 h;
  for (std::size_t off = 0; off < data.size(); off += 4093) h.update(std::string_view(data).substr(off, 4093));
  EXPECT_EQ(h.hex_digest(), sha256_hex(data));
}

TEST(IdSequence, ZeroPaddedAndMonotonic) {
  IdSequence ids("t");
  EXPECT_EQ(ids.next(), "t-000001");
  EXPECT_EQ(ids.next(), "t-000002");
}

TEST(IdSequence, ObserveResumesPastHighestId) {
  IdSequence ids("p");
  ids.observe("p-000041");
  ids.observe("p-000007");
  ids.observe("t-000900");
  ids.observe("garbage");
  EXPECT_EQ(ids.next(), "p-000042");
}

TEST(IdSequence, UniqueUnderConcurrency) {
  IdSequence ids("x");
  std::vector<std::vector<std::string>> got(4);
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 500; ++i) got[t].push_back(ids.next());
    });
  }
  for (auto& t : threads) t.join();
  std::set<std::string> all;
  for (const auto& v : got) all.insert(v.begin(), v.end());
  EXPECT_EQ(all.size(), 2000u);
}

TEST(Files, AtomicWriteReplacesContents) {
  TempDir dir;
  std::filesystem::create_directories(dir / "a");
  auto f = dir / "a" / "b.txt";
  write_file_atomic(f, "one");
  write_file_atomic(f, "two");
  EXPECT_EQ(read_file(f), "two");
}

TEST(Files, ReadMissingThrowsIo) {
  TempDir dir;
  try {
    read_file(dir / "nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIo);
  }
}

TEST(Files, CopyTreeCopiesNestedFiles) {
  TempDir dir;
  std::filesystem::create_directories(dir / "src" / "x");
  write_file(dir / "src" / "x" / "y.txt", "y");
  write_file(dir / "src" / "z.txt", "z");
  copy_tree(dir / "src", dir / "dst");
  EXPECT_EQ(read_file(dir / "dst" / "x" / "y.txt"), "y");
  EXPECT_EQ(read_file(dir / "dst" / "z.txt"), "z");
}

TEST(Files, ZeroPadded) {
  EXPECT_EQ(zero_padded(42, 6), "000042");
  EXPECT_EQ(zero_padded(1234567, 3), "1234567");
}

TEST(ErrorCode, NamesAreSnakeCase) {
  EXPECT_EQ(to_string(ErrorCode::kNotFound), "not_found");
  EXPECT_EQ(to_string(ErrorCode::kInvalidArgument), "invalid_argument");
}

TEST(Database, QueryBindsAndNulls) {
  TempDir dir;
  Database db(dir / "t.db");
  db.exec("CREATE TABLE kv (k TEXT PRIMARY KEY, v TEXT)");
  db.query("INSERT INTO kv VALUES (?, ?)", {"a", "1"});
  db.exec("INSERT INTO kv VALUES ('b', NULL)");
  std::vector<Database::Row> rows;
  db.query("SELECT k, v FROM kv ORDER BY k", {}, [&](const Database::Row& r) { rows.push_back(r); });
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(*rows[0][1], "1");
  EXPECT_FALSE(rows[1][1].has_value());
}

TEST(Database, TransactionRollsBackOnThrow) {
  TempDir dir;
  Database db(dir / "t.db");
  db.exec("CREATE TABLE n (v INTEGER)");
  EXPECT_THROW(db.transaction([&] {
    db.exec("INSERT INTO n VALUES (1)");
    throw std::runtime_error("boom");
  }),
               std::runtime_error);
  int count = -1;
  db.query("SELECT COUNT(*) FROM n", {}, [&](const Database::Row& r) { count = std::stoi(*r[0]); });
  EXPECT_EQ(count, 0);
}

#pragma once

#include <string>
#include <string_view>

namespace iterforge {

// Lowercase hex SHA-256 of |bytes| (64 characters).
std::string sha256_hex(std::string_view bytes);

// Incremental digest for content that arrives in pieces.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  std::string hex_digest();

 private:
  struct State;
  State* state_;
};

}  // namespace iterforge

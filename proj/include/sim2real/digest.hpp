#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sim2real {

using Bytes = std::vector<std::uint8_t>;

inline std::span<const std::uint8_t> as_bytes(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

// Incremental SHA-256. Digests are reported as lowercase hex.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  Sha256& update(std::span<const std::uint8_t> data);
  Sha256& update(std::string_view text) { return update(as_bytes(text)); }
  std::string hex_digest();

 private:
  struct State;
  std::unique_ptr<State> state_;
};

std::string sha256_hex(std::span<const std::uint8_t> data);
inline std::string sha256_hex(std::string_view text) {
  return sha256_hex(as_bytes(text));
}

std::string base64_encode(std::span<const std::uint8_t> data);
// Throws ProtocolError on malformed input.
Bytes base64_decode(std::string_view text);

}  // namespace sim2real

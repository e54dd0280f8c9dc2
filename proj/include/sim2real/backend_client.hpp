#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sim2real/digest.hpp"

namespace sim2real {

// Target real-world domain of the im2im phase.
enum class TargetDomain { kitti, cs };

std::string to_string(TargetDomain domain);
// Throws UnknownDomain.
TargetDomain parse_target_domain(std::string_view text);

// "http://host:port/optional/prefix" split into what the HTTP layer needs.
struct Endpoint {
  std::string origin;       // scheme://host[:port]
  std::string path_prefix;  // "" or "/prefix" without trailing slash

  static Endpoint parse(std::string_view url);  // throws ConfigError
  std::string url() const { return origin + path_prefix; }
};

// Exponential backoff: delay before attempt k+1 is
// base * factor^(k-1) scaled by a uniform jitter in [1 - jitter, 1 + jitter].
struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  double factor = 2.0;
  double jitter = 0.25;

  std::chrono::milliseconds delay_before(int next_attempt, double unit_random) const;
};

struct HttpTimeouts {
  std::chrono::seconds connect{10};
  std::chrono::seconds read{600};
  std::chrono::seconds write{120};
};

struct HealthInfo {
  bool ok = false;
  std::string model_id;
  bool deterministic = false;
};

struct ImageReply {
  Bytes image;
  std::string format;
  std::string model_id;
  std::optional<std::string> target_domain;
  int attempts = 0;
};

struct EmbedReply {
  std::size_t dims = 0;
  std::vector<std::pair<std::string, std::vector<double>>> rows;
  int attempts = 0;
};

// Client for the backend wire protocol:
//   GET  /v1/health
//   POST /v1/enhance    {image_b64, format, prompt, seed}
//   POST /v1/translate  {image_b64, format, target_domain}
//   POST /v1/embed      {images: [{id, image_b64}], format}
// Transport failures, HTTP 429 and 5xx are retried per the policy and end
// in TransportError; other non-2xx replies and malformed bodies raise
// ProtocolError immediately. Safe to use from several threads.
class BackendClient {
 public:
  explicit BackendClient(std::string_view endpoint_url, RetryPolicy retry = {},
                         HttpTimeouts timeouts = {});

  const Endpoint& endpoint() const { return endpoint_; }

  // Throws BackendUnavailable when unreachable or reporting ok=false.
  HealthInfo health() const;

  ImageReply enhance(std::span<const std::uint8_t> png, std::string_view prompt,
                     std::int64_t seed) const;
  ImageReply translate(std::span<const std::uint8_t> png, TargetDomain domain) const;
  EmbedReply embed(const std::vector<std::pair<std::string, Bytes>>& images) const;

  // Request bodies exactly as sent on the wire.
  static std::string enhance_body(std::span<const std::uint8_t> png, std::string_view prompt,
                                  std::int64_t seed);
  static std::string translate_body(std::span<const std::uint8_t> png, TargetDomain domain);

 private:
  nlohmann::json post(const std::string& route, const std::string& body,
                      int* attempts) const;

  Endpoint endpoint_;
  RetryPolicy retry_;
  HttpTimeouts timeouts_;
};

}  // namespace sim2real

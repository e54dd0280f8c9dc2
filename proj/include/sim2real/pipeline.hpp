#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sim2real/backend_client.hpp"
#include "sim2real/dataset.hpp"
#include "sim2real/digest.hpp"

namespace sim2real {

// Built-in diffusion prompt (resources/prompts/enhance_v1.txt).
std::string_view default_enhance_prompt();

enum class PhaseKind { diffusion_enhance, im2im_translate };

std::string to_string(PhaseKind kind);
PhaseKind parse_phase_kind(std::string_view text);  // throws ConfigError

struct PhaseSpec {
  PhaseKind kind = PhaseKind::diffusion_enhance;
  std::string endpoint;
  // diffusion_enhance
  std::string prompt;
  std::int64_t seed = 0;
  // im2im_translate
  std::optional<TargetDomain> target_domain;

  static PhaseSpec diffusion(std::string endpoint, std::string prompt, std::int64_t seed = 0);
  static PhaseSpec im2im(std::string endpoint, TargetDomain domain);

  void validate() const;  // throws ConfigError
  // {"endpoint", "kind", "params"} with sorted keys; hashed into cache keys.
  nlohmann::json canonical() const;
};

struct PipelineConfig {
  std::vector<PhaseSpec> phases;
  std::size_t concurrency = 1;
  int retries = 3;
  std::filesystem::path cache_dir = ".sim2real-cache";
  std::string resize_policy = "none";
  std::chrono::milliseconds backoff_base{500};
  HttpTimeouts timeouts;

  // Non-empty phases, diffusion before im2im, resize_policy "none".
  void validate() const;  // throws ConfigError
  // Hash over everything that can change an output artifact.
  std::string config_hash() const;
  nlohmann::json to_json() const;
};

// Digest of (input bytes || canonical phase serialization).
std::string cache_key(std::span<const std::uint8_t> input, const PhaseSpec& phase);

struct PhaseOutput {
  Bytes image;  // always PNG
  std::string model_id;
  std::optional<std::string> target_domain;
  int attempts = 0;
};

// Sends one PNG through the diffusion backend. The reply must decode and
// keep the input's width and height (DimensionChanged otherwise).
PhaseOutput enhance_phase(const BackendClient& client, std::span<const std::uint8_t> png,
                          std::string_view prompt, std::int64_t seed);
Bytes enhance_phase(const std::string& endpoint, std::span<const std::uint8_t> png,
                    std::string_view prompt, std::int64_t seed);

// As enhance_phase; the reply must also echo the requested domain.
PhaseOutput translate_phase(const BackendClient& client, std::span<const std::uint8_t> png,
                            TargetDomain domain);
// Rejects unknown domains with UnknownDomain before any request is made.
PhaseOutput translate_phase(const BackendClient& client, std::span<const std::uint8_t> png,
                            std::string_view domain);

// Content-addressed artifact store:
//   <root>/objects/<sha256>       artifacts
//   <root>/keys/<cache key>.json  phase cache records
class ArtifactStore {
 public:
  struct CacheRecord {
    std::string output_hash;
    std::string model_id;
    std::optional<std::string> target_domain;
  };

  explicit ArtifactStore(std::filesystem::path root);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path object_path(const std::string& hash) const;
  bool has(const std::string& hash) const;
  std::string put(std::span<const std::uint8_t> bytes);  // returns content hash
  Bytes get(const std::string& hash) const;

  std::optional<CacheRecord> lookup(const std::string& key) const;
  void remember(const std::string& key, const CacheRecord& record);

 private:
  std::filesystem::path root_;
};

struct PhaseEntry {
  std::string image_id;
  std::size_t phase_index = 0;
  PhaseKind kind = PhaseKind::diffusion_enhance;
  std::string endpoint;
  std::string input_hash;
  std::optional<std::string> output_hash;
  std::string model_id;
  std::optional<std::string> target_domain;
  double duration_ms = 0;
  int attempts = 0;
  bool cached = false;
  std::optional<std::string> error_kind;
  std::optional<std::string> error_message;
};

struct ImageOutcome {
  std::string image_id;
  bool ok = false;
  std::optional<std::string> output_hash;
  int width = 0;
  int height = 0;
  std::optional<std::string> error_kind;  // "PhaseError" or an input error kind
  std::optional<std::string> error_message;
};

struct BackendInfo {
  std::string endpoint;
  std::string model_id;
  bool deterministic = false;
};

struct RunManifest {
  std::string config_hash;
  nlohmann::json config;
  std::string dataset;
  std::string started;
  std::string finished;
  std::vector<BackendInfo> backends;  // health replies; empty for fully cached runs
  std::vector<PhaseEntry> entries;    // record order, then phase order
  std::vector<ImageOutcome> images;   // record order
  std::size_t backend_requests = 0;
  bool all_cached = false;
  std::filesystem::path path;  // where manifest.json was written

  std::size_t failed() const;
};

nlohmann::json to_json(const RunManifest& manifest);

struct RunOptions {
  // When set, the final artifact of each successful image is copied to
  // <export_dir>/<id>.png.
  std::optional<std::filesystem::path> export_dir;
};

// Applies the phases to every record in manifest order. Per-image failures
// are recorded and do not stop other images. A run whose every phase is
// already cached makes no backend requests at all.
RunManifest run_pipeline(const PipelineConfig& config, const DatasetManifest& dataset,
                         const RunOptions& options = {});

}  // namespace sim2real

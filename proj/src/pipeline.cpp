#include "sim2real/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <ctime>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "sim2real/errors.hpp"
#include "sim2real/image_io.hpp"
#include "sim2real/io.hpp"
#include "sim2real/prompt_resource.hpp"
#include "sim2real/version.hpp"

namespace sim2real {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view default_enhance_prompt() { return resources::kEnhancePrompt; }

std::string to_string(PhaseKind kind) {
  return kind == PhaseKind::diffusion_enhance ? "diffusion_enhance" : "im2im_translate";
}

PhaseKind parse_phase_kind(std::string_view text) {
  if (text == "diffusion_enhance") return PhaseKind::diffusion_enhance;
  if (text == "im2im_translate") return PhaseKind::im2im_translate;
  throw ConfigError("unknown phase kind '" + std::string(text) + "'");
}

PhaseSpec PhaseSpec::diffusion(std::string endpoint, std::string prompt, std::int64_t seed) {
  PhaseSpec p;
  p.kind = PhaseKind::diffusion_enhance;
  p.endpoint = std::move(endpoint);
  p.prompt = std::move(prompt);
  p.seed = seed;
  return p;
}

PhaseSpec PhaseSpec::im2im(std::string endpoint, TargetDomain domain) {
  PhaseSpec p;
  p.kind = PhaseKind::im2im_translate;
  p.endpoint = std::move(endpoint);
  p.target_domain = domain;
  return p;
}

void PhaseSpec::validate() const {
  Endpoint::parse(endpoint);
  if (kind == PhaseKind::diffusion_enhance && prompt.empty()) {
    throw ConfigError("diffusion_enhance phase needs a non-empty prompt");
  }
  if (kind == PhaseKind::im2im_translate && !target_domain) {
    throw ConfigError("im2im_translate phase needs a target_domain (kitti or cs)");
  }
}

json PhaseSpec::canonical() const {
  json params = json::object();
  if (kind == PhaseKind::diffusion_enhance) {
    params["prompt"] = prompt;
    params["seed"] = seed;
  } else {
    params["target_domain"] = target_domain ? to_string(*target_domain) : std::string();
  }
  return {{"kind", to_string(kind)}, {"endpoint", endpoint}, {"params", std::move(params)}};
}

void PipelineConfig::validate() const {
  if (phases.empty()) throw ConfigError("pipeline has no phases");
  for (const auto& p : phases) p.validate();
  bool seen_im2im = false;
  for (std::size_t i = 0; i < phases.size(); ++i) {
    if (phases[i].kind == PhaseKind::im2im_translate) seen_im2im = true;
    if (phases[i].kind == PhaseKind::diffusion_enhance && seen_im2im) {
      throw ConfigError("phase " + std::to_string(i) +
                        ": diffusion_enhance must precede im2im_translate");
    }
  }
  if (concurrency < 1) throw ConfigError("concurrency must be >= 1");
  if (retries < 1) throw ConfigError("retries must be >= 1");
  if (resize_policy != "none") {
    throw ConfigError("resize_policy must be \"none\" (got \"" + resize_policy + "\")");
  }
  if (cache_dir.empty()) throw ConfigError("cache_dir is empty");
}

std::string PipelineConfig::config_hash() const {
  json phases_json = json::array();
  for (const auto& p : phases) phases_json.push_back(p.canonical());
  const json doc = {{"phases", std::move(phases_json)}, {"resize_policy", resize_policy}};
  return sha256_hex(doc.dump());
}

json PipelineConfig::to_json() const {
  json phases_json = json::array();
  for (const auto& p : phases) phases_json.push_back(p.canonical());
  return {{"phases", std::move(phases_json)},
          {"concurrency", concurrency},
          {"retries", retries},
          {"cache_dir", cache_dir.string()},
          {"resize_policy", resize_policy},
          {"backoff_base_ms", backoff_base.count()}};
}

std::string cache_key(std::span<const std::uint8_t> input, const PhaseSpec& phase) {
  Sha256 h;
  h.update(input);
  h.update(phase.canonical().dump());
  return h.hex_digest();
}

// ---------------------------------------------------------------------------

namespace {

PhaseOutput finish_reply(ImageReply reply, std::span<const std::uint8_t> input,
                         const char* route) {
  const ImageFormat actual = sniff_format(reply.image);
  if (reply.format != "png" && reply.format != "jpeg" && reply.format != "jpg") {
    throw ProtocolError(std::string(route) + " replied with unsupported format '" +
                        reply.format + "'");
  }
  const ImageFormat declared = reply.format == "png" ? ImageFormat::png : ImageFormat::jpeg;
  if (actual != declared) {
    throw ProtocolError(std::string(route) + " declared format '" + reply.format +
                        "' but sent " + to_string(actual) + " data");
  }
  ImageInfo in_info, out_info;
  try {
    in_info = probe_image(input);
    out_info = probe_image(reply.image);
  } catch (const DecodeError& e) {
    throw ProtocolError(std::string(route) + ": " + e.what());
  }
  if (in_info.width != out_info.width || in_info.height != out_info.height) {
    throw DimensionChanged(std::string(route) + " returned " + std::to_string(out_info.width) +
                           "x" + std::to_string(out_info.height) + " for a " +
                           std::to_string(in_info.width) + "x" +
                           std::to_string(in_info.height) + " input; resizing is not allowed");
  }
  PhaseOutput out;
  try {
    out.image = declared == ImageFormat::png ? std::move(reply.image) : ensure_png(reply.image);
  } catch (const DecodeError& e) {
    throw ProtocolError(std::string(route) + ": " + e.what());
  }
  out.model_id = std::move(reply.model_id);
  out.target_domain = std::move(reply.target_domain);
  out.attempts = reply.attempts;
  return out;
}

void require_png_input(std::span<const std::uint8_t> png) {
  if (sniff_format(png) != ImageFormat::png) throw DecodeError("phase input must be PNG");
  probe_image(png);
}

}  // namespace

PhaseOutput enhance_phase(const BackendClient& client, std::span<const std::uint8_t> png,
                          std::string_view prompt, std::int64_t seed) {
  if (prompt.empty()) throw ConfigError("enhance_phase: prompt is empty");
  require_png_input(png);
  return finish_reply(client.enhance(png, prompt, seed), png, "/v1/enhance");
}

Bytes enhance_phase(const std::string& endpoint, std::span<const std::uint8_t> png,
                    std::string_view prompt, std::int64_t seed) {
  return enhance_phase(BackendClient(endpoint), png, prompt, seed).image;
}

PhaseOutput translate_phase(const BackendClient& client, std::span<const std::uint8_t> png,
                            TargetDomain domain) {
  require_png_input(png);
  PhaseOutput out = finish_reply(client.translate(png, domain), png, "/v1/translate");
  if (out.target_domain != to_string(domain)) {
    throw ProtocolError("/v1/translate echoed target_domain '" +
                        out.target_domain.value_or("<missing>") + "', requested '" +
                        to_string(domain) + "'");
  }
  return out;
}

PhaseOutput translate_phase(const BackendClient& client, std::span<const std::uint8_t> png,
                            std::string_view domain) {
  return translate_phase(client, png, parse_target_domain(domain));
}

// ---------------------------------------------------------------------------

ArtifactStore::ArtifactStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_ / "objects");
  fs::create_directories(root_ / "keys");
}

fs::path ArtifactStore::object_path(const std::string& hash) const {
  return root_ / "objects" / hash;
}

bool ArtifactStore::has(const std::string& hash) const {
  return fs::is_regular_file(object_path(hash));
}

std::string ArtifactStore::put(std::span<const std::uint8_t> bytes) {
  std::string hash = sha256_hex(bytes);
  if (!has(hash)) write_file_atomic(object_path(hash), bytes);
  return hash;
}

Bytes ArtifactStore::get(const std::string& hash) const { return read_file(object_path(hash)); }

std::optional<ArtifactStore::CacheRecord> ArtifactStore::lookup(const std::string& key) const {
  const fs::path p = root_ / "keys" / (key + ".json");
  if (!fs::is_regular_file(p)) return std::nullopt;
  try {
    const json j = json::parse(read_text_file(p));
    CacheRecord r;
    r.output_hash = j.at("output_hash").get<std::string>();
    r.model_id = j.value("model_id", std::string());
    if (j.contains("target_domain") && j.at("target_domain").is_string()) {
      r.target_domain = j.at("target_domain").get<std::string>();
    }
    if (!has(r.output_hash)) return std::nullopt;
    return r;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable record: treat as a miss
  }
}

void ArtifactStore::remember(const std::string& key, const CacheRecord& record) {
  json j = {{"output_hash", record.output_hash}, {"model_id", record.model_id}};
  if (record.target_domain) j["target_domain"] = *record.target_domain;
  write_file_atomic(root_ / "keys" / (key + ".json"), j.dump() + "\n");
}

// ---------------------------------------------------------------------------

std::size_t RunManifest::failed() const {
  return static_cast<std::size_t>(
      std::count_if(images.begin(), images.end(), [](const ImageOutcome& o) { return !o.ok; }));
}

namespace {

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

std::string utc_timestamp(std::chrono::system_clock::time_point tp, bool compact) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp.time_since_epoch()) % 1000;
  const std::time_t t = std::chrono::system_clock::to_time_t(tp);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, compact ? "%Y%m%dT%H%M%S" : "%Y-%m-%dT%H:%M:%S") << '.'
      << std::setw(3) << std::setfill('0') << ms.count() << 'Z';
  return out.str();
}

struct ImageWork {
  ImageOutcome outcome;
  std::vector<PhaseEntry> entries;
  std::size_t requests = 0;
};

// Input bytes as sent to the first phase: PNG files verbatim, anything else
// transcoded losslessly.
Bytes load_input(const DatasetManifest& dataset, const ImageRecord& rec) {
  return ensure_png(read_file(dataset.resolve(rec)));
}

}  // namespace

json to_json(const RunManifest& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    json error = nullptr;
    if (e.error_kind) error = {{"kind", *e.error_kind}, {"message", e.error_message.value_or("")}};
    entries.push_back({{"image_id", e.image_id},
                       {"phase_index", e.phase_index},
                       {"kind", to_string(e.kind)},
                       {"endpoint", e.endpoint},
                       {"input_hash", e.input_hash},
                       {"output_hash", optional_json(e.output_hash)},
                       {"model_id", e.model_id},
                       {"target_domain", optional_json(e.target_domain)},
                       {"duration_ms", e.duration_ms},
                       {"attempts", e.attempts},
                       {"cached", e.cached},
                       {"error", std::move(error)}});
  }
  json images = json::array();
  for (const auto& o : m.images) {
    json error = nullptr;
    if (o.error_kind) error = {{"kind", *o.error_kind}, {"message", o.error_message.value_or("")}};
    images.push_back({{"image_id", o.image_id},
                      {"status", o.ok ? "ok" : "failed"},
                      {"output_hash", optional_json(o.output_hash)},
                      {"width", o.width},
                      {"height", o.height},
                      {"error", std::move(error)}});
  }
  json backends = json::array();
  for (const auto& b : m.backends) {
    backends.push_back(
        {{"endpoint", b.endpoint}, {"model_id", b.model_id}, {"deterministic", b.deterministic}});
  }
  return {{"schema_version", kSchemaVersion},
          {"toolkit_version", kToolkitVersion},
          {"config_hash", m.config_hash},
          {"config", m.config},
          {"dataset", m.dataset},
          {"started", m.started},
          {"finished", m.finished},
          {"backends", std::move(backends)},
          {"backend_requests", m.backend_requests},
          {"all_cached", m.all_cached},
          {"summary",
           {{"images", m.images.size()},
            {"ok", m.images.size() - m.failed()},
            {"failed", m.failed()}}},
          {"entries", std::move(entries)},
          {"images", std::move(images)}};
}

RunManifest run_pipeline(const PipelineConfig& config, const DatasetManifest& dataset,
                         const RunOptions& options) {
  config.validate();
  const auto started = std::chrono::system_clock::now();
  ArtifactStore store(config.cache_dir);

  RetryPolicy retry;
  retry.max_attempts = config.retries;
  retry.base_delay = config.backoff_base;
  std::vector<BackendClient> clients;
  for (const auto& p : config.phases) clients.emplace_back(p.endpoint, retry, config.timeouts);

  RunManifest manifest;
  manifest.config_hash = config.config_hash();
  manifest.config = config.to_json();
  manifest.dataset = dataset.name;
  manifest.started = utc_timestamp(started, false);

  // Planning pass: walk the cache chain. Backends are contacted (health
  // first) only when some phase of some image is missing from the cache.
  bool any_miss = false;
  for (const auto& rec : dataset.records) {
    try {
      Bytes current = load_input(dataset, rec);
      for (const auto& phase : config.phases) {
        const auto hit = store.lookup(cache_key(current, phase));
        if (!hit) {
          any_miss = true;
          break;
        }
        current = store.get(hit->output_hash);
      }
    } catch (const std::exception&) {
      // Unreadable inputs fail in the execution pass without backend calls.
    }
    if (any_miss) break;
  }
  if (any_miss) {
    std::map<std::string, std::size_t> seen;
    for (std::size_t i = 0; i < clients.size(); ++i) {
      if (seen.count(config.phases[i].endpoint)) continue;
      const HealthInfo h = clients[i].health();
      ++manifest.backend_requests;
      seen.emplace(config.phases[i].endpoint, i);
      manifest.backends.push_back({config.phases[i].endpoint, h.model_id, h.deterministic});
    }
  }

  const std::size_t n = dataset.records.size();
  std::vector<ImageWork> work(n);
  std::atomic<std::size_t> next{0};

  auto process = [&](std::size_t idx) {
    const ImageRecord& rec = dataset.records[idx];
    ImageWork& w = work[idx];
    w.outcome.image_id = rec.id;
    Bytes current;
    try {
      current = load_input(dataset, rec);
      const ImageInfo info = probe_image(current);
      w.outcome.width = info.width;
      w.outcome.height = info.height;
    } catch (const Error& e) {
      w.outcome.error_kind = e.kind();
      w.outcome.error_message = e.what();
      return;
    }
    std::string current_hash = sha256_hex(current);
    for (std::size_t p = 0; p < config.phases.size(); ++p) {
      const PhaseSpec& phase = config.phases[p];
      PhaseEntry entry;
      entry.image_id = rec.id;
      entry.phase_index = p;
      entry.kind = phase.kind;
      entry.endpoint = phase.endpoint;
      entry.input_hash = current_hash;
      const auto t0 = std::chrono::steady_clock::now();
      const std::string key = cache_key(current, phase);
      try {
        if (auto hit = store.lookup(key)) {
          current = store.get(hit->output_hash);
          entry.cached = true;
          entry.model_id = hit->model_id;
          entry.target_domain = hit->target_domain;
          entry.output_hash = hit->output_hash;
        } else {
          PhaseOutput out = phase.kind == PhaseKind::diffusion_enhance
                                ? enhance_phase(clients[p], current, phase.prompt, phase.seed)
                                : translate_phase(clients[p], current, *phase.target_domain);
          entry.attempts = out.attempts;
          w.requests += static_cast<std::size_t>(out.attempts);
          entry.model_id = out.model_id;
          entry.target_domain = out.target_domain;
          entry.output_hash = store.put(out.image);
          store.remember(key, {*entry.output_hash, out.model_id, out.target_domain});
          current = std::move(out.image);
        }
      } catch (const Error& e) {
        entry.attempts = e.kind() == "TransportError" ? config.retries : 1;
        w.requests += static_cast<std::size_t>(entry.attempts);
        entry.error_kind = e.kind();
        entry.error_message = e.what();
        entry.duration_ms = std::chrono::duration<double, std::milli>(
                                std::chrono::steady_clock::now() - t0).count();
        w.entries.push_back(std::move(entry));
        w.outcome.error_kind = "PhaseError";
        w.outcome.error_message = "phase " + std::to_string(p) + " (" + to_string(phase.kind) +
                                  ") failed: " + e.kind() + ": " + e.what();
        return;
      }
      entry.duration_ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - t0).count();
      current_hash = *entry.output_hash;
      w.entries.push_back(std::move(entry));
    }
    w.outcome.ok = true;
    w.outcome.output_hash = current_hash;
    if (options.export_dir) write_file_atomic(*options.export_dir / (rec.id + ".png"), current);
  };

  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        process(i);
      } catch (const std::exception& e) {
        work[i].outcome.ok = false;
        work[i].outcome.error_kind = "PhaseError";
        work[i].outcome.error_message = e.what();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(config.concurrency, 1, std::max<std::size_t>(n, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  bool all_cached = true;
  for (auto& w : work) {
    manifest.backend_requests += w.requests;
    for (auto& e : w.entries) {
      all_cached = all_cached && e.cached;
      manifest.entries.push_back(std::move(e));
    }
    if (!w.outcome.ok) all_cached = false;
    manifest.images.push_back(std::move(w.outcome));
  }
  manifest.all_cached = all_cached && !manifest.entries.empty();

  const auto finished = std::chrono::system_clock::now();
  manifest.finished = utc_timestamp(finished, false);
  fs::path run_dir = fs::path(config.cache_dir) / "runs" /
                     (utc_timestamp(started, true) + "-" + manifest.config_hash.substr(0, 12));
  for (int suffix = 1; fs::exists(run_dir); ++suffix) {
    run_dir = fs::path(config.cache_dir) / "runs" /
              (utc_timestamp(started, true) + "-" + manifest.config_hash.substr(0, 12) + "-" +
               std::to_string(suffix));
  }
  manifest.path = run_dir / "manifest.json";
  write_file_atomic(manifest.path, to_json(manifest).dump(2) + "\n");
  return manifest;
}

}  // namespace sim2real

#include "sim2real/backend_client.hpp"

#include "httplib.h"

#include <cmath>
#include <random>
#include <thread>

#include "sim2real/errors.hpp"

namespace sim2real {

using nlohmann::json;

std::string to_string(TargetDomain domain) {
  return domain == TargetDomain::kitti ? "kitti" : "cs";
}

TargetDomain parse_target_domain(std::string_view text) {
  if (text == "kitti") return TargetDomain::kitti;
  if (text == "cs") return TargetDomain::cs;
  throw UnknownDomain("unknown target domain '" + std::string(text) +
                      "' (expected 'kitti' or 'cs')");
}

Endpoint Endpoint::parse(std::string_view url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw ConfigError("endpoint '" + std::string(url) + "' lacks a scheme (http:// or https://)");
  }
  const auto scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") {
    throw ConfigError("endpoint '" + std::string(url) + "' uses unsupported scheme");
  }
  const auto host_begin = scheme_end + 3;
  const auto slash = url.find('/', host_begin);
  Endpoint e;
  e.origin = std::string(url.substr(0, slash));
  if (e.origin.size() <= host_begin) throw ConfigError("endpoint '" + std::string(url) + "' has no host");
  if (slash != std::string_view::npos) {
    e.path_prefix = std::string(url.substr(slash));
    while (!e.path_prefix.empty() && e.path_prefix.back() == '/') e.path_prefix.pop_back();
  }
  return e;
}

std::chrono::milliseconds RetryPolicy::delay_before(int next_attempt,
                                                    double unit_random) const {
  if (next_attempt <= 1) return std::chrono::milliseconds{0};
  const double scale = std::pow(factor, next_attempt - 2);
  const double jittered = scale * (1.0 - jitter + 2.0 * jitter * unit_random);
  return std::chrono::milliseconds{
      static_cast<long long>(std::llround(static_cast<double>(base_delay.count()) * jittered))};
}

BackendClient::BackendClient(std::string_view endpoint_url, RetryPolicy retry,
                             HttpTimeouts timeouts)
    : endpoint_(Endpoint::parse(endpoint_url)), retry_(retry), timeouts_(timeouts) {
  if (retry_.max_attempts < 1) throw ConfigError("retries must be at least 1");
}

namespace {

void configure(httplib::Client& cli, const HttpTimeouts& t) {
  cli.set_connection_timeout(t.connect);
  cli.set_read_timeout(t.read);
  cli.set_write_timeout(t.write);
  cli.set_keep_alive(false);
}

double unit_random() {
  thread_local std::mt19937_64 rng{std::random_device{}()};
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

std::string error_summary(const httplib::Result& res) {
  std::string body = res->body.substr(0, 200);
  try {
    const json j = json::parse(res->body);
    if (j.contains("message")) body = j.at("message").dump();
  } catch (const json::exception&) {
  }
  return "HTTP " + std::to_string(res->status) + ": " + body;
}

const json& field(const json& obj, const char* key, const std::string& route) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ProtocolError(route + " reply lacks '" + key + "'");
  }
  return obj.at(key);
}

std::string string_field(const json& obj, const char* key, const std::string& route) {
  const json& v = field(obj, key, route);
  if (!v.is_string()) throw ProtocolError(route + " reply field '" + key + "' is not a string");
  return v.get<std::string>();
}

ImageReply image_reply(const json& j, const std::string& route) {
  ImageReply r;
  r.image = base64_decode(string_field(j, "image_b64", route));
  r.format = string_field(j, "format", route);
  r.model_id = j.contains("model_id") && j.at("model_id").is_string()
                   ? j.at("model_id").get<std::string>()
                   : std::string();
  if (j.contains("target_domain") && j.at("target_domain").is_string()) {
    r.target_domain = j.at("target_domain").get<std::string>();
  }
  return r;
}

}  // namespace

json BackendClient::post(const std::string& route, const std::string& body,
                         int* attempts) const {
  const std::string path = endpoint_.path_prefix + route;
  std::string last_error;
  for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
    if (attempts) *attempts = attempt;
    if (attempt > 1) std::this_thread::sleep_for(retry_.delay_before(attempt, unit_random()));
    httplib::Client cli(endpoint_.origin);
    configure(cli, timeouts_);
    auto res = cli.Post(path, body, "application/json");
    if (!res) {
      last_error = "POST " + endpoint_.url() + route + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 429 || res->status >= 500) {
      last_error = "POST " + endpoint_.url() + route + ": " + error_summary(res);
      continue;
    }
    if (res->status < 200 || res->status >= 300) {
      throw ProtocolError("POST " + endpoint_.url() + route + ": " + error_summary(res));
    }
    try {
      return json::parse(res->body);
    } catch (const json::parse_error& e) {
      throw ProtocolError("POST " + endpoint_.url() + route + ": reply is not JSON (" +
                          e.what() + ")");
    }
  }
  throw TransportError(last_error + " (after " + std::to_string(retry_.max_attempts) +
                       " attempts)");
}

HealthInfo BackendClient::health() const {
  httplib::Client cli(endpoint_.origin);
  configure(cli, timeouts_);
  cli.set_read_timeout(timeouts_.connect);
  auto res = cli.Get(endpoint_.path_prefix + "/v1/health");
  if (!res) {
    throw BackendUnavailable(endpoint_.url() + " unreachable: " +
                             httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw BackendUnavailable(endpoint_.url() + " health check failed: " + error_summary(res));
  }
  HealthInfo info;
  try {
    const json j = json::parse(res->body);
    info.ok = j.value("ok", false);
    info.model_id = j.value("model_id", std::string());
    info.deterministic = j.value("deterministic", false);
  } catch (const json::exception& e) {
    throw BackendUnavailable(endpoint_.url() + " health reply malformed: " + e.what());
  }
  if (!info.ok) throw BackendUnavailable(endpoint_.url() + " reports ok=false");
  return info;
}

std::string BackendClient::enhance_body(std::span<const std::uint8_t> png,
                                        std::string_view prompt, std::int64_t seed) {
  json body = {{"image_b64", base64_encode(png)},
               {"format", "png"},
               {"prompt", std::string(prompt)},
               {"seed", seed}};
  return body.dump();
}

std::string BackendClient::translate_body(std::span<const std::uint8_t> png,
                                          TargetDomain domain) {
  json body = {{"image_b64", base64_encode(png)},
               {"format", "png"},
               {"target_domain", to_string(domain)}};
  return body.dump();
}

ImageReply BackendClient::enhance(std::span<const std::uint8_t> png, std::string_view prompt,
                                  std::int64_t seed) const {
  int attempts = 0;
  const json j = post("/v1/enhance", enhance_body(png, prompt, seed), &attempts);
  ImageReply r = image_reply(j, "/v1/enhance");
  r.attempts = attempts;
  return r;
}

ImageReply BackendClient::translate(std::span<const std::uint8_t> png,
                                    TargetDomain domain) const {
  int attempts = 0;
  const json j = post("/v1/translate", translate_body(png, domain), &attempts);
  ImageReply r = image_reply(j, "/v1/translate");
  r.attempts = attempts;
  return r;
}

EmbedReply BackendClient::embed(const std::vector<std::pair<std::string, Bytes>>& images) const {
  json items = json::array();
  for (const auto& [id, bytes] : images) {
    items.push_back({{"id", id}, {"image_b64", base64_encode(bytes)}});
  }
  const json body = {{"images", std::move(items)}, {"format", "png"}};
  EmbedReply reply;
  const json j = post("/v1/embed", body.dump(), &reply.attempts);
  const std::string route = "/v1/embed";
  const json& dims = field(j, "dims", route);
  if (!dims.is_number_integer() || dims.get<long long>() <= 0) {
    throw ProtocolError("/v1/embed reply has invalid dims");
  }
  reply.dims = dims.get<std::size_t>();
  const json& rows = field(j, "rows", route);
  if (!rows.is_array()) throw ProtocolError("/v1/embed reply 'rows' is not an array");
  for (const auto& row : rows) {
    std::string id = string_field(row, "id", route);
    const json& values = field(row, "values", route);
    if (!values.is_array()) throw ProtocolError("/v1/embed row '" + id + "' values not an array");
    std::vector<double> v;
    v.reserve(values.size());
    for (const auto& x : values) {
      if (!x.is_number()) throw ProtocolError("/v1/embed row '" + id + "' has a non-number");
      v.push_back(x.get<double>());
    }
    reply.rows.emplace_back(std::move(id), std::move(v));
  }
  return reply;
}

}  // namespace sim2real

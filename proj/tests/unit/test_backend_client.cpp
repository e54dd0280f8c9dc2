#include <gtest/gtest.h>

#include "json.hpp"
#include "sim2real/backend_client.hpp"
#include "sim2real/errors.hpp"
#include "sim2real/io.hpp"
#include "sim2real/pipeline.hpp"
#include "test_support.hpp"

using namespace sim2real;
using sim2real::testing::StubBackend;

namespace {

const std::filesystem::path kGolden = std::filesystem::path(SIM2REAL_FIXTURE_DIR) / "golden";

RetryPolicy fast_retry(int attempts) {
  RetryPolicy r;
  r.max_attempts = attempts;
  r.base_delay = std::chrono::milliseconds(1);
  return r;
}

std::string closed_endpoint() {
  int port;
  {
    StubBackend stub;
    port = stub.port();
  }
  return "http://127.0.0.1:" + std::to_string(port);
}

}  // namespace

TEST(Endpoint, ParsesOriginAndPrefix) {
  const Endpoint a = Endpoint::parse("http://127.0.0.1:8080");
  EXPECT_EQ(a.origin, "http://127.0.0.1:8080");
  EXPECT_EQ(a.path_prefix, "");
  const Endpoint b = Endpoint::parse("http://models.local:9000/flux/");
  EXPECT_EQ(b.origin, "http://models.local:9000");
  EXPECT_EQ(b.path_prefix, "/flux");
  EXPECT_THROW(Endpoint::parse(""), ConfigError);
  EXPECT_THROW(Endpoint::parse("ftp://host"), ConfigError);
  EXPECT_THROW(Endpoint::parse("http://"), ConfigError);
}

TEST(TargetDomain, ParseAndPrint) {
  EXPECT_EQ(parse_target_domain("kitti"), TargetDomain::kitti);
  EXPECT_EQ(parse_target_domain("cs"), TargetDomain::cs);
  EXPECT_EQ(to_string(TargetDomain::cs), "cs");
  EXPECT_THROW(parse_target_domain("foo"), UnknownDomain);
  EXPECT_THROW(parse_target_domain("KITTI"), UnknownDomain);
}

TEST(RetryPolicy, ExponentialBackoffWithJitter) {
  RetryPolicy r;  // 500 ms, x2, +-25%
  EXPECT_EQ(r.delay_before(1, 0.5).count(), 0);
  EXPECT_EQ(r.delay_before(2, 0.5).count(), 500);
  EXPECT_EQ(r.delay_before(3, 0.5).count(), 1000);
  EXPECT_EQ(r.delay_before(4, 0.5).count(), 2000);
  EXPECT_EQ(r.delay_before(2, 0.0).count(), 375);
  EXPECT_EQ(r.delay_before(2, 1.0).count(), 625);
}

TEST(WireBodies, EnhanceMatchesGoldenRequest) {
  const Bytes png = read_file(kGolden / "tiny.png");
  EXPECT_EQ(BackendClient::enhance_body(png, default_enhance_prompt(), 0),
            read_text_file(kGolden / "enhance_request.json"));
}

TEST(WireBodies, TranslateMatchesGoldenRequest) {
  const Bytes png = read_file(kGolden / "tiny.png");
  EXPECT_EQ(BackendClient::translate_body(png, TargetDomain::cs),
            read_text_file(kGolden / "translate_request_cs.json"));
  EXPECT_EQ(BackendClient::translate_body(png, TargetDomain::kitti),
            read_text_file(kGolden / "translate_request_kitti.json"));
  EXPECT_NE(BackendClient::translate_body(png, TargetDomain::cs).find(R"("target_domain":"cs")"),
            std::string::npos);
}

TEST(BackendClient, HealthReportsDeterminism) {
  StubBackend stub;
  const HealthInfo h = BackendClient(stub.url()).health();
  EXPECT_TRUE(h.ok);
  EXPECT_TRUE(h.deterministic);
  EXPECT_EQ(h.model_id, "stub-identity");
}

TEST(BackendClient, UnhealthyOrUnreachableIsUnavailable) {
  StubBackend::Options o;
  o.healthy = false;
  StubBackend stub(o);
  EXPECT_THROW(BackendClient(stub.url()).health(), BackendUnavailable);
  EXPECT_THROW(BackendClient(closed_endpoint(), fast_retry(1)).health(), BackendUnavailable);
}

TEST(BackendClient, EnhanceIdentityRoundTrip) {
  StubBackend stub;
  const Bytes png = read_file(kGolden / "tiny.png");
  const ImageReply r = BackendClient(stub.url()).enhance(png, "make it real", 42);
  EXPECT_EQ(r.image, png);
  EXPECT_EQ(r.format, "png");
  EXPECT_EQ(r.attempts, 1);
  const auto body = nlohmann::json::parse(stub.bodies("/v1/enhance").at(0));
  EXPECT_EQ(body.at("seed"), 42);
  EXPECT_EQ(body.at("prompt"), "make it real");
}

TEST(BackendClient, TransientServerErrorsAreRetried) {
  StubBackend::Options o;
  o.fail_first = 2;
  StubBackend stub(o);
  const Bytes png = read_file(kGolden / "tiny.png");
  const ImageReply r = BackendClient(stub.url(), fast_retry(3)).enhance(png, "p", 0);
  EXPECT_EQ(r.attempts, 3);
  EXPECT_EQ(stub.requests("/v1/enhance"), 3u);
}

TEST(BackendClient, TooManyRequestsIsRetried) {
  StubBackend::Options o;
  o.fail_first = 1;
  o.fail_status = 429;
  StubBackend stub(o);
  const Bytes png = read_file(kGolden / "tiny.png");
  EXPECT_EQ(BackendClient(stub.url(), fast_retry(2)).enhance(png, "p", 0).attempts, 2);
}

TEST(BackendClient, RetriesExhaustedIsTransportError) {
  StubBackend::Options o;
  o.fail_first = 100;
  StubBackend stub(o);
  const Bytes png = read_file(kGolden / "tiny.png");
  EXPECT_THROW(BackendClient(stub.url(), fast_retry(3)).enhance(png, "p", 0), TransportError);
  EXPECT_EQ(stub.requests("/v1/enhance"), 3u);
  EXPECT_THROW(BackendClient(closed_endpoint(), fast_retry(2)).enhance(png, "p", 0),
               TransportError);
}

TEST(BackendClient, ClientErrorsAreNotRetried) {
  StubBackend::Options o;
  o.fail_first = 100;
  o.fail_status = 400;
  StubBackend stub(o);
  const Bytes png = read_file(kGolden / "tiny.png");
  EXPECT_THROW(BackendClient(stub.url(), fast_retry(3)).enhance(png, "p", 0), ProtocolError);
  EXPECT_EQ(stub.requests("/v1/enhance"), 1u);
}

TEST(BackendClient, TranslateEchoesDomain) {
  StubBackend stub;
  const Bytes png = read_file(kGolden / "tiny.png");
  const ImageReply r = BackendClient(stub.url()).translate(png, TargetDomain::kitti);
  EXPECT_EQ(r.target_domain, "kitti");
  EXPECT_EQ(r.image, png);
}

TEST(BackendClient, EmbedReturnsRowsById) {
  StubBackend stub;
  const Bytes png = read_file(kGolden / "tiny.png");
  const EmbedReply r = BackendClient(stub.url()).embed({{"a", png}, {"b", png}});
  EXPECT_EQ(r.dims, 16u);
  ASSERT_EQ(r.rows.size(), 2u);
  EXPECT_EQ(r.rows[0].first, "a");
  EXPECT_EQ(r.rows[0].second, r.rows[1].second);
}

#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "json.hpp"
#include "sim2real/errors.hpp"
#include "sim2real/report.hpp"

using namespace sim2real;
using nlohmann::json;

namespace {

ReportInput result(const std::string& metric, double value, const std::string& dataset,
                   const std::string& variant, const std::string& domain) {
  json doc = {{"metric", metric},
              {metric, value},
              {"label", {{"dataset", dataset}, {"variant", variant}, {"domain", domain}}}};
  return {metric + "_" + variant + "_" + domain + ".json", doc};
}

// Visual realism table, VKITTI2 block.
std::vector<ReportInput> vkitti_cmmd() {
  return {result("cmmd", 3.734, "vkitti2", "synthetic", "kitti"),
          result("cmmd", 4.805, "vkitti2", "synthetic", "cs"),
          result("cmmd", 2.488, "vkitti2", "diffusion_only", "kitti"),
          result("cmmd", 4.561, "vkitti2", "diffusion_only", "cs"),
          result("cmmd", 2.726, "vkitti2", "im2im_only", "kitti"),
          result("cmmd", 3.923, "vkitti2", "im2im_only", "cs"),
          result("cmmd", 1.781, "vkitti2", "hybrid", "kitti"),
          result("cmmd", 3.751, "vkitti2", "hybrid", "cs")};
}

}  // namespace

TEST(Variant, ParseAndPrint) {
  for (auto v : {Variant::synthetic, Variant::diffusion_only, Variant::im2im_only, Variant::hybrid}) {
    EXPECT_EQ(parse_variant(to_string(v)), v);
  }
  EXPECT_THROW(parse_variant("flux"), ValidationError);
  EXPECT_EQ(to_json(ResultLabel{"gta", Variant::hybrid, ""}),
            json({{"dataset", "gta"}, {"variant", "hybrid"}, {"domain", "-"}}));
}

TEST(Report, FourVariantsSingleColumn) {
  std::vector<ReportInput> in = {result("cmmd", 1.781, "vkitti2", "hybrid", "kitti"),
                                 result("cmmd", 3.734, "vkitti2", "synthetic", "kitti"),
                                 result("cmmd", 2.726, "vkitti2", "im2im_only", "kitti"),
                                 result("cmmd", 2.488, "vkitti2", "diffusion_only", "kitti")};
  const json doc = to_json(build_report(in));
  ASSERT_EQ(doc["tables"].size(), 1u);
  const json& t = doc["tables"][0];
  EXPECT_EQ(t["domains"], json({"kitti"}));
  ASSERT_EQ(t["rows"].size(), 4u);
  const std::vector<std::string> order = {"synthetic", "diffusion_only", "im2im_only", "hybrid"};
  const std::vector<double> values = {3.734, 2.488, 2.726, 1.781};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t["rows"][i]["variant"], order[i]);
    EXPECT_EQ(t["rows"][i]["values"]["kitti"].get<double>(), values[i]);
  }
  EXPECT_EQ(render_text(doc),
            "CMMD (lower is better) | dataset: vkitti2\n"
            "variant         kitti\n"
            "--------------  -----\n"
            "synthetic       3.734\n"
            "diffusion_only  2.488\n"
            "im2im_only      2.726\n"
            "hybrid          1.781\n");
}

TEST(Report, TwoDomainBlock) {
  const json doc = to_json(build_report(vkitti_cmmd()));
  const json& t = doc["tables"][0];
  EXPECT_EQ(t["domains"], json({"kitti", "cs"}));
  EXPECT_EQ(render_text(doc),
            "CMMD (lower is better) | dataset: vkitti2\n"
            "variant         kitti     cs\n"
            "--------------  -----  -----\n"
            "synthetic       3.734  4.805\n"
            "diffusion_only  2.488  4.561\n"
            "im2im_only      2.726  3.923\n"
            "hybrid          1.781  3.751\n");
  EXPECT_EQ(doc["cells"].size(), 8u);
  EXPECT_EQ(doc["kind"], "comparison_report");
  EXPECT_EQ(doc["schema_version"], 1);
}

TEST(Report, SingleResultIsOneRow) {
  const json doc = to_json(build_report({result("miou", 0.5218, "vkitti2", "synthetic", "-")}));
  ASSERT_EQ(doc["tables"].size(), 1u);
  EXPECT_EQ(doc["tables"][0]["rows"].size(), 1u);
  EXPECT_EQ(render_text(doc),
            "mIoU (higher is better) | dataset: vkitti2\n"
            "variant         -\n"
            "---------  ------\n"
            "synthetic  52.18%\n");
}

TEST(Report, MissingCellsRenderAsDash) {
  const json doc = to_json(build_report({result("map50", 0.482, "gta", "synthetic", "-"),
                                         result("map50", 0.491, "gta", "hybrid", "kitti"),
                                         result("map50", 0.477, "gta", "hybrid", "cs")}));
  EXPECT_EQ(render_text(doc),
            "mAP@50 (higher is better) | dataset: gta\n"
            "variant     kitti      cs       -\n"
            "---------  ------  ------  ------\n"
            "synthetic       -       -  48.20%\n"
            "hybrid     49.10%  47.70%       -\n");
}

TEST(Report, ConflictingCellNamesBothSources) {
  std::vector<ReportInput> in = {result("cmmd", 1.781, "vkitti2", "hybrid", "kitti"),
                                 result("cmmd", 1.9, "vkitti2", "hybrid", "kitti")};
  in[1].source = "other.json";
  try {
    build_report(in);
    FAIL() << "expected ConflictingCell";
  } catch (const ConflictingCell& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(hybrid, kitti)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("cmmd_hybrid_kitti.json"), std::string::npos) << msg;
    EXPECT_NE(msg.find("other.json"), std::string::npos) << msg;
  }
  // Same cell on another dataset or metric is fine.
  in[1] = result("cmmd", 1.9, "gta", "hybrid", "kitti");
  EXPECT_NO_THROW(build_report(in));
}

TEST(Report, RejectsUnlabelledOrUnknownResults) {
  EXPECT_THROW(build_report({}), ValidationError);
  EXPECT_THROW(build_report({{"a.json", json{{"metric", "cmmd"}, {"cmmd", 1.0}}}}), ValidationError);
  EXPECT_THROW(build_report({{"a.json", json{{"cmmd", 1.0}}}}), ValidationError);
  EXPECT_THROW(build_report({result("fid", 1.0, "d", "hybrid", "cs")}), ValidationError);
  EXPECT_THROW(build_report({result("cmmd", 1.0, "d", "flux", "cs")}), ValidationError);
  json no_value = result("cmmd", 1.0, "d", "hybrid", "cs").document;
  no_value.erase("cmmd");
  EXPECT_THROW(build_report({{"a.json", no_value}}), ValidationError);
}

TEST(Report, RenderingIsDeterministicAndOrderIndependent) {
  auto in = vkitti_cmmd();
  in.push_back(result("miou", 0.5341, "vkitti2", "hybrid", "kitti"));
  in.push_back(result("map50", 0.482, "gta", "synthetic", "-"));
  const json ref = to_json(build_report(in));
  const std::string text = render_text(ref);
  std::mt19937 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(in.begin(), in.end(), rng);
    const json doc = to_json(build_report(in));
    EXPECT_EQ(doc, ref);
    EXPECT_EQ(render_text(doc), text);
    EXPECT_EQ(render_text(json::parse(doc.dump())), text);
  }
  // Metric order: cmmd, miou, map50.
  EXPECT_EQ(ref["tables"][0]["metric"], "cmmd");
  EXPECT_EQ(ref["tables"][1]["metric"], "miou");
  EXPECT_EQ(ref["tables"][2]["metric"], "map50");
}

TEST(Report, RunMetadataIsCarried) {
  const json run = {{"config_hash", "abc"}, {"dataset", "vkitti2"},
                    {"started", "2026-01-01T00:00:00.000Z"}, {"finished", "2026-01-01T00:01:00.000Z"}};
  const ComparisonReport r = build_report(vkitti_cmmd(), {{"runs/x/manifest.json", run}});
  const json doc = to_json(r);
  ASSERT_EQ(doc["metadata"]["runs"].size(), 1u);
  EXPECT_EQ(doc["metadata"]["runs"][0]["config_hash"], "abc");
  EXPECT_EQ(doc["metadata"]["runs"][0]["source"], "runs/x/manifest.json");
  EXPECT_EQ(doc["metadata"]["datasets"], json({"vkitti2"}));
}

#include <gtest/gtest.h>

#include <cmath>

#include "embedding_fixtures.hpp"
#include "oracles.hpp"
#include "sim2real/cmmd.hpp"
#include "sim2real/errors.hpp"

using namespace sim2real;
using sim2real::testing::gaussian_embeddings;
using sim2real::testing::to_rows;

namespace {

EmbeddingMatrix basis(std::size_t d, std::size_t axis, std::string id) {
  std::vector<float> v(d, 0.0f);
  v[axis] = 1.0f;
  return EmbeddingMatrix({std::move(id)}, d, std::move(v));
}

CmmdConfig with_block(std::size_t block, std::size_t threads = 1) {
  CmmdConfig c;
  c.block = block;
  c.threads = threads;
  return c;
}

double rel_err(double got, long double want) {
  return static_cast<double>(std::fabs((got - want) / want));
}

}  // namespace

TEST(RbfKernel, IdentityOrthonormalAndWideBandwidth) {
  const std::vector<float> x = {0.3f, -1.0f, 2.0f};
  EXPECT_EQ(rbf_kernel<float>(x, x, 10.0), 1.0);
  const std::vector<float> e1 = {1, 0}, e2 = {0, 1};
  EXPECT_NEAR(rbf_kernel<float>(e1, e2, 10.0), 0.990050, 1e-6);
  EXPECT_DOUBLE_EQ(rbf_kernel<float>(e1, e2, 10.0), std::exp(-2.0 / 200.0));
  const std::vector<float> far = {100, -50, 7};
  EXPECT_NEAR(rbf_kernel<float>(x, far, 1e9), 1.0, 1e-9);
  EXPECT_EQ(rbf_kernel<float>(x, far, 3.0), rbf_kernel<float>(far, x, 3.0));
}

TEST(RbfKernel, Errors) {
  const std::vector<float> a = {1, 2}, b = {1, 2, 3};
  EXPECT_THROW(rbf_kernel<float>(a, b, 1.0), DimensionMismatch);
  EXPECT_THROW(rbf_kernel<float>(a, a, 0.0), ConfigError);
}

TEST(MmdSq, IdenticalSetsAreZero) {
  const EmbeddingMatrix a = gaussian_embeddings(40, 6, 1);
  EXPECT_NEAR(mmd_sq(a, a).mmd_sq, 0.0, 1e-9);
  EXPECT_NEAR(cmmd(a, a).cmmd, 0.0, 1e-6);
}

TEST(MmdSq, OrthonormalSingletonsClosedForm) {
  const double expected = 2.0 - 2.0 * std::exp(-0.01);
  const MmdReport r = mmd_sq(basis(4, 0, "x"), basis(4, 1, "y"));
  EXPECT_NEAR(r.mmd_sq, expected, 1e-15);
  EXPECT_NEAR(r.mmd_sq, 0.01990033, 1e-8);
  const MmdReport c = cmmd(basis(4, 0, "x"), basis(4, 1, "y"));
  EXPECT_NEAR(c.cmmd, 19.90033, 1e-4);
  EXPECT_EQ(c.cmmd, 1000.0 * c.mmd_sq);
}

TEST(MmdSq, MatchesDenseOracle) {
  for (std::uint32_t seed = 0; seed < 5; ++seed) {
    const EmbeddingMatrix a = gaussian_embeddings(64, 8, 100 + seed);
    const EmbeddingMatrix b = gaussian_embeddings(64, 8, 200 + seed, 0.4f);
    const CmmdConfig cfg = with_block(16);
    const long double want = oracle::dense_mmd_sq(to_rows(a), to_rows(b), cfg.sigma, false);
    EXPECT_LE(rel_err(mmd_sq(a, b, cfg).mmd_sq, want), 1e-10) << "seed " << seed;
  }
}

TEST(MmdSq, UnbiasedMatchesDenseOracle) {
  CmmdConfig cfg = with_block(7);
  cfg.estimator = MmdEstimator::unbiased_u_statistic;
  cfg.sigma = 2.0;
  const EmbeddingMatrix a = gaussian_embeddings(30, 5, 1);
  const EmbeddingMatrix b = gaussian_embeddings(45, 5, 2, 1.0f);
  const long double want = oracle::dense_mmd_sq(to_rows(a), to_rows(b), cfg.sigma, true);
  EXPECT_LE(rel_err(mmd_sq(a, b, cfg).mmd_sq, want), 1e-10);
}

TEST(MmdSq, UnbiasedCanGoNegative) {
  CmmdConfig cfg;
  cfg.estimator = MmdEstimator::unbiased_u_statistic;
  const EmbeddingMatrix a = gaussian_embeddings(20, 4, 3);
  EXPECT_LT(mmd_sq(a, a, cfg).mmd_sq, 0.0);
}

TEST(KernelBlockMeans, BlockOneEqualsBlockN) {
  const EmbeddingMatrix a = gaussian_embeddings(32, 6, 11);
  const EmbeddingMatrix b = gaussian_embeddings(32, 6, 12, 0.2f);
  const KernelMeans one = kernel_block_means(a, b, with_block(1));
  const KernelMeans all = kernel_block_means(a, b, with_block(32));
  EXPECT_NEAR(one.ref_ref, all.ref_ref, 1e-12);
  EXPECT_NEAR(one.gen_gen, all.gen_gen, 1e-12);
  EXPECT_NEAR(one.ref_gen, all.ref_gen, 1e-12);
  // The accumulation order is fixed per row, so the match is in fact exact.
  EXPECT_EQ(one.ref_gen, all.ref_gen);
}

TEST(KernelBlockMeans, SingleRowSelfMeanIsOne) {
  const EmbeddingMatrix a = gaussian_embeddings(1, 9, 4);
  EXPECT_EQ(kernel_block_means(a, a, {}).ref_ref, 1.0);
}

TEST(KernelBlockMeans, CrossMeanSymmetricUnderSwap) {
  const EmbeddingMatrix a = gaussian_embeddings(17, 5, 5);
  const EmbeddingMatrix b = gaussian_embeddings(23, 5, 6, 0.5f);
  const KernelMeans ab = kernel_block_means(a, b, with_block(4));
  const KernelMeans ba = kernel_block_means(b, a, with_block(4));
  EXPECT_EQ(ab.ref_gen, ba.ref_gen);
  EXPECT_EQ(ab.ref_ref, ba.gen_gen);
}

TEST(MmdSq, SymmetricExactly) {
  for (std::uint32_t seed = 0; seed < 10; ++seed) {
    const EmbeddingMatrix a = gaussian_embeddings(10 + seed, 7, seed);
    const EmbeddingMatrix b = gaussian_embeddings(25 - seed, 7, 50 + seed, 0.3f);
    EXPECT_EQ(cmmd(a, b).mmd_sq, cmmd(b, a).mmd_sq);
  }
}

TEST(MmdSq, ThreadCountNeverChangesResult) {
  const EmbeddingMatrix a = gaussian_embeddings(70, 8, 21);
  const EmbeddingMatrix b = gaussian_embeddings(50, 8, 22, 0.1f);
  const double base = mmd_sq(a, b, with_block(8, 1)).mmd_sq;
  for (std::size_t t : {2, 3, 8}) EXPECT_EQ(mmd_sq(a, b, with_block(8, t)).mmd_sq, base);
}

TEST(MmdSq, TranslationAndRotationInvariance) {
  const std::size_t d = 12;
  const EmbeddingMatrix a = gaussian_embeddings(60, d, 31, 0.0f, 0.3f);
  const EmbeddingMatrix b = gaussian_embeddings(50, d, 32, 0.1f, 0.3f);
  const double base = mmd_sq(a, b).mmd_sq;
  std::vector<double> t(d);
  for (std::size_t k = 0; k < d; ++k) t[k] = 0.25 * static_cast<double>(k) - 1.0;
  const auto q = sim2real::testing::random_orthogonal(d, 33);
  using sim2real::testing::transform_rows;
  EXPECT_NEAR(mmd_sq(transform_rows(a, {}, t), transform_rows(b, {}, t)).mmd_sq, base, 1e-8);
  EXPECT_NEAR(mmd_sq(transform_rows(a, q, {}), transform_rows(b, q, {})).mmd_sq, base, 1e-8);
}

TEST(MmdSq, BiasedEstimatorNonNegative) {
  for (std::uint32_t seed = 0; seed < 20; ++seed) {
    const EmbeddingMatrix a = gaussian_embeddings(1 + seed % 7, 3, seed);
    const EmbeddingMatrix b = gaussian_embeddings(1 + seed % 5, 3, 99 + seed, 0.05f);
    EXPECT_GE(cmmd(a, b).mmd_sq, -1e-9);
  }
}

TEST(Cmmd, NormalizesRowsFirst) {
  const EmbeddingMatrix a = gaussian_embeddings(9, 4, 41);
  const EmbeddingMatrix b = gaussian_embeddings(11, 4, 42, 1.0f);
  // Power-of-two scalings leave the normalized rows bit-identical.
  std::vector<float> a2 = a.data(), b4 = b.data();
  for (auto& v : a2) v *= 2.0f;
  for (auto& v : b4) v *= 4.0f;
  const EmbeddingMatrix as(a.ids(), 4, a2), bs(b.ids(), 4, b4);
  EXPECT_EQ(cmmd(a, b).cmmd, cmmd(as, bs).cmmd);
  EXPECT_NE(mmd_sq(a, b).mmd_sq, mmd_sq(as, bs).mmd_sq);
  EXPECT_THROW(cmmd(EmbeddingMatrix({"z"}, 4, {0, 0, 0, 0}), b), DegenerateRowError);
}

TEST(Cmmd, InputErrors) {
  const EmbeddingMatrix a = gaussian_embeddings(3, 4, 1);
  const EmbeddingMatrix b = gaussian_embeddings(3, 5, 2);
  EXPECT_THROW(cmmd(a, b), DimensionMismatch);
  EXPECT_THROW(cmmd(a, EmbeddingMatrix{}), InsufficientSamples);
  CmmdConfig unb;
  unb.estimator = MmdEstimator::unbiased_u_statistic;
  EXPECT_THROW(cmmd(a, gaussian_embeddings(1, 4, 3), unb), InsufficientSamples);
  CmmdConfig bad;
  bad.sigma = -1;
  EXPECT_THROW(cmmd(a, a, bad), ConfigError);
  bad = {};
  bad.block = 0;
  EXPECT_THROW(cmmd(a, a, bad), ConfigError);
  EXPECT_THROW(parse_estimator("median"), ConfigError);
  EXPECT_EQ(parse_estimator("unbiased"), MmdEstimator::unbiased_u_statistic);
}

TEST(Cmmd, ReportJson) {
  const MmdReport r = cmmd(basis(3, 0, "x"), basis(3, 2, "y"));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("metric"), "cmmd");
  EXPECT_EQ(j.at("n_ref"), 1);
  EXPECT_EQ(j.at("config").at("sigma"), 10.0);
  EXPECT_EQ(j.at("config").at("scale"), 1000.0);
  EXPECT_EQ(j.at("config").at("estimator"), "biased_v_statistic");
  EXPECT_EQ(j.at("cmmd").get<double>(), r.cmmd);
}

#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "sim2real/embedding.hpp"
#include "sim2real/errors.hpp"

namespace sim2real {

enum class MmdEstimator { biased_v_statistic, unbiased_u_statistic };

std::string to_string(MmdEstimator e);
// Accepts "biased", "unbiased" and the full enumerator names.
MmdEstimator parse_estimator(std::string_view text);

// Defaults follow the published CMMD reference: RBF bandwidth 10, output
// scaled by 1000, biased V-statistic over unit-normalized CLIP embeddings.
struct CmmdConfig {
  double sigma = 10.0;
  double scale = 1000.0;
  MmdEstimator estimator = MmdEstimator::biased_v_statistic;
  std::size_t block = 1024;
  std::size_t threads = 0;  // 0 = hardware concurrency; never changes results

  void validate() const;  // throws ConfigError
};

struct KernelMeans {
  double ref_ref = 0;
  double gen_gen = 0;
  double ref_gen = 0;
};

struct MmdReport {
  double mmd_sq = 0;
  double cmmd = 0;  // scale * mmd_sq
  std::size_t n_ref = 0;
  std::size_t n_gen = 0;
  std::size_t dims = 0;
  CmmdConfig config;
};

// exp(-|x - y|^2 / (2 sigma^2)), accumulated in double.
template <typename T>
double rbf_kernel(std::span<const T> x, std::span<const T> y, double sigma) {
  if (x.size() != y.size()) {
    throw DimensionMismatch("rbf_kernel: " + std::to_string(x.size()) + " vs " +
                            std::to_string(y.size()) + " dimensions");
  }
  if (!(sigma > 0.0)) throw ConfigError("rbf_kernel: sigma must be > 0");
  double sq = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double diff = static_cast<double>(x[k]) - static_cast<double>(y[k]);
    sq += diff * diff;
  }
  return std::exp(-sq / (2.0 * sigma * sigma));
}

// Mean kernel values over the three blocks of the joint kernel matrix,
// streamed tile by tile so no n x n matrix is ever materialised. The
// unbiased estimator drops the diagonals of the ref/ref and gen/gen blocks.
// Results are bit-identical for every block size and thread count.
KernelMeans kernel_block_means(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
                               const CmmdConfig& config);

// Squared MMD between the row sets. Rows are used as given; cmmd() is the
// entry point that normalizes first.
MmdReport mmd_sq(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
                 const CmmdConfig& config = {});

// Unit-normalizes both sets, then reports mmd_sq and scale * mmd_sq.
MmdReport cmmd(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
               const CmmdConfig& config = {});

nlohmann::json to_json(const CmmdConfig& config);
nlohmann::json to_json(const MmdReport& report);

}  // namespace sim2real

#include "sim2real/cmmd.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <thread>
#include <vector>

#include "sim2real/digest.hpp"

namespace sim2real {

std::string to_string(MmdEstimator e) {
  return e == MmdEstimator::biased_v_statistic ? "biased_v_statistic" : "unbiased_u_statistic";
}

MmdEstimator parse_estimator(std::string_view text) {
  if (text == "biased" || text == "biased_v_statistic") return MmdEstimator::biased_v_statistic;
  if (text == "unbiased" || text == "unbiased_u_statistic") {
    return MmdEstimator::unbiased_u_statistic;
  }
  throw ConfigError("unknown estimator '" + std::string(text) + "' (biased|unbiased)");
}

void CmmdConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be > 0");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw ConfigError("scale must be > 0");
  if (block < 1) throw ConfigError("block must be >= 1");
}

namespace {

// Neumaier's variant of Kahan summation.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

std::string content_hash(const EmbeddingMatrix& m) {
  Sha256 h;
  const std::uint64_t shape[2] = {m.rows(), m.dims()};
  h.update(std::span(reinterpret_cast<const std::uint8_t*>(shape), sizeof(shape)));
  h.update(std::span(reinterpret_cast<const std::uint8_t*>(m.data().data()),
                     m.data().size() * sizeof(float)));
  return h.hex_digest();
}

// Sum of k(a_i, b_j) over all (i, j), skipping i == j when requested. Row
// tiles are distributed over threads; each row owns its accumulator and sees
// columns in ascending order, so tiling and threading never change the sum.
double kernel_sum(const EmbeddingMatrix& a, const EmbeddingMatrix& b, bool skip_diagonal,
                  const CmmdConfig& config) {
  const std::size_t n_a = a.rows();
  const std::size_t n_b = b.rows();
  const std::size_t block = config.block;
  const std::size_t row_tiles = (n_a + block - 1) / block;
  std::vector<CompensatedSum> row_sums(n_a);
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t ti = next++; ti < row_tiles; ti = next++) {
      const std::size_t i_lo = ti * block;
      const std::size_t i_hi = std::min(n_a, i_lo + block);
      for (std::size_t j_lo = 0; j_lo < n_b; j_lo += block) {
        const std::size_t j_hi = std::min(n_b, j_lo + block);
        for (std::size_t i = i_lo; i < i_hi; ++i) {
          const auto x = a.row(i);
          CompensatedSum& acc = row_sums[i];
          for (std::size_t j = j_lo; j < j_hi; ++j) {
            if (skip_diagonal && i == j) continue;
            acc.add(rbf_kernel(x, b.row(j), config.sigma));
          }
        }
      }
    }
  };

  std::size_t threads = config.threads ? config.threads
                                       : std::max(1u, std::thread::hardware_concurrency());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(row_tiles, 1));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  CompensatedSum total;
  for (const auto& r : row_sums) total.add(r.value());
  return total.value();
}

void check_inputs(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
                  const CmmdConfig& config) {
  config.validate();
  if (ref.rows() == 0 || gen.rows() == 0) {
    throw InsufficientSamples("MMD needs at least one sample in each set (got " +
                              std::to_string(ref.rows()) + " and " +
                              std::to_string(gen.rows()) + ")");
  }
  if (ref.dims() != gen.dims()) {
    throw DimensionMismatch("reference has d=" + std::to_string(ref.dims()) +
                            ", generated has d=" + std::to_string(gen.dims()));
  }
  if (config.estimator == MmdEstimator::unbiased_u_statistic &&
      (ref.rows() < 2 || gen.rows() < 2)) {
    throw InsufficientSamples("unbiased estimator needs at least 2 samples per set");
  }
}

double within_mean(const EmbeddingMatrix& m, const CmmdConfig& config) {
  const auto n = static_cast<double>(m.rows());
  if (config.estimator == MmdEstimator::unbiased_u_statistic) {
    return kernel_sum(m, m, true, config) / (n * (n - 1.0));
  }
  return kernel_sum(m, m, false, config) / (n * n);
}

}  // namespace

KernelMeans kernel_block_means(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
                               const CmmdConfig& config) {
  check_inputs(ref, gen, config);
  KernelMeans means;
  means.ref_ref = within_mean(ref, config);
  means.gen_gen = within_mean(gen, config);
  // The cross block is summed in a canonical argument order so that
  // swapping ref and gen reproduces it bit for bit.
  const bool swap = content_hash(gen) < content_hash(ref);
  const EmbeddingMatrix& first = swap ? gen : ref;
  const EmbeddingMatrix& second = swap ? ref : gen;
  means.ref_gen = kernel_sum(first, second, false, config) /
                  (static_cast<double>(ref.rows()) * static_cast<double>(gen.rows()));
  return means;
}

MmdReport mmd_sq(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
                 const CmmdConfig& config) {
  const KernelMeans m = kernel_block_means(ref, gen, config);
  MmdReport report;
  report.mmd_sq = m.ref_ref + m.gen_gen - 2.0 * m.ref_gen;
  report.cmmd = config.scale * report.mmd_sq;
  report.n_ref = ref.rows();
  report.n_gen = gen.rows();
  report.dims = ref.dims();
  report.config = config;
  return report;
}

MmdReport cmmd(const EmbeddingMatrix& ref, const EmbeddingMatrix& gen,
               const CmmdConfig& config) {
  check_inputs(ref, gen, config);
  return mmd_sq(normalize_rows(ref), normalize_rows(gen), config);
}

nlohmann::json to_json(const CmmdConfig& c) {
  return {{"sigma", c.sigma},
          {"scale", c.scale},
          {"estimator", to_string(c.estimator)},
          {"block", c.block},
          {"kernel", "rbf"}};
}

nlohmann::json to_json(const MmdReport& r) {
  return {{"metric", "cmmd"},
          {"cmmd", r.cmmd},
          {"mmd_sq", r.mmd_sq},
          {"n_ref", r.n_ref},
          {"n_gen", r.n_gen},
          {"dims", r.dims},
          {"config", to_json(r.config)}};
}

}  // namespace sim2real

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace jko {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// N points in R^d stored column-wise, together with the log-density of the
// distribution that generated them. Density-free samplers (MCMC baselines)
// leave `log_density` empty.
struct SampleBatch {
  Mat points;       // d x N
  Vec log_density;  // N, or empty

  SampleBatch() = default;
  SampleBatch(Mat pts, Vec logp) : points(std::move(pts)), log_density(std::move(logp)) {}
  explicit SampleBatch(Mat pts) : points(std::move(pts)) {}

  Eigen::Index dim() const { return points.rows(); }
  Eigen::Index size() const { return points.cols(); }
  bool empty() const { return points.cols() == 0; }
  bool has_density() const { return log_density.size() == points.cols() && points.cols() > 0; }

  // Samples at the given column indices, in order.
  SampleBatch select(std::span<const Eigen::Index> idx) const;
};

// Concatenates two batches of equal dimension. Density columns are kept only if
// both carry them.
SampleBatch concat(const SampleBatch& a, const SampleBatch& b);

// Draws n standard normal points in R^d with their exact log-density.
SampleBatch sample_standard_normal(Eigen::Index dim, Eigen::Index n, Rng& rng);
double standard_normal_log_density(const Eigen::Ref<const Vec>& x);

// CSV with header `x_1,...,x_d,log_density`. Values are written with 17
// significant digits so a reload is bit-exact. The density column is left
// blank for density-free batches.
void write_csv(std::ostream& os, const SampleBatch& batch);
void write_csv(const std::string& path, const SampleBatch& batch);
SampleBatch read_csv(std::istream& is);
SampleBatch read_csv(const std::string& path);

// Derives an independent child seed from a parent seed and a stream label.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream);

}  // namespace jko

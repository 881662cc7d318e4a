#include "jko/metrics.hpp"

#include "jko/errors.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace jko {

namespace {

double pair_distance_sum(const Mat& a, const Mat& b) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.cols(); ++i) {
    total += (b.colwise() - a.col(i)).colwise().norm().sum();
  }
  return total;
}

// Strict weak order on point clouds, used to fix the roles of the two
// arguments so the floating-point summation order does not depend on them.
bool canonical_less(const Mat& a, const Mat& b) {
  if (a.cols() != b.cols()) return a.cols() < b.cols();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

double sample_sd(const Vec& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

double energy_distance(const Mat& xs, const Mat& ys) {
  if (xs.cols() == 0 || ys.cols() == 0) throw ArgumentError("energy distance needs nonempty samples");
  if (xs.rows() != ys.rows()) throw ArgumentError("energy distance: dimension mismatch");
  const bool swap = canonical_less(ys, xs);
  const Mat& a = swap ? ys : xs;
  const Mat& b = swap ? xs : ys;
  const double n = static_cast<double>(a.cols());
  const double m = static_cast<double>(b.cols());
  const double cross = pair_distance_sum(a, b);
  const double self_a = pair_distance_sum(a, a);
  const double self_b = pair_distance_sum(b, b);
  return cross / (n * m) - self_a / (2.0 * n * n) - self_b / (2.0 * m * m);
}

Estimate energy_distance_estimate(const Mat& xs, const Mat& ys, int blocks) {
  Estimate est;
  est.value = energy_distance(xs, ys);
  est.n = std::min(xs.cols(), ys.cols());
  const auto bx = xs.cols() / std::max(blocks, 1);
  const auto by = ys.cols() / std::max(blocks, 1);
  if (blocks >= 2 && bx >= 1 && by >= 1) {
    Vec parts(blocks);
    for (int k = 0; k < blocks; ++k)
      parts[k] = energy_distance(xs.middleCols(k * bx, bx), ys.middleCols(k * by, by));
    // Each block estimate has ~blocks times the variance of the full estimate.
    est.standard_error = sample_sd(parts) / std::sqrt(static_cast<double>(blocks));
  }
  return est;
}

Estimate log_z_estimate(const SampleBatch& batch, const TargetDensity& target) {
  if (batch.empty()) throw ArgumentError("log-Z estimate needs samples");
  if (!batch.has_density()) throw ArgumentError("log-Z estimate needs model log-densities");
  const Vec w = target.log_densities(batch.points) - batch.log_density;
  Estimate est;
  est.value = w.mean();
  est.n = w.size();
  est.standard_error = sample_sd(w) / std::sqrt(static_cast<double>(w.size()));
  return est;
}

std::vector<double> mode_weights(const Mat& points, const GmmSpec& gmm) {
  if (points.cols() == 0) throw ArgumentError("mode weights need samples");
  std::vector<double> counts(gmm.num_modes(), 0.0);
  for (Eigen::Index j = 0; j < points.cols(); ++j) {
    std::size_t best = 0;
    double best_d = (points.col(j) - gmm.means[0]).squaredNorm();
    for (std::size_t k = 1; k < gmm.num_modes(); ++k) {
      const double dk = (points.col(j) - gmm.means[k]).squaredNorm();
      if (dk < best_d) {
        best_d = dk;
        best = k;
      }
    }
    counts[best] += 1.0;
  }
  for (auto& c : counts) c /= static_cast<double>(points.cols());
  return counts;
}

double mode_mse(const Mat& points, const GmmSpec& gmm) {
  const auto w = mode_weights(points, gmm);
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += (w[k] - gmm.weights[k]) * (w[k] - gmm.weights[k]);
  return s / static_cast<double>(w.size());
}

std::map<std::string, double> MetricReport::values() const {
  std::map<std::string, double> v;
  v["n_samples"] = static_cast<double>(n_samples);
  v["energy_distance"] = energy_distance.value;
  v["energy_distance_se"] = energy_distance.standard_error;
  if (log_z) {
    v["log_z"] = log_z->value;
    v["log_z_se"] = log_z->standard_error;
  }
  if (mode_mse) {
    v["mode_mse"] = mode_mse->value;
    v["mode_mse_se"] = mode_mse->standard_error;
  }
  return v;
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "method=" << method << '\n' << "target=" << target << '\n';
  for (const auto& [k, val] : values()) os << k << '=' << val << '\n';
  return os.str();
}

MetricReport evaluate_samples(const SampleBatch& samples, const SampleBatch& reference,
                              const TargetDensity& target, const std::string& method) {
  MetricReport rep;
  rep.method = method;
  rep.target = target.name();
  rep.n_samples = samples.size();
  rep.energy_distance = energy_distance_estimate(samples.points, reference.points);
  if (samples.has_density()) rep.log_z = log_z_estimate(samples, target);
  if (const auto* g = target.gmm()) {
    Estimate e;
    e.value = mode_mse(samples.points, *g);
    e.n = samples.size();
    constexpr int kBlocks = 10;
    const auto bs = samples.size() / kBlocks;
    if (bs >= 1) {
      Vec parts(kBlocks);
      for (int k = 0; k < kBlocks; ++k) parts[k] = mode_mse(samples.points.middleCols(k * bs, bs), *g);
      e.standard_error = sample_sd(parts) / std::sqrt(static_cast<double>(kBlocks));
    }
    rep.mode_mse = e;
  }
  return rep;
}

}  // namespace jko

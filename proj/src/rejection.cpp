#include "jko/rejection.hpp"

#include "jko/errors.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace jko {

double RejectionStepSpec::c() const { return std::exp(log_c); }

void RejectionStepSpec::validate() const {
  if (!std::isfinite(log_c)) throw ConfigError("rejection constant must be positive and finite");
  if (!(mean_acceptance >= 0.0 && mean_acceptance <= 1.0))
    throw ConfigError("mean acceptance must lie in [0, 1]");
  if (!(target_rejection_rate > 0.0 && target_rejection_rate < 1.0))
    throw ConfigError("rejection rate must lie in (0, 1)");
  if (calibration_size < 1) throw ConfigError("calibration size must be positive");
}

double acceptance_prob_log(double log_g, double log_p, double log_c) {
  return std::exp(std::min(0.0, log_g - log_p - log_c));
}

double acceptance_prob(double log_g, double log_p, double c) {
  if (!(c > 0.0)) throw ArgumentError("rejection constant must be positive");
  return acceptance_prob_log(log_g, log_p, std::log(c));
}

double rejection_log_density(double log_p, double alpha, double mean_acceptance) {
  return log_p + std::log(alpha + 1.0 - mean_acceptance);
}

namespace {

Vec log_ratios(const SampleBatch& batch, const TargetDensity& target) {
  if (batch.empty()) throw ArgumentError("empty batch");
  if (!batch.has_density()) throw ArgumentError("batch carries no log-densities");
  return target.log_densities(batch.points) - batch.log_density;
}

}  // namespace

double estimate_mean_acceptance_log(const Vec& log_ratio, double log_c) {
  if (log_ratio.size() == 0) throw ArgumentError("empty batch");
  return (log_ratio.array() - log_c).min(0.0).exp().mean();
}

double estimate_mean_acceptance(const SampleBatch& batch, const TargetDensity& target, double c) {
  if (!(c > 0.0)) throw ArgumentError("rejection constant must be positive");
  return estimate_mean_acceptance_log(log_ratios(batch, target), std::log(c));
}

Calibration select_c_from_log_ratios(const Vec& log_ratio, double r) {
  if (log_ratio.size() == 0) throw ArgumentError("empty batch");
  if (!(r > 0.0 && r < 1.0)) throw ArgumentError("rejection rate must lie in (0, 1)");
  if (!log_ratio.allFinite()) throw ArgumentError("non-finite importance ratio");
  const double target = 1.0 - r;
  const double lo0 = log_ratio.minCoeff();
  const double hi0 = log_ratio.maxCoeff();
  if (hi0 - lo0 <= 1e-12 * std::max(1.0, std::abs(lo0))) {
    // min{1, w / c} = 1 - r with a common ratio w.
    return {lo0 - std::log(target), target, 0};
  }
  // mean alpha is 1 at log c = min ratio and decreases strictly beyond it.
  double lo = lo0;
  double hi = hi0;
  double width = 1.0;
  while (estimate_mean_acceptance_log(log_ratio, hi) > target) {
    hi += width;
    width *= 2.0;
  }
  Calibration cal;
  cal.log_c = 0.5 * (lo + hi);
  cal.mean_acceptance = estimate_mean_acceptance_log(log_ratio, cal.log_c);
  for (int it = 0; it < 100; ++it) {
    cal.iterations = it + 1;
    if (std::abs(cal.mean_acceptance - target) <= 1e-4) break;
    if (cal.mean_acceptance > target)
      lo = cal.log_c;
    else
      hi = cal.log_c;
    cal.log_c = 0.5 * (lo + hi);
    cal.mean_acceptance = estimate_mean_acceptance_log(log_ratio, cal.log_c);
  }
  return cal;
}

Calibration select_c(const SampleBatch& batch, const TargetDensity& target, double r) {
  return select_c_from_log_ratios(log_ratios(batch, target), r);
}

SampleBatch apply_rejection_step(const SampleBatch& batch, const TargetDensity& target,
                                 const RejectionStepSpec& spec, const Resampler& resampler, Rng& rng,
                                 RejectionStats* stats) {
  spec.validate();
  if (batch.empty()) return batch;
  const Vec ratio = log_ratios(batch, target);
  const Eigen::Index n = batch.size();

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vec alpha(n);
  std::vector<Eigen::Index> rejected;
  for (Eigen::Index i = 0; i < n; ++i) {
    alpha[i] = std::exp(std::min(0.0, ratio[i] - spec.log_c));
    if (unif(rng) > alpha[i]) rejected.push_back(i);
  }

  SampleBatch out = batch;
  if (!rejected.empty()) {
    const auto m = static_cast<Eigen::Index>(rejected.size());
    const SampleBatch fresh = resampler(m);
    if (fresh.size() < m)
      throw CapacityError("resampler delivered " + std::to_string(fresh.size()) + " of " +
                          std::to_string(m) + " replacement draws");
    if (fresh.dim() != batch.dim() || !fresh.has_density())
      throw ArgumentError("resampler output must match dimension and carry log-densities");
    for (Eigen::Index k = 0; k < m; ++k) {
      const Eigen::Index i = rejected[static_cast<std::size_t>(k)];
      out.points.col(i) = fresh.points.col(k);
      out.log_density[i] = fresh.log_density[k];
      alpha[i] = acceptance_prob_log(target.log_density(out.points.col(i)), out.log_density[i], spec.log_c);
    }
  }
  for (Eigen::Index i = 0; i < n; ++i)
    out.log_density[i] = rejection_log_density(out.log_density[i], alpha[i], spec.mean_acceptance);
  if (stats) stats->rejected = static_cast<Eigen::Index>(rejected.size());
  return out;
}

}  // namespace jko

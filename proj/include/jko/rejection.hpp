#pragma once

#include "jko/sample_batch.hpp"
#include "jko/targets.hpp"

#include <functional>

namespace jko {

// Parameters of one importance-based rejection step. The rejection constant
// is stored as log c since importance ratios routinely overflow doubles.
struct RejectionStepSpec {
  double log_c = 0.0;
  double mean_acceptance = 1.0;
  double target_rejection_rate = 0.2;
  Eigen::Index calibration_size = 10000;

  double c() const;
  void validate() const;
};

// alpha = min{1, g / (c p)} evaluated in log-space.
double acceptance_prob(double log_g, double log_p, double c);
double acceptance_prob_log(double log_g, double log_p, double log_c);

// Log-density after a rejection step at a point with pre-step log-density
// log_p and acceptance alpha: log p + log(alpha + 1 - mean_acceptance).
double rejection_log_density(double log_p, double alpha, double mean_acceptance);

// Sample mean of alpha over the batch. Throws ArgumentError on an empty batch
// or a batch without log-densities.
double estimate_mean_acceptance(const SampleBatch& batch, const TargetDensity& target, double c);
double estimate_mean_acceptance_log(const Vec& log_ratio, double log_c);

struct Calibration {
  double log_c = 0.0;
  double mean_acceptance = 1.0;
  int iterations = 0;
};

// Chooses c such that the batch mean of alpha equals 1 - r, by bisection on
// log c. When all importance ratios coincide the root is returned in closed
// form.
Calibration select_c(const SampleBatch& batch, const TargetDensity& target, double r);
Calibration select_c_from_log_ratios(const Vec& log_ratio, double r);

// Produces n fresh independent draws (with log-densities) from the
// distribution the rejection step is applied to.
using Resampler = std::function<SampleBatch(Eigen::Index n)>;

struct RejectionStats {
  Eigen::Index rejected = 0;
};

// Accepts each sample with probability alpha and otherwise replaces it with a
// fresh draw from `resampler`; replacements are not re-tested. Every output
// point carries the updated log-density computed with the stored
// spec.mean_acceptance. Uniforms are drawn for all samples in index order
// before the resampler is queried. Throws CapacityError if the resampler
// returns fewer points than requested.
SampleBatch apply_rejection_step(const SampleBatch& batch, const TargetDensity& target,
                                 const RejectionStepSpec& spec, const Resampler& resampler, Rng& rng,
                                 RejectionStats* stats = nullptr);

}  // namespace jko

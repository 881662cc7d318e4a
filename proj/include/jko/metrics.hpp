#pragma once

#include "jko/sample_batch.hpp"
#include "jko/targets.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace jko {

struct Estimate {
  double value = 0.0;
  double standard_error = 0.0;
  Eigen::Index n = 0;
};

// Energy distance (MMD with kernel -|x - y|) between two point clouds given
// column-wise, V-statistic form:
//   (1/NM) sum |x_i - y_j| - (1/2N^2) sum |x_i - x_j| - (1/2M^2) sum |y_i - y_j|.
// Exactly symmetric in its arguments and exactly zero for identical inputs.
double energy_distance(const Mat& xs, const Mat& ys);

// Energy distance with a standard error from `blocks` disjoint sub-sample
// pairs.
Estimate energy_distance_estimate(const Mat& xs, const Mat& ys, int blocks = 10);

// Mean of log g(x) - log p(x) over the batch: log Z_g - KL(model, target).
Estimate log_z_estimate(const SampleBatch& batch, const TargetDensity& target);

// Fraction of samples closest (Euclidean) to each mode; ties go to the lowest
// mode index.
std::vector<double> mode_weights(const Mat& points, const GmmSpec& gmm);
// (1/K) sum_k (w_hat_k - w_k)^2.
double mode_mse(const Mat& points, const GmmSpec& gmm);

struct MetricReport {
  std::string method;
  std::string target;
  Eigen::Index n_samples = 0;
  Estimate energy_distance;
  std::optional<Estimate> log_z;  // absent for density-free samplers
  std::optional<Estimate> mode_mse;  // mixture targets only

  // Flat `key=value` lines.
  std::string to_text() const;
  std::map<std::string, double> values() const;
};

// Evaluates every applicable metric of `samples` against `reference` draws
// from the target.
MetricReport evaluate_samples(const SampleBatch& samples, const SampleBatch& reference,
                              const TargetDensity& target, const std::string& method);

}  // namespace jko

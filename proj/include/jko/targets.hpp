#pragma once

#include "jko/sample_batch.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace jko {

enum class TargetKind { Mustache, Shifted8Modes, Shifted8Peaky, Funnel, Gmm, Custom };

std::string_view target_kind_name(TargetKind kind);
// Accepts the names used in config files: mustache, shifted8modes,
// shifted8peaky, funnel, gmm, custom. Case-insensitive.
TargetKind parse_target_kind(std::string_view name);

// Isotropic Gaussian mixture sum_k w_k N(m_k, s I).
struct GmmSpec {
  std::vector<Vec> means;
  std::vector<double> weights;
  double covariance_scale = 1e-2;

  std::size_t num_modes() const { return means.size(); }
  // Throws ConfigError if weights are not a positive probability vector or
  // means have inconsistent lengths.
  void validate() const;
};

// Mustache: log N(0, [1 s; s 1]) composed with T(x1, x2) = (x1, x2 - (x1^2 - 1)^2).
struct MustacheParams {
  double correlation = 0.9;
};

// Funnel: N(x1 | 0, variance) * N(x_{2:d} | 0, exp(x1) I).
struct FunnelParams {
  double variance = 9.0;
};

// Hook for user-supplied targets. `grad` falls back to central differences and
// `sampler` is optional.
struct CustomParams {
  std::function<double(const Vec&)> log_density;
  std::function<Vec(const Vec&)> grad;
  std::function<SampleBatch(Eigen::Index, Rng&)> sampler;
  std::string label = "custom";
};

using TargetParams = std::variant<MustacheParams, FunnelParams, GmmSpec, CustomParams>;

// Unnormalized target log g. Immutable after construction; all evaluations
// are const and may be called concurrently.
class TargetDensity {
 public:
  TargetDensity(TargetKind kind, Eigen::Index dim, TargetParams params);

  TargetKind kind() const { return kind_; }
  Eigen::Index dim() const { return dim_; }
  std::string name() const;
  const TargetParams& params() const { return params_; }
  // Mixture description for GMM-type targets, nullptr otherwise.
  const GmmSpec* gmm() const { return std::get_if<GmmSpec>(&params_); }

  // log g(x). Throws ArgumentError for non-finite input or wrong length.
  double log_density(const Eigen::Ref<const Vec>& x) const;
  Vec log_densities(const Mat& points) const;
  Vec log_density_grad(const Eigen::Ref<const Vec>& x) const;

  bool can_sample() const;
  // n i.i.d. exact draws together with their log-density. Throws
  // CapabilityError if the target has no exact sampler, ArgumentError if n < 1.
  SampleBatch sample(Eigen::Index n, Rng& rng) const;

 private:
  void check_point(const Eigen::Ref<const Vec>& x) const;

  TargetKind kind_;
  Eigen::Index dim_;
  TargetParams params_;
  // Cached quantities of the Gaussian pieces.
  double log_norm_ = 0.0;
};

// Builds a fully parameterized benchmark target. `seed` fixes the GMM-d mode
// placement and is ignored by the other kinds.
TargetDensity make_target(TargetKind kind, Eigen::Index dim, std::uint64_t seed = 0);

// Two-dimensional 8-mode mixture on the unit circle centered at (-1, 0).
GmmSpec shifted_eight_modes(double covariance_scale);

TargetDensity make_custom_target(Eigen::Index dim, CustomParams params);
// N(0, I) wrapped as a custom target with exact sampler; used for smoke runs.
TargetDensity make_standard_normal_target(Eigen::Index dim);

// Central-difference gradient of f with the given step.
Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, const Vec& x,
                               double step = 1e-5);

}  // namespace jko

#pragma once

#include "jko/cnf_step.hpp"
#include "jko/rejection.hpp"
#include "jko/sample_batch.hpp"
#include "jko/targets.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace jko {

enum class StepKind { Jko, Rejection };

struct ScheduledStep {
  StepKind kind = StepKind::Jko;
  double tau = 0.0;  // JKO steps only
};

// n1 JKO steps followed by n2 blocks of one JKO step and
// `rejections_per_block` rejection steps; the JKO step sizes grow
// geometrically, tau_{k+1} = growth * tau_k, across the whole schedule.
struct Schedule {
  int n1 = 0;
  int n2 = 0;
  double tau0 = 0.01;
  double growth = 4.0;
  int rejections_per_block = 3;

  std::vector<ScheduledStep> steps() const;
  std::size_t num_steps() const;
  void validate() const;
};

Schedule build_schedule(int n1, int n2, double tau0);

using TrainedStep = std::variant<JkoStep, RejectionStepSpec>;

// Ordered list of trained steps on top of a standard normal latent. Immutable
// once trained; sampling and density queries are const.
class StackedSampler {
 public:
  StackedSampler() = default;
  explicit StackedSampler(Eigen::Index dim) : dim_(dim) {}

  Eigen::Index dim() const { return dim_; }
  std::size_t num_steps() const { return steps_.size(); }
  const std::vector<TrainedStep>& steps() const { return steps_; }

  // Appends a step; rejection steps need at least one preceding step.
  void push_back(TrainedStep step);
  // Stack made of the first k steps.
  StackedSampler prefix(std::size_t k) const;
  // Copy without rejection steps.
  StackedSampler without_rejection() const;

  void write(std::ostream& os) const;
  void save(const std::string& path) const;
  static StackedSampler read(std::istream& is);
  static StackedSampler load(const std::string& path);

 private:
  Eigen::Index dim_ = 0;
  std::vector<TrainedStep> steps_;
};

// n draws of the stack's output with propagated log-densities. Rejection
// steps draw their replacements by recursively sampling the stack prefix, so
// the pool for each step holds exactly the realized number of rejections.
SampleBatch sample_with_density(const StackedSampler& stack, const TargetDensity& target,
                                Eigen::Index n, Rng& rng);

// Log-density of the stack output at the columns of `points`, by recursive
// evaluation from the last step down to the latent. `rng` is only consumed
// when Hutchinson traces are used (d > 5).
Vec log_densities_at(const StackedSampler& stack, const TargetDensity& target, const Mat& points, Rng& rng);
double log_density_at(const StackedSampler& stack, const TargetDensity& target,
                      const Eigen::Ref<const Vec>& x, Rng& rng);

struct TrainConfig {
  Eigen::Index pool_size = 100000;
  int train_iters = 2000;
  int batch_size = 2048;
  int n_integration_steps = 20;
  Eigen::Index hidden = 54;
  double learning_rate = 1e-3;
  double kinetic_weight = 0.5;
  double rejection_rate = 0.2;
  Eigen::Index calibration_size = 10000;
  // Unset: exact for d <= 5, Hutchinson(5) otherwise.
  std::optional<TraceMode> trace_mode;

  void validate() const;
};

// Running quality of the training pool after each step (index 0 is the latent).
struct StepDiagnostics {
  std::size_t step = 0;
  StepKind kind = StepKind::Jko;
  double log_z = 0.0;
  double log_z_se = 0.0;
  double mean_acceptance = 1.0;  // rejection steps
  Eigen::Index rejected = 0;     // rejection steps
};

struct TrainResult {
  StackedSampler stack;
  std::vector<StepDiagnostics> diagnostics;
};

// Greedy training: every JKO step is fit on the current pool, every rejection
// step calibrates c on it, and the pool is then pushed through the new step.
// Errors are rethrown as StepError carrying the step index.
TrainResult train_stack(const Schedule& schedule, const TargetDensity& target, const TrainConfig& cfg, Rng& rng);

}  // namespace jko

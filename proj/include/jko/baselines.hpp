#pragma once

#include "jko/sample_batch.hpp"
#include "jko/targets.hpp"

#include <utility>

namespace jko {

enum class McmcKind { Mala, Hmc };

struct McmcConfig {
  McmcKind kind = McmcKind::Mala;
  double step_size = 1e-3;
  int n_steps = 50000;
  int leapfrog_steps = 5;
  // Iterations [0, warmup_first) run at 0.01x the step size and
  // [warmup_first, warmup_first + warmup_second) at 0.1x.
  int warmup_first = 1000;
  int warmup_second = 1000;

  void validate() const;
  double step_at(int iteration) const;
};

// Defaults used for the benchmark rows: MALA with step 0.001 everywhere; HMC
// with 5 leapfrog steps and step 0.01 on Mustache, 0.1 otherwise.
McmcConfig default_mcmc_config(McmcKind kind, TargetKind target);

struct McmcResult {
  SampleBatch samples;  // final state of every chain, no density column
  double acceptance_rate = 0.0;
};

// Independent chains started from N(0, I) draws; each chain has its own RNG
// stream derived from rng, so chains can run in any order. The final state of
// each chain is returned.
McmcResult mala_sample(const TargetDensity& target, Eigen::Index n_chains, const McmcConfig& cfg, Rng& rng);
McmcResult hmc_sample(const TargetDensity& target, Eigen::Index n_chains, const McmcConfig& cfg, Rng& rng);

// Leapfrog integration of Hamiltonian dynamics for H = -log g(x) + |p|^2 / 2.
std::pair<Vec, Vec> leapfrog(const TargetDensity& target, Vec x, Vec p, double eps, int steps);

// Log acceptance probability of a MALA move x -> y with step h.
double mala_log_acceptance(const TargetDensity& target, const Vec& x, const Vec& y, double h);

}  // namespace jko

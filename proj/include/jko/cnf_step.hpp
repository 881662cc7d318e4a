#pragma once

#include "jko/errors.hpp"
#include "jko/sample_batch.hpp"
#include "jko/targets.hpp"
#include "jko/velocity_net.hpp"

#include <string>
#include <vector>

namespace jko {

enum class TraceKind { Exact, Hutchinson };

struct TraceMode {
  TraceKind kind = TraceKind::Exact;
  int probes = 5;

  static TraceMode exact() { return {TraceKind::Exact, 0}; }
  static TraceMode hutchinson(int k) { return {TraceKind::Hutchinson, k}; }
  // Exact for d <= 5, Hutchinson with 5 Rademacher probes otherwise.
  static TraceMode for_dim(Eigen::Index dim);

  TraceProbes draw(Eigen::Index dim, Eigen::Index batch, Rng& rng) const;
  std::string to_string() const;
  static TraceMode parse(const std::string& s);
};

struct JkoStepConfig {
  double tau = 0.01;
  int n_integration_steps = 20;
  TraceMode trace_mode;
  int train_iters = 2000;
  int batch_size = 2048;
  Eigen::Index hidden = 54;
  double learning_rate = 1e-3;
  // Weight of the integrated squared speed in the loss; 0.5 is the dynamic
  // (Benamou-Brenier) form of W2^2 / (2 tau).
  double kinetic_weight = 0.5;

  void validate() const;
};

// A trained neural JKO step: the velocity field on [0, tau] and the settings
// needed to integrate it. The network sees normalized time t / tau and its
// output is divided by tau, so a unit-scale network moves points by O(1)
// regardless of the step size.
struct JkoStep {
  VelocityNet net;
  double tau = 0.01;
  int n_integration_steps = 20;
  TraceMode trace_mode;

  // Velocity and divergence at (z, t) for a batch.
  void field(const Mat& z, double t, const TraceProbes& probes, Mat& v, Vec& trace,
             NetTape* tape = nullptr) const;
};

// Batched augmented state (z, l, w) after an integration.
struct AugmentedState {
  Mat z;        // d x B
  Vec logdet;   // B, integral of trace(dv/dx) along the path
  Vec kinetic;  // B, integral of |v|^2 along the path
};

// Fixed-step classical RK4 for dz/dt = v(z, t), dl/dt = tr(dv/dz), dw/dt = |v|^2
// from t0 to t1 (t1 < t0 integrates backward). `field` has the signature of
// JkoStep::field without the tape argument. Throws IntegrationError with the
// step index if the state becomes non-finite.
template <class Field>
AugmentedState integrate_rk4(const Field& field, double t0, double t1, int steps, const Mat& x,
                             const TraceProbes& probes) {
  if (steps < 1) throw ConfigError("integration needs at least one step");
  const Eigen::Index B = x.cols();
  AugmentedState s{x, Vec::Zero(B), Vec::Zero(B)};
  const double h = (t1 - t0) / steps;
  Mat v1, v2, v3, v4;
  Vec r1, r2, r3, r4;
  for (int n = 0; n < steps; ++n) {
    const double t = t0 + n * h;
    field(s.z, t, probes, v1, r1);
    field(s.z + 0.5 * h * v1, t + 0.5 * h, probes, v2, r2);
    field(s.z + 0.5 * h * v2, t + 0.5 * h, probes, v3, r3);
    field(s.z + h * v3, t + h, probes, v4, r4);
    s.z += (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
    s.logdet += (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    // |h| keeps the kinetic integral non-negative when running backward.
    const double ah = std::abs(h) / 6.0;
    s.kinetic += ah * (v1.colwise().squaredNorm() + 2.0 * v2.colwise().squaredNorm() +
                       2.0 * v3.colwise().squaredNorm() + v4.colwise().squaredNorm())
                          .transpose();
    if (!s.z.allFinite() || !s.logdet.allFinite())
      throw IntegrationError("non-finite state during RK4 integration", static_cast<std::size_t>(n));
  }
  return s;
}

// Forward solve from t = 0 to t = tau starting at x.
AugmentedState integrate_forward(const JkoStep& step, const Mat& x, const TraceProbes& probes);

struct BackwardResult {
  Mat x;       // z(., 0) given z(., tau) = y
  Vec logdet;  // l(y, 0) with l(y, tau) = 0; equals minus the forward logdet
};

// Backward solve from t = tau to t = 0 starting at y.
BackwardResult integrate_backward(const JkoStep& step, const Mat& y, const TraceProbes& probes);

struct LossAndGrad {
  double loss = 0.0;
  Vec grad;
};

// Monte Carlo JKO objective over the columns of x:
//   mean( -log g(z(x, tau)) - l(x, tau) + kinetic_weight * w(x, tau) ).
double jko_loss(const JkoStep& step, const Mat& x, const TargetDensity& target,
                const TraceProbes& probes, double kinetic_weight);

// Loss and its exact gradient with respect to the network parameters,
// obtained by differentiating the unrolled RK4 recursion.
LossAndGrad jko_loss_and_grad(const JkoStep& step, const Mat& x, const TargetDensity& target,
                              const TraceProbes& probes, double kinetic_weight);

// Trains one JKO step with Adam on mini-batches drawn from `pool` (points of
// the current distribution). `init` is the starting network; when omitted a
// fresh initialization from rng is used.
VelocityNet train_jko_step(const JkoStepConfig& cfg, const Mat& pool, const TargetDensity& target,
                           Rng& rng, const VelocityNet* init = nullptr);

// Trace mode used when propagating densities at inference time.
TraceMode inference_trace_mode(Eigen::Index dim);

// Pushes the batch through the step and updates the log-densities:
// log p_new(z(x)) = log p(x) - l(x, tau).
SampleBatch propagate_samples(const JkoStep& step, const SampleBatch& batch, Rng& rng);

// Columns processed per block when integrating large batches.
inline constexpr Eigen::Index kIntegrationBlock = 2048;

}  // namespace jko

#include "jko/cnf_step.hpp"

#include <algorithm>
#include <cmath>

namespace jko {

TraceMode TraceMode::for_dim(Eigen::Index dim) {
  return dim <= 5 ? exact() : hutchinson(5);
}

TraceProbes TraceMode::draw(Eigen::Index dim, Eigen::Index batch, Rng& rng) const {
  if (kind == TraceKind::Exact) return {};
  return TraceProbes::draw(dim, batch, probes, rng);
}

std::string TraceMode::to_string() const {
  if (kind == TraceKind::Exact) return "exact";
  return "hutchinson:" + std::to_string(probes);
}

TraceMode TraceMode::parse(const std::string& s) {
  if (s == "exact") return exact();
  const std::string prefix = "hutchinson";
  if (s.rfind(prefix, 0) == 0) {
    int k = 5;
    if (s.size() > prefix.size()) {
      if (s[prefix.size()] != ':') throw ConfigError("bad trace mode '" + s + "'");
      k = std::stoi(s.substr(prefix.size() + 1));
    }
    if (k < 1) throw ConfigError("Hutchinson estimator needs k >= 1");
    return hutchinson(k);
  }
  throw ConfigError("unknown trace mode '" + s + "'");
}

void JkoStepConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("JKO step size tau must be positive");
  if (n_integration_steps < 1) throw ConfigError("need at least one integration step");
  if (trace_mode.kind == TraceKind::Hutchinson && trace_mode.probes < 1)
    throw ConfigError("Hutchinson estimator needs k >= 1");
  if (train_iters < 0) throw ConfigError("train_iters must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (hidden < 1) throw ConfigError("hidden width must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(kinetic_weight >= 0.0)) throw ConfigError("kinetic weight must be non-negative");
}

void JkoStep::field(const Mat& z, double t, const TraceProbes& probes, Mat& v, Vec& trace,
                    NetTape* tape) const {
  net.evaluate(z, t / tau, probes, v, trace, tape);
  v /= tau;
  trace /= tau;
}

namespace {

template <class Fn>
void for_blocks(Eigen::Index n, Fn&& fn) {
  for (Eigen::Index start = 0; start < n; start += kIntegrationBlock)
    fn(start, std::min(kIntegrationBlock, n - start));
}

TraceProbes probe_block(const TraceProbes& probes, Eigen::Index start, Eigen::Index len) {
  TraceProbes out;
  for (const auto& p : probes.rademacher) out.rademacher.push_back(p.middleCols(start, len));
  return out;
}

auto field_fn(const JkoStep& step) {
  return [&step](const Mat& z, double t, const TraceProbes& p, Mat& v, Vec& tr) {
    step.field(z, t, p, v, tr);
  };
}

}  // namespace

AugmentedState integrate_forward(const JkoStep& step, const Mat& x, const TraceProbes& probes) {
  return integrate_rk4(field_fn(step), 0.0, step.tau, step.n_integration_steps, x, probes);
}

BackwardResult integrate_backward(const JkoStep& step, const Mat& y, const TraceProbes& probes) {
  auto s = integrate_rk4(field_fn(step), step.tau, 0.0, step.n_integration_steps, y, probes);
  return {std::move(s.z), std::move(s.logdet)};
}

namespace {

Mat target_grad(const TargetDensity& target, const Mat& z) {
  Mat g(z.rows(), z.cols());
  for (Eigen::Index j = 0; j < z.cols(); ++j) g.col(j) = target.log_density_grad(z.col(j));
  return g;
}

struct ForwardPass {
  std::vector<Mat> z;  // state at the start of every RK4 step, plus the final state
  Vec logdet;
  Vec kinetic;
};

ForwardPass run_forward(const JkoStep& step, const Mat& x, const TraceProbes& probes) {
  const int N = step.n_integration_steps;
  const double h = step.tau / N;
  ForwardPass fp;
  fp.z.reserve(static_cast<std::size_t>(N) + 1);
  fp.z.push_back(x);
  fp.logdet = Vec::Zero(x.cols());
  fp.kinetic = Vec::Zero(x.cols());
  Mat v1, v2, v3, v4;
  Vec r1, r2, r3, r4;
  for (int n = 0; n < N; ++n) {
    const Mat& z = fp.z.back();
    const double t = n * h;
    step.field(z, t, probes, v1, r1);
    step.field(z + 0.5 * h * v1, t + 0.5 * h, probes, v2, r2);
    step.field(z + 0.5 * h * v2, t + 0.5 * h, probes, v3, r3);
    step.field(z + h * v3, t + h, probes, v4, r4);
    Mat zn = z + (h / 6.0) * (v1 + 2.0 * v2 + 2.0 * v3 + v4);
    fp.logdet += (h / 6.0) * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    fp.kinetic += (h / 6.0) * (v1.colwise().squaredNorm() + 2.0 * v2.colwise().squaredNorm() +
                               2.0 * v3.colwise().squaredNorm() + v4.colwise().squaredNorm())
                                  .transpose();
    if (!zn.allFinite() || !fp.logdet.allFinite())
      throw IntegrationError("non-finite state during RK4 integration", static_cast<std::size_t>(n));
    fp.z.push_back(std::move(zn));
  }
  return fp;
}

}  // namespace

double jko_loss(const JkoStep& step, const Mat& x, const TargetDensity& target,
                const TraceProbes& probes, double kinetic_weight) {
  const auto s = integrate_forward(step, x, probes);
  const Vec logg = target.log_densities(s.z);
  const double loss = (-logg - s.logdet + kinetic_weight * s.kinetic).mean();
  if (!std::isfinite(loss)) throw TrainingError("non-finite JKO loss", 0);
  return loss;
}

LossAndGrad jko_loss_and_grad(const JkoStep& step, const Mat& x, const TargetDensity& target,
                              const TraceProbes& probes, double kinetic_weight) {
  const Eigen::Index B = x.cols();
  const int N = step.n_integration_steps;
  const double h = step.tau / N;
  const double tau = step.tau;
  const auto fp = run_forward(step, x, probes);

  const Mat& zT = fp.z.back();
  const Vec logg = target.log_densities(zT);
  LossAndGrad out;
  out.loss = (-logg - fp.logdet + kinetic_weight * fp.kinetic).mean();
  if (!std::isfinite(out.loss)) throw TrainingError("non-finite JKO loss", 0);
  out.grad = Vec::Zero(step.net.num_params());

  const double invB = 1.0 / static_cast<double>(B);
  Mat lambda = -invB * target_grad(target, zT);
  // Cotangents of the accumulated logdet and kinetic terms are constant in time.
  const double l_bar = -invB;
  const double w_bar = kinetic_weight * invB;

  NetTape tp[4];
  Mat v[4];
  Vec r[4];
  const double wts[4] = {1.0, 2.0, 2.0, 1.0};
  Vec tr_bar[4];

  // Reverse pass through the stage evaluations of one RK4 step; the field is
  // v = net(z, t / tau) / tau, so cotangents are scaled by 1 / tau on the way in.
  auto stage_vjp = [&](int i, const Mat& v_bar) {
    const double c = wts[i] * h / 6.0;
    const Mat total = v_bar + (2.0 * c * w_bar) * v[i];
    tr_bar[i] = Vec::Constant(B, c * l_bar / tau);
    return step.net.backward(tp[i], total / tau, tr_bar[i], out.grad);
  };

  for (int n = N - 1; n >= 0; --n) {
    const Mat& z = fp.z[static_cast<std::size_t>(n)];
    const double t = n * h;
    step.field(z, t, probes, v[0], r[0], &tp[0]);
    step.field(z + 0.5 * h * v[0], t + 0.5 * h, probes, v[1], r[1], &tp[1]);
    step.field(z + 0.5 * h * v[1], t + 0.5 * h, probes, v[2], r[2], &tp[2]);
    step.field(z + h * v[2], t + h, probes, v[3], r[3], &tp[3]);

    const Mat g4 = stage_vjp(3, (h / 6.0) * lambda);
    const Mat g3 = stage_vjp(2, (2.0 * h / 6.0) * lambda + h * g4);
    const Mat g2 = stage_vjp(1, (2.0 * h / 6.0) * lambda + 0.5 * h * g3);
    const Mat g1 = stage_vjp(0, (h / 6.0) * lambda + 0.5 * h * g2);
    lambda += g1 + g2 + g3 + g4;
  }
  return out;
}

VelocityNet train_jko_step(const JkoStepConfig& cfg, const Mat& pool, const TargetDensity& target,
                           Rng& rng, const VelocityNet* init) {
  cfg.validate();
  if (pool.cols() == 0) throw ArgumentError("training pool is empty");
  if (pool.rows() != target.dim()) throw ArgumentError("pool dimension does not match target");
  JkoStep step;
  step.net = init ? *init : init_params(target.dim(), cfg.hidden, rng);
  step.tau = cfg.tau;
  step.n_integration_steps = cfg.n_integration_steps;
  step.trace_mode = cfg.trace_mode;

  auto adam = AdamState::for_params(step.net.num_params(), cfg.learning_rate);
  std::uniform_int_distribution<Eigen::Index> pick(0, pool.cols() - 1);
  Mat batch(pool.rows(), cfg.batch_size);
  for (int it = 0; it < cfg.train_iters; ++it) {
    for (Eigen::Index j = 0; j < batch.cols(); ++j) batch.col(j) = pool.col(pick(rng));
    const auto probes = cfg.trace_mode.draw(batch.rows(), batch.cols(), rng);
    LossAndGrad lg;
    try {
      lg = jko_loss_and_grad(step, batch, target, probes, cfg.kinetic_weight);
    } catch (const IntegrationError& e) {
      throw TrainingError(std::string("integration failed: ") + e.what(), static_cast<std::size_t>(it));
    } catch (const TrainingError& e) {
      throw TrainingError(e.what(), static_cast<std::size_t>(it));
    }
    adam_step(step.net.params(), lg.grad, adam);
  }
  return step.net;
}

TraceMode inference_trace_mode(Eigen::Index dim) { return TraceMode::for_dim(dim); }

SampleBatch propagate_samples(const JkoStep& step, const SampleBatch& batch, Rng& rng) {
  if (!batch.has_density() && !batch.empty())
    throw ArgumentError("propagate_samples needs log-densities");
  const auto mode = inference_trace_mode(batch.dim());
  const auto probes = mode.draw(batch.dim(), batch.size(), rng);
  SampleBatch out;
  out.points.resize(batch.dim(), batch.size());
  out.log_density.resize(batch.size());
  for_blocks(batch.size(), [&](Eigen::Index start, Eigen::Index len) {
    const auto s = integrate_forward(step, batch.points.middleCols(start, len), probe_block(probes, start, len));
    out.points.middleCols(start, len) = s.z;
    out.log_density.segment(start, len) = batch.log_density.segment(start, len) - s.logdet;
  });
  return out;
}

}  // namespace jko

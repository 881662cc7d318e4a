#include "jko/baselines.hpp"

#include "jko/errors.hpp"

#include <cmath>
#include <limits>

namespace jko {

void McmcConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("MCMC step size must be positive");
  if (n_steps < 1) throw ConfigError("MCMC needs at least one step");
  if (kind == McmcKind::Hmc && leapfrog_steps < 1) throw ConfigError("HMC needs at least one leapfrog step");
  if (warmup_first < 0 || warmup_second < 0) throw ConfigError("warmup lengths must be non-negative");
}

double McmcConfig::step_at(int iteration) const {
  if (iteration < warmup_first) return 0.01 * step_size;
  if (iteration < warmup_first + warmup_second) return 0.1 * step_size;
  return step_size;
}

McmcConfig default_mcmc_config(McmcKind kind, TargetKind target) {
  McmcConfig cfg;
  cfg.kind = kind;
  if (kind == McmcKind::Mala) {
    cfg.step_size = 1e-3;
  } else {
    cfg.step_size = target == TargetKind::Mustache ? 0.01 : 0.1;
    cfg.leapfrog_steps = 5;
  }
  return cfg;
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log_density(const TargetDensity& target, const Vec& x) {
  if (!x.allFinite()) return kNegInf;
  const double v = target.log_density(x);
  return std::isfinite(v) ? v : kNegInf;
}

Vec checked_grad(const TargetDensity& target, const Vec& x, int iteration) {
  Vec g = target.log_density_grad(x);
  if (!g.allFinite()) throw SamplerError("non-finite gradient of the target", static_cast<std::size_t>(iteration));
  return g;
}

template <class Step>
McmcResult run_chains(const TargetDensity& target, Eigen::Index n_chains, const McmcConfig& cfg, Rng& rng,
                      Step&& step) {
  cfg.validate();
  if (n_chains < 1) throw ArgumentError("need at least one chain");
  const auto base = rng();
  const Eigen::Index d = target.dim();
  McmcResult res;
  res.samples.points.resize(d, n_chains);
  long accepted = 0;
  for (Eigen::Index c = 0; c < n_chains; ++c) {
    Rng chain_rng(derive_seed(base, static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> normal;
    Vec x(d);
    for (Eigen::Index i = 0; i < d; ++i) x[i] = normal(chain_rng);
    double logp = safe_log_density(target, x);
    for (int it = 0; it < cfg.n_steps; ++it)
      if (step(x, logp, cfg.step_at(it), it, chain_rng)) ++accepted;
    res.samples.points.col(c) = x;
  }
  res.acceptance_rate = static_cast<double>(accepted) / (static_cast<double>(n_chains) * cfg.n_steps);
  return res;
}

}  // namespace

double mala_log_acceptance(const TargetDensity& target, const Vec& x, const Vec& y, double h) {
  const double lx = safe_log_density(target, x);
  const double ly = safe_log_density(target, y);
  if (ly == kNegInf) return kNegInf;
  const Vec gx = target.log_density_grad(x);
  const Vec gy = target.log_density_grad(y);
  if (!gy.allFinite()) return kNegInf;
  const double fwd = -(y - x - h * gx).squaredNorm() / (4.0 * h);
  const double bwd = -(x - y - h * gy).squaredNorm() / (4.0 * h);
  return std::min(0.0, ly - lx + bwd - fwd);
}

McmcResult mala_sample(const TargetDensity& target, Eigen::Index n_chains, const McmcConfig& cfg, Rng& rng) {
  const Eigen::Index d = target.dim();
  return run_chains(target, n_chains, cfg, rng, [&](Vec& x, double& logp, double h, int it, Rng& r) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const Vec gx = checked_grad(target, x, it);
    Vec xi(d);
    for (Eigen::Index i = 0; i < d; ++i) xi[i] = normal(r);
    const Vec y = x + h * gx + std::sqrt(2.0 * h) * xi;
    const double ly = safe_log_density(target, y);
    double log_a = kNegInf;
    if (ly != kNegInf) {
      const Vec gy = target.log_density_grad(y);
      if (gy.allFinite()) {
        const double fwd = -(y - x - h * gx).squaredNorm() / (4.0 * h);
        const double bwd = -(x - y - h * gy).squaredNorm() / (4.0 * h);
        log_a = std::min(0.0, ly - logp + bwd - fwd);
      }
    }
    if (std::log(unif(r)) < log_a) {
      x = y;
      logp = ly;
      return true;
    }
    return false;
  });
}

std::pair<Vec, Vec> leapfrog(const TargetDensity& target, Vec x, Vec p, double eps, int steps) {
  if (steps < 1) throw ConfigError("leapfrog needs at least one step");
  p += 0.5 * eps * target.log_density_grad(x);
  for (int s = 0; s < steps; ++s) {
    x += eps * p;
    if (!x.allFinite()) return {x, p};
    const Vec g = target.log_density_grad(x);
    p += (s + 1 < steps ? eps : 0.5 * eps) * g;
  }
  return {x, p};
}

McmcResult hmc_sample(const TargetDensity& target, Eigen::Index n_chains, const McmcConfig& cfg, Rng& rng) {
  if (cfg.leapfrog_steps < 1) throw ConfigError("HMC needs at least one leapfrog step");
  const Eigen::Index d = target.dim();
  return run_chains(target, n_chains, cfg, rng, [&](Vec& x, double& logp, double h, int it, Rng& r) {
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    checked_grad(target, x, it);
    Vec p(d);
    for (Eigen::Index i = 0; i < d; ++i) p[i] = normal(r);
    auto [y, q] = leapfrog(target, x, p, h, cfg.leapfrog_steps);
    const double ly = (y.allFinite() && q.allFinite()) ? safe_log_density(target, y) : kNegInf;
    double log_a = kNegInf;
    if (ly != kNegInf) log_a = std::min(0.0, (ly - 0.5 * q.squaredNorm()) - (logp - 0.5 * p.squaredNorm()));
    if (std::log(unif(r)) < log_a) {
      x = std::move(y);
      logp = ly;
      return true;
    }
    return false;
  });
}

}  // namespace jko

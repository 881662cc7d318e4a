#pragma once

// Helpers shared by the unit tests and the acceptance run.

#include "jko/cnf_step.hpp"
#include "jko/pipeline.hpp"
#include "jko/rejection.hpp"
#include "jko/targets.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace jko::testing {

// Discrete law on the points {0, ..., K-1} of the real line, seen by the
// library as a one-dimensional target with log g = log q at the atoms.
inline TargetDensity atom_target(const std::vector<double>& q) {
  CustomParams p;
  p.log_density = [q](const Vec& x) { return std::log(q[static_cast<std::size_t>(std::lround(x[0]))]); };
  return make_custom_target(1, p);
}

inline SampleBatch draw_atoms(const std::vector<double>& p, Eigen::Index n, Rng& rng) {
  std::discrete_distribution<int> pick(p.begin(), p.end());
  SampleBatch b(Mat(1, n), Vec(n));
  for (Eigen::Index j = 0; j < n; ++j) {
    const int k = pick(rng);
    b.points(0, j) = k;
    b.log_density[j] = std::log(p[static_cast<std::size_t>(k)]);
  }
  return b;
}

// p~ = p (alpha + 1 - E_p[alpha]) with the exact expectation.
inline std::vector<double> analytic_update(const std::vector<double>& p, const std::vector<double>& q, double c) {
  double mean = 0.0;
  std::vector<double> alpha(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    alpha[k] = acceptance_prob(std::log(q[k]), std::log(p[k]), c);
    mean += p[k] * alpha[k];
  }
  std::vector<double> out(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) out[k] = std::exp(rejection_log_density(std::log(p[k]), alpha[k], mean));
  return out;
}

inline double kl(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * std::log(a[k] / b[k]);
  return s;
}

inline std::vector<double> random_simplex(Rng& rng, std::size_t k) {
  std::exponential_distribution<double> e;
  std::vector<double> v(k);
  for (auto& x : v) x = e(rng);
  const double s = std::accumulate(v.begin(), v.end(), 0.0);
  for (auto& x : v) x /= s;
  return v;
}

// Linear field v = A z with exact divergence trace(A).
struct LinearField {
  Mat A;
  void operator()(const Mat& z, double, const TraceProbes&, Mat& v, Vec& tr) const {
    v = A * z;
    tr = Vec::Constant(z.cols(), A.trace());
  }
};

inline Mat random_contraction(Rng& rng, Eigen::Index d) {
  std::normal_distribution<double> normal;
  Mat A(d, d);
  for (auto& a : A.reshaped()) a = normal(rng);
  return A / A.operatorNorm();
}

inline JkoStep random_step(Eigen::Index d, Eigen::Index h, double tau, int steps, std::uint64_t seed,
                           double scale = 0.5) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  JkoStep s;
  s.net = VelocityNet(d, h);
  for (auto& p : s.net.params()) p = scale * normal(rng);
  s.tau = tau;
  s.n_integration_steps = steps;
  return s;
}

// Half a widened copy of the target mixture, half a broad Gaussian around its
// center: an exactly normalized proposal covering both modes and tails.
inline TargetDensity defensive_proposal(const GmmSpec& g) {
  GmmSpec wide;
  wide.covariance_scale = 4 * g.covariance_scale;
  Vec center = Vec::Zero(g.means.front().size());
  for (std::size_t k = 0; k < g.num_modes(); ++k) {
    wide.means.push_back(g.means[k]);
    center += g.means[k] / static_cast<double>(g.num_modes());
  }
  const double broad = 1.5;
  CustomParams p;
  p.label = "defensive";
  const auto dim = center.size();
  const TargetDensity mix(TargetKind::Gmm, dim, [&] {
    wide.weights.assign(g.num_modes(), 1.0 / static_cast<double>(g.num_modes()));
    return wide;
  }());
  p.log_density = [mix, center, broad](const Vec& x) {
    const double a = mix.log_density(x);
    const double b = standard_normal_log_density((x - center) / broad) - static_cast<double>(x.size()) * std::log(broad);
    const double m = std::max(a, b);
    return m + std::log(0.5 * std::exp(a - m) + 0.5 * std::exp(b - m));
  };
  p.sampler = [mix, center, broad, dim](Eigen::Index n, Rng& rng) {
    SampleBatch out(Mat(dim, n));
    std::bernoulli_distribution coin(0.5);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (coin(rng))
        out.points.col(j) = mix.sample(1, rng).points.col(0);
      else
        out.points.col(j) = center + broad * sample_standard_normal(dim, 1, rng).points.col(0);
    }
    return out;
  };
  const auto t = make_custom_target(dim, p);
  auto sampler = p.sampler;
  CustomParams q = p;
  q.sampler = [t, sampler](Eigen::Index n, Rng& rng) {
    auto b = sampler(n, rng);
    b.log_density = t.log_densities(b.points);
    return b;
  };
  return make_custom_target(dim, q);
}

}  // namespace jko::testing

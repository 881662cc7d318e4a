#include <doctest.h>

#include "jko/cnf_step.hpp"
#include "jko/errors.hpp"
#include "support.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>

using namespace jko;
using namespace jko::testing;

namespace {

// Composite Simpson rule for int_0^T |A e^{tA} x|^2 dt.
double kinetic_oracle(const Mat& A, const Vec& x, double T) {
  const int n = 2000;
  const double h = T / n;
  double s = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const Mat E = (A * (i * h)).exp();
    s += w * (A * E * x).squaredNorm();
  }
  return s * h / 3.0;
}

double gaussian_logpdf(const Vec& y, const Mat& cov) {
  const Eigen::LLT<Mat> llt(cov);
  const Vec w = llt.matrixL().solve(y);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return -0.5 * w.squaredNorm() - 0.5 * logdet - 0.5 * y.size() * std::log(2 * std::numbers::pi);
}

TargetDensity shifted_normal(const Vec& m) {
  CustomParams p;
  p.log_density = [m](const Vec& x) { return standard_normal_log_density(x - m); };
  p.grad = [m](const Vec& x) -> Vec { return -(x - m); };
  return make_custom_target(m.size(), p);
}

}  // namespace

TEST_CASE("trace modes") {
  CHECK(TraceMode::for_dim(5).kind == TraceKind::Exact);
  CHECK(TraceMode::for_dim(6).kind == TraceKind::Hutchinson);
  CHECK(TraceMode::for_dim(6).probes == 5);
  CHECK(TraceMode::parse("hutchinson:3").probes == 3);
  CHECK(TraceMode::parse(TraceMode::exact().to_string()).kind == TraceKind::Exact);
  CHECK_THROWS_AS(TraceMode::parse("hutchinson:0"), ConfigError);
  CHECK_THROWS_AS(TraceMode::parse("bogus"), ConfigError);
  JkoStepConfig cfg;
  cfg.tau = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero and constant fields") {
  Rng rng(1);
  const Mat x = sample_standard_normal(3, 7, rng).points;
  JkoStep step;
  step.net = init_params(3, 8, rng);
  step.tau = 0.7;
  step.n_integration_steps = 5;

  auto s = integrate_forward(step, x, {});
  CHECK(s.z == x);
  CHECK(s.logdet.norm() == 0.0);
  CHECK(s.kinetic.norm() == 0.0);
  const auto b = integrate_backward(step, x, {});
  CHECK(b.x == x);
  CHECK(b.logdet.norm() == 0.0);

  // The field is net / tau, so an output bias of c * tau gives velocity c.
  Vec c(3);
  c << 0.5, -1.0, 2.0;
  step.net.b3() = c * step.tau;
  s = integrate_forward(step, x, {});
  CHECK((s.z - (x.colwise() + step.tau * c)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK(s.logdet.cwiseAbs().maxCoeff() < 1e-14);
  CHECK((s.kinetic.array() - step.tau * c.squaredNorm()).abs().maxCoeff() < 1e-12);

  SampleBatch in(x, Vec::Constant(7, -1.25));
  const auto out = propagate_samples(step, in, rng);
  CHECK((out.points - s.z).norm() == 0.0);
  CHECK((out.log_density.array() + 1.25).abs().maxCoeff() < 1e-14);
}

TEST_CASE("linear field against the matrix exponential") {
  Rng rng(2);
  for (int rep = 0; rep < 5; ++rep) {
    const Mat A = random_contraction(rng, 3);
    const double tau = 0.5;
    const Mat x = sample_standard_normal(3, 4, rng).points;
    const LinearField f{A};
    const auto s = integrate_rk4(f, 0.0, tau, 100, x, {});
    const Mat E = (tau * A).exp();
    const Mat expect = E * x;
    CHECK((s.z - expect).norm() <= 1e-6 * expect.norm());
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(std::abs(s.logdet[j] - tau * A.trace()) <= 1e-6 * std::abs(tau * A.trace()));
      const double w = kinetic_oracle(A, x.col(j), tau);
      CHECK(std::abs(s.kinetic[j] - w) <= 1e-6 * w);
    }
    const auto back = integrate_rk4(f, tau, 0.0, 100, expect, {});
    const Mat einv = (-tau * A).exp() * expect;
    CHECK((back.z - einv).norm() <= 1e-6 * einv.norm());
    CHECK((back.z - x).norm() <= 1e-6 * x.norm());
  }
}

TEST_CASE("linear pushforward of a Gaussian") {
  Rng rng(3);
  const Mat A = random_contraction(rng, 2);
  const double tau = 0.8;
  const auto in = sample_standard_normal(2, 50, rng);
  const auto s = integrate_rk4(LinearField{A}, 0.0, tau, 50, in.points, {});
  const Mat E = (tau * A).exp();
  const Mat cov = E * E.transpose();
  for (Eigen::Index j = 0; j < 50; ++j) {
    const double propagated = in.log_density[j] - s.logdet[j];
    CHECK(std::abs(propagated - gaussian_logpdf(s.z.col(j), cov)) <= 1e-4);
  }
}

TEST_CASE("kinetic energy is non-decreasing in time") {
  const auto step = random_step(2, 6, 0.9, 30, 4);
  Rng rng(5);
  const Mat x = sample_standard_normal(2, 10, rng).points;
  auto field = [&](const Mat& z, double t, const TraceProbes& p, Mat& v, Vec& tr) { step.field(z, t, p, v, tr); };
  const double h = step.tau / step.n_integration_steps;
  Vec prev = Vec::Zero(10);
  for (int k = 1; k <= step.n_integration_steps; ++k) {
    const auto s = integrate_rk4(field, 0.0, k * h, k, x, {});
    CHECK((s.kinetic - prev).minCoeff() >= 0.0);
    prev = s.kinetic;
  }
}

TEST_CASE("forward and backward solves are inverse") {
  const auto step = random_step(2, 8, 0.6, 100, 6);
  Rng rng(7);
  const Mat x = sample_standard_normal(2, 20, rng).points;
  const auto f = integrate_forward(step, x, {});
  const auto b = integrate_backward(step, f.z, {});
  CHECK((b.x - x).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK((b.logdet + f.logdet).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("Hutchinson log-determinant is unbiased") {
  const auto step = random_step(4, 8, 0.5, 10, 8);
  Rng rng(9);
  const Mat x = sample_standard_normal(4, 1, rng).points;
  const double exact = integrate_forward(step, x, {}).logdet[0];
  const Eigen::Index reps = 10000;
  const auto probes = TraceProbes::draw(4, reps, 1, rng);
  const Vec l = integrate_forward(step, x.replicate(1, reps), probes).logdet;
  const double mean = l.mean();
  const double se = std::sqrt((l.array() - mean).square().sum() / (reps - 1) / reps);
  CHECK(std::abs(mean - exact) <= 3 * se);
}

TEST_CASE("integration failures carry the step index") {
  auto field = [](const Mat& z, double t, const TraceProbes&, Mat& v, Vec& tr) {
    v = t > 0.25 ? Mat::Constant(z.rows(), z.cols(), std::nan("")) : Mat(z);
    tr = Vec::Zero(z.cols());
  };
  try {
    integrate_rk4(field, 0.0, 1.0, 10, Mat::Ones(2, 3), {});
    FAIL("expected IntegrationError");
  } catch (const IntegrationError& e) {
    CHECK(e.index() == 2);
  }
}

TEST_CASE("loss of the identity map") {
  const auto target = make_target(TargetKind::Mustache, 2);
  Rng rng(10);
  JkoStep step;
  step.net = init_params(2, 6, rng);
  step.tau = 0.3;
  step.n_integration_steps = 4;
  const Mat x = sample_standard_normal(2, 32, rng).points;
  CHECK(jko_loss(step, x, target, {}, 0.5) == doctest::Approx(-target.log_densities(x).mean()).epsilon(1e-14));
}

TEST_CASE("loss gradient equals the finite-difference gradient of the discrete loss") {
  const auto target = make_target(TargetKind::Shifted8Modes, 2);
  for (bool exact : {true, false}) {
    CAPTURE(exact);
    const auto step = random_step(2, 4, 0.5, 8, 11);
    Rng rng(12);
    const Mat x = sample_standard_normal(2, 4, rng).points;
    const auto probes = exact ? TraceProbes{} : TraceProbes::draw(2, 4, 3, rng);
    const auto lg = jko_loss_and_grad(step, x, target, probes, 0.5);
    CHECK(lg.loss == doctest::Approx(jko_loss(step, x, target, probes, 0.5)).epsilon(1e-13));
    Vec fd(lg.grad.size());
    const double h = 1e-5;
    for (Eigen::Index i = 0; i < fd.size(); ++i) {
      auto a = step, b = step;
      a.net.params()[i] += h;
      b.net.params()[i] -= h;
      fd[i] = (jko_loss(a, x, target, probes, 0.5) - jko_loss(b, x, target, probes, 0.5)) / (2 * h);
    }
    CHECK((lg.grad - fd).norm() <= 1e-6 * fd.norm());
    for (Eigen::Index i = 0; i < fd.size(); ++i)
      CHECK(std::abs(lg.grad[i] - fd[i]) <= 1e-4 * std::max(std::abs(fd[i]), 1e-6 * fd.norm()));
  }
}

TEST_CASE("training") {
  Vec m(2);
  m << 1.0, -0.5;
  const auto target = shifted_normal(m);
  Rng pool_rng(13);
  const Mat pool = sample_standard_normal(2, 4000, pool_rng).points;

  JkoStepConfig cfg;
  cfg.tau = 50.0;
  cfg.n_integration_steps = 6;
  cfg.train_iters = 400;
  cfg.batch_size = 128;
  cfg.hidden = 16;
  cfg.learning_rate = 5e-3;

  SUBCASE("a Gaussian is translated onto the target mean") {
    Rng rng(14);
    JkoStep step;
    step.net = train_jko_step(cfg, pool, target, rng);
    step.tau = cfg.tau;
    step.n_integration_steps = cfg.n_integration_steps;
    const auto out = propagate_samples(step, sample_standard_normal(2, 4000, rng), rng);
    const Vec mean = out.points.rowwise().mean();
    // The proximal term pulls the optimum to m * tau / (1 + tau).
    CHECK((mean - m).norm() < 0.1);
  }
  SUBCASE("zero iterations return the initialization") {
    cfg.train_iters = 0;
    Rng a(15), b(15);
    const auto net = train_jko_step(cfg, pool, target, a);
    CHECK(net.params() == init_params(2, cfg.hidden, b).params());
  }
  SUBCASE("fixed seeds reproduce the parameters") {
    cfg.train_iters = 20;
    Rng a(16), b(16);
    CHECK(train_jko_step(cfg, pool, target, a).params() == train_jko_step(cfg, pool, target, b).params());
  }
  SUBCASE("training on the latent itself does not increase the loss") {
    const auto normal = shifted_normal(Vec::Zero(2));
    cfg.tau = 0.5;
    cfg.train_iters = 500;
    Rng rng(17);
    const Mat eval = sample_standard_normal(2, 2000, rng).points;
    JkoStep step;
    step.net = init_params(2, cfg.hidden, rng);
    step.tau = cfg.tau;
    step.n_integration_steps = cfg.n_integration_steps;
    const double before = jko_loss(step, eval, normal, {}, cfg.kinetic_weight);
    step.net = train_jko_step(cfg, pool, normal, rng, &step.net);
    CHECK(jko_loss(step, eval, normal, {}, cfg.kinetic_weight) <= before + 1e-3);
  }
  SUBCASE("empty pools are rejected") {
    Rng rng(18);
    CHECK_THROWS_AS(train_jko_step(cfg, Mat(2, 0), target, rng), ArgumentError);
  }
}

TEST_CASE("pushforward density stays normalized") {
  // Importance estimate of int p_1 with a wide Gaussian proposal; p_1 is
  // evaluated at arbitrary points through the backward solve.
  Vec m(2);
  m << 0.7, 0.3;
  const auto target = shifted_normal(m);
  JkoStepConfig cfg;
  cfg.tau = 1.0;
  cfg.n_integration_steps = 10;
  cfg.train_iters = 150;
  cfg.batch_size = 128;
  cfg.hidden = 16;
  cfg.learning_rate = 5e-3;
  Rng rng(19);
  const Mat pool = sample_standard_normal(2, 2000, rng).points;
  JkoStep step;
  step.net = train_jko_step(cfg, pool, target, rng);
  step.tau = cfg.tau;
  step.n_integration_steps = cfg.n_integration_steps;

  const double s = 2.5;
  const Mat y = s * sample_standard_normal(2, 20000, rng).points;
  const auto b = integrate_backward(step, y, {});
  double total = 0.0;
  for (Eigen::Index j = 0; j < y.cols(); ++j) {
    const double log_p1 = standard_normal_log_density(b.x.col(j)) + b.logdet[j];
    const double log_ref = standard_normal_log_density(y.col(j) / s) - 2.0 * std::log(s);
    total += std::exp(log_p1 - log_ref);
  }
  CHECK(std::abs(total / y.cols() - 1.0) < 0.05);
}

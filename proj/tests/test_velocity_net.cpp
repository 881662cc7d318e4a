#include <doctest.h>

#include "jko/errors.hpp"
#include "jko/velocity_net.hpp"

#include <cmath>

using namespace jko;

namespace {

VelocityNet random_net(Eigen::Index d, Eigen::Index h, std::uint64_t seed, double scale = 0.5) {
  Rng rng(seed);
  VelocityNet net(d, h);
  std::normal_distribution<double> normal;
  for (auto& p : net.params()) p = scale * normal(rng);
  return net;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(b)); }

}  // namespace

TEST_CASE("parameter layout") {
  CHECK(VelocityNet::param_count(2, 54) == 3296);
  VelocityNet net(2, 54);
  CHECK(net.num_params() == 3296);
  CHECK(net.w1().rows() == 54);
  CHECK(net.w1().cols() == 3);
  CHECK(net.w3().rows() == 2);
  CHECK_THROWS_AS(VelocityNet(0, 4), ConfigError);
}

TEST_CASE("initialization gives a zero field") {
  Rng rng(3), rng2(3);
  const auto net = init_params(3, 16, rng);
  const auto net2 = init_params(3, 16, rng2);
  CHECK(net.params() == net2.params());
  CHECK(net.w3().norm() == 0.0);
  CHECK(net.b3().norm() == 0.0);
  CHECK(net.w1().norm() > 0.0);
  Vec x(3);
  x << 0.4, -2.0, 7.0;
  CHECK(net.forward(x, 0.3).norm() == 0.0);
}

TEST_CASE("forward stays finite for large inputs") {
  const auto net = random_net(4, 8, 1, 2.0);
  Rng rng(2);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 50; ++i) {
    Vec x(4);
    for (auto& v : x) v = normal(rng);
    x *= 1e3 / x.norm();
    CHECK(net.forward(x, 0.5).allFinite());
  }
}

TEST_CASE("field is Lipschitz with the weight-norm bound") {
  const auto net = random_net(3, 8, 4);
  const double L = net.w3().norm() * net.w2().norm() * net.w1().leftCols(3).norm();
  Rng rng(5);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 100; ++i) {
    Vec x(3), y(3);
    for (auto& v : x) v = normal(rng);
    for (auto& v : y) v = normal(rng);
    CHECK((net.forward(x, 0.1) - net.forward(y, 0.1)).norm() <= L * (x - y).norm() + 1e-12);
  }
}

TEST_CASE("jacobian and batched divergence agree with finite differences") {
  const auto net = random_net(3, 6, 8);
  Vec x(3);
  x << 0.2, -0.5, 0.9;
  const double t = 0.37, h = 1e-5;
  Mat fd(3, 3);
  for (int i = 0; i < 3; ++i) {
    Vec xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    fd.col(i) = (net.forward(xp, t) - net.forward(xm, t)) / (2 * h);
  }
  const Mat J = net.jacobian(x, t);
  CHECK((J - fd).norm() <= 1e-6 * fd.norm());
  CHECK(rel_err(J.trace(), fd.trace()) <= 1e-4);

  Mat v;
  Vec tr;
  net.evaluate(x, t, TraceProbes{}, v, tr);
  CHECK((v.col(0) - net.forward(x, t)).norm() <= 1e-14);
  CHECK(rel_err(tr[0], fd.trace()) <= 1e-4);
}

TEST_CASE("Hutchinson probes are unbiased for the divergence") {
  const auto net = random_net(4, 8, 9);
  const Mat z = Mat::Random(4, 1);
  const double exact = net.jacobian(z.col(0), 0.2).trace();
  Rng rng(10);
  const Eigen::Index reps = 20000;
  const auto probes = TraceProbes::draw(4, reps, 1, rng);
  Mat v;
  Vec tr;
  net.evaluate(z.replicate(1, reps), 0.2, probes, v, tr);
  const double mean = tr.mean();
  const double se = std::sqrt((tr.array() - mean).square().sum() / (reps - 1) / reps);
  CHECK(std::abs(mean - exact) < 4 * se + 1e-12);
}

TEST_CASE("reverse pass matches central differences") {
  // Scalar functional: sum_j <c_j, v(z_j)> + sum_j e_j trace_j, over a batch.
  for (bool exact : {true, false}) {
    CAPTURE(exact);
    auto net = random_net(3, 5, 12);
    Rng rng(13);
    const Mat z = Mat::Random(3, 4);
    const Mat c = Mat::Random(3, 4);
    const Vec e = Vec::Random(4);
    const auto probes = exact ? TraceProbes{} : TraceProbes::draw(3, 4, 2, rng);
    const double t = 0.6;

    auto functional = [&](const VelocityNet& n, const Mat& zz) {
      Mat v;
      Vec tr;
      n.evaluate(zz, t, probes, v, tr);
      return (c.cwiseProduct(v)).sum() + e.dot(tr);
    };

    NetTape tape;
    Mat v;
    Vec tr;
    net.evaluate(z, t, probes, v, tr, &tape);
    Vec grad = Vec::Zero(net.num_params());
    const Mat zbar = net.backward(tape, c, e, grad);

    const double h = 1e-5;
    for (Eigen::Index i = 0; i < net.num_params(); ++i) {
      auto a = net, b = net;
      a.params()[i] += h;
      b.params()[i] -= h;
      const double fd = (functional(a, z) - functional(b, z)) / (2 * h);
      CHECK(std::abs(grad[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      Mat zp = z, zm = z;
      zp.data()[i] += h;
      zm.data()[i] -= h;
      const double fd = (functional(net, zp) - functional(net, zm)) / (2 * h);
      CHECK(std::abs(zbar.data()[i] - fd) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("Adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    Vec p = Vec::Constant(3, 1.5);
    auto st = AdamState::for_params(3);
    adam_step(p, Vec::Zero(3), st);
    CHECK(p == Vec::Constant(3, 1.5));
    CHECK(st.step == 1);
  }
  SUBCASE("first step moves by about -lr * sign(g)") {
    // m1 = (1-b1) g, v1 = (1-b2) g^2; bias correction gives g / (|g| + eps).
    for (double g : {3.0, -0.25}) {
      Vec p = Vec::Zero(1);
      auto st = AdamState::for_params(1, 1e-3);
      adam_step(p, Vec::Constant(1, g), st);
      const double expect = -1e-3 * g / (std::abs(g) + 1e-8);
      CHECK(p[0] == doctest::Approx(expect).epsilon(1e-10));
    }
  }
  SUBCASE("deterministic") {
    Vec p1 = Vec::LinSpaced(4, -1, 1), p2 = p1;
    auto s1 = AdamState::for_params(4), s2 = AdamState::for_params(4);
    const Vec g = Vec::LinSpaced(4, 0.5, -2);
    adam_step(p1, g, s1);
    adam_step(p2, g, s2);
    CHECK(p1 == p2);
    CHECK(s1.m == s2.m);
  }
  SUBCASE("non-finite gradients are reported with the step index") {
    Vec p = Vec::Zero(2);
    auto st = AdamState::for_params(2);
    adam_step(p, Vec::Ones(2), st);
    adam_step(p, Vec::Ones(2), st);
    Vec g = Vec::Ones(2);
    g[1] = std::numeric_limits<double>::infinity();
    try {
      adam_step(p, g, st);
      FAIL("expected TrainingError");
    } catch (const TrainingError& e) {
      CHECK(e.index() == 2);
    }
  }
}

TEST_CASE("json round trip") {
  const auto net = random_net(2, 7, 20);
  const auto back = net_from_json(net_to_json(net));
  CHECK(back.params() == net.params());
  CHECK(back.dim() == 2);
  CHECK(back.hidden() == 7);
  auto j = net_to_json(net);
  j["params"].erase(0);
  CHECK_THROWS_AS(net_from_json(j), ConfigError);
}

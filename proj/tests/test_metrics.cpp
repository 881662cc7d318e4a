#include <doctest.h>

#include "jko/errors.hpp"
#include "jko/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

using namespace jko;

namespace {

// Direct double loop over all pairs.
double energy_oracle(const Mat& x, const Mat& y) {
  auto mean_dist = [](const Mat& a, const Mat& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.cols(); ++i)
      for (Eigen::Index j = 0; j < b.cols(); ++j) s += (a.col(i) - b.col(j)).norm();
    return s / static_cast<double>(a.cols() * b.cols());
  };
  return mean_dist(x, y) - 0.5 * mean_dist(x, x) - 0.5 * mean_dist(y, y);
}

TargetDensity scaled_normal(Eigen::Index d, double log_scale) {
  CustomParams p;
  p.log_density = [log_scale](const Vec& x) { return standard_normal_log_density(x) + log_scale; };
  return make_custom_target(d, p);
}

}  // namespace

TEST_CASE("energy distance") {
  Mat a(2, 1), b(2, 1);
  a << 0, 0;
  b << 3, 4;
  CHECK(energy_distance(a, b) == 5.0);

  Rng rng(1);
  const Mat x = sample_standard_normal(3, 60, rng).points;
  const Mat y = sample_standard_normal(3, 45, rng).points * 1.3;
  CHECK(energy_distance(x, y) == doctest::Approx(energy_oracle(x, y)).epsilon(1e-12));
  CHECK(energy_distance(x, y) == energy_distance(y, x));
  CHECK(energy_distance(x, x) == 0.0);
  CHECK(energy_distance(x, x.rowwise().reverse().rowwise().reverse()) == 0.0);

  const Mat p = sample_standard_normal(2, 10000, rng).points;
  const Mat q = sample_standard_normal(2, 10000, rng).points;
  CHECK(energy_distance(p, q) <= 1e-3);

  double prev = 0.0;
  const Mat shape = sample_standard_normal(2, 200, rng).points * 0.1;
  for (double L : {1.0, 2.0, 4.0}) {
    Mat moved = shape;
    moved.row(0).array() += L;
    const double dl = energy_distance(shape, moved);
    CHECK(dl > prev);
    prev = dl;
  }

  CHECK_THROWS_AS(energy_distance(Mat(2, 0), b), ArgumentError);
  CHECK_THROWS_AS(energy_distance(Mat::Zero(3, 1), b), ArgumentError);
  const auto est = energy_distance_estimate(p, q);
  CHECK(est.value == energy_distance(p, q));
  CHECK(est.standard_error > 0.0);
}

TEST_CASE("log normalizing constant") {
  Rng rng(2);
  const auto batch = sample_standard_normal(2, 5000, rng);
  SUBCASE("exact model") {
    const auto e = log_z_estimate(batch, scaled_normal(2, 0.0));
    CHECK(std::abs(e.value) < 1e-12);
    CHECK(e.n == 5000);
  }
  SUBCASE("scaled target") {
    CHECK(log_z_estimate(batch, scaled_normal(2, std::log(7.0))).value == doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }
  SUBCASE("mismatched Gaussian") {
    // Target N(0, e^2 I) unnormalized as exp(-|x|^2 / (2 e^2)); Z = 2 pi e^2 in 2-D.
    CustomParams p;
    p.log_density = [](const Vec& x) { return -0.5 * x.squaredNorm() / std::exp(2.0); };
    const auto t = make_custom_target(2, p);
    const double log_z = std::log(2 * std::numbers::pi) + 2.0;
    // KL(N(0,I) || N(0, s^2 I)) in d = 2 with s = e.
    const double s2 = std::exp(2.0);
    const double kl = 0.5 * 2 * (1.0 / s2 - 1.0 + std::log(s2));
    const auto e = log_z_estimate(batch, t);
    CHECK(std::abs(e.value - (log_z - kl)) <= 3 * e.standard_error);
  }
  SUBCASE("permutation invariance") {
    SampleBatch perm(batch.points.rowwise().reverse(), batch.log_density.reverse());
    const auto t = make_target(TargetKind::Mustache, 2);
    CHECK(log_z_estimate(perm, t).value == doctest::Approx(log_z_estimate(batch, t).value).epsilon(1e-13));
  }
  SUBCASE("density-free batches are rejected") {
    CHECK_THROWS_AS(log_z_estimate(SampleBatch(batch.points), scaled_normal(2, 0.0)), ArgumentError);
  }
}

TEST_CASE("mode MSE") {
  const auto t = make_target(TargetKind::Shifted8Modes, 2);
  const auto& g = *t.gmm();
  Mat balanced(2, 800);
  for (int j = 0; j < 800; ++j) balanced.col(j) = g.means[static_cast<std::size_t>(j % 8)];
  CHECK(mode_mse(balanced, g) == 0.0);
  Mat one = g.means[3].replicate(1, 50);
  CHECK(mode_mse(one, g) == doctest::Approx(0.109375).epsilon(1e-15));

  // (0, 0) is exactly equidistant from both modes and goes to index 0.
  GmmSpec two;
  two.means = {Vec::Unit(2, 0), -Vec::Unit(2, 0)};
  two.weights = {0.5, 0.5};
  const Mat origin = Mat::Zero(2, 3);
  CHECK(mode_weights(origin, two) == std::vector<double>{1.0, 0.0});
  std::swap(two.means[0], two.means[1]);
  CHECK(mode_weights(origin, two) == std::vector<double>{1.0, 0.0});

  Rng rng(3);
  for (int rep = 0; rep < 20; ++rep) {
    const Mat pts = sample_standard_normal(2, 100, rng).points;
    const double m = mode_mse(pts, g);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }
}

TEST_CASE("reports") {
  Rng rng(4);
  const auto t = make_target(TargetKind::Shifted8Modes, 2);
  const auto s = t.sample(1000, rng);
  const auto ref = t.sample(1000, rng);
  const auto rep = evaluate_samples(s, ref, t, "exact");
  REQUIRE(rep.log_z);
  REQUIRE(rep.mode_mse);
  CHECK(std::abs(rep.log_z->value) < 1e-10);
  const auto v = rep.values();
  for (const char* k : {"n_samples", "energy_distance", "energy_distance_se", "log_z", "log_z_se", "mode_mse", "mode_mse_se"})
    CHECK(v.count(k) == 1);
  CHECK(rep.to_text().find("method=exact") != std::string::npos);

  const auto mala = evaluate_samples(SampleBatch(s.points), ref, make_target(TargetKind::Mustache, 2), "mala");
  CHECK_FALSE(mala.log_z);
  CHECK_FALSE(mala.mode_mse);
}

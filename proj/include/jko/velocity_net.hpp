#pragma once

#include "jko/sample_batch.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace jko {

// How the divergence trace(dv/dx) is evaluated.
struct TraceProbes {
  // Empty: exact trace via d forward-mode tangents. Otherwise Hutchinson with
  // one d x B Rademacher matrix per probe.
  std::vector<Mat> rademacher;

  bool exact() const { return rademacher.empty(); }
  static TraceProbes draw(Eigen::Index dim, Eigen::Index batch, int count, Rng& rng);
};

// Intermediate values of one batched evaluation, kept for the reverse pass.
struct NetTape {
  Mat input;  // (d+1) x B
  Mat h1, h2;  // h x B
  // One entry per tangent direction.
  std::vector<Mat> dir_in;   // d x B input tangents
  std::vector<Mat> da1, dh1, da2, dh2;
  double trace_scale = 1.0;
};

// Dense three-layer network v(x, t): [x; t] -> tanh -> tanh -> linear.
// Parameters live in a single flat vector:
//   W1 (h x (d+1)), b1 (h), W2 (h x h), b2 (h), W3 (d x h), b3 (d),
// each matrix column-major.
class VelocityNet {
 public:
  VelocityNet() = default;
  VelocityNet(Eigen::Index dim, Eigen::Index hidden);

  static Eigen::Index param_count(Eigen::Index dim, Eigen::Index hidden);

  Eigen::Index dim() const { return dim_; }
  Eigen::Index hidden() const { return hidden_; }
  const std::string& activation() const { return activation_; }
  Eigen::Index num_params() const { return theta_.size(); }

  const Vec& params() const { return theta_; }
  Vec& params() { return theta_; }

  Eigen::Map<const Mat> w1() const { return cmat(0, hidden_, dim_ + 1); }
  Eigen::Map<const Vec> b1() const { return cvec(off_b1_, hidden_); }
  Eigen::Map<const Mat> w2() const { return cmat(off_w2_, hidden_, hidden_); }
  Eigen::Map<const Vec> b2() const { return cvec(off_b2_, hidden_); }
  Eigen::Map<const Mat> w3() const { return cmat(off_w3_, dim_, hidden_); }
  Eigen::Map<const Vec> b3() const { return cvec(off_b3_, dim_); }
  Eigen::Map<Mat> w3() { return Eigen::Map<Mat>(theta_.data() + off_w3_, dim_, hidden_); }
  Eigen::Map<Vec> b3() { return Eigen::Map<Vec>(theta_.data() + off_b3_, dim_); }

  Vec forward(const Eigen::Ref<const Vec>& x, double t) const;
  // Full Jacobian dv/dx (d x d) by forward-mode differentiation.
  Mat jacobian(const Eigen::Ref<const Vec>& x, double t) const;

  // Batched evaluation at the points z (d x B) and common time t. Writes the
  // velocities into v and the (exact or Hutchinson) divergence into trace.
  // If tape is non-null it is filled for a later call to backward().
  void evaluate(const Mat& z, double t, const TraceProbes& probes, Mat& v, Vec& trace,
                NetTape* tape = nullptr) const;

  // Reverse pass through evaluate(): given cotangents of v (d x B) and of the
  // trace (B), returns the cotangent of z and accumulates parameter gradients
  // into grad (size num_params()).
  Mat backward(const NetTape& tape, const Mat& v_bar, const Vec& trace_bar, Vec& grad) const;

 private:
  Eigen::Map<const Mat> cmat(Eigen::Index off, Eigen::Index r, Eigen::Index c) const {
    return Eigen::Map<const Mat>(theta_.data() + off, r, c);
  }
  Eigen::Map<const Vec> cvec(Eigen::Index off, Eigen::Index n) const {
    return Eigen::Map<const Vec>(theta_.data() + off, n);
  }

  Eigen::Index dim_ = 0;
  Eigen::Index hidden_ = 0;
  std::string activation_ = "tanh";
  Vec theta_;
  Eigen::Index off_b1_ = 0, off_w2_ = 0, off_b2_ = 0, off_w3_ = 0, off_b3_ = 0;
};

// Random hidden layers scaled by 1/sqrt(fan_in), zero output layer: the initial
// field is identically zero.
VelocityNet init_params(Eigen::Index dim, Eigen::Index hidden, Rng& rng);

struct AdamState {
  Vec m;
  Vec v;
  long step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(Eigen::Index n, double lr = 1e-3);
};

// One bias-corrected Adam update of params in place. Throws TrainingError
// carrying the step index if grad has non-finite entries.
void adam_step(Vec& params, const Vec& grad, AdamState& state);

nlohmann::json net_to_json(const VelocityNet& net);
VelocityNet net_from_json(const nlohmann::json& j);

}  // namespace jko

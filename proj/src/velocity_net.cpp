#include "jko/velocity_net.hpp"

#include "jko/errors.hpp"

#include <cmath>

namespace jko {

TraceProbes TraceProbes::draw(Eigen::Index dim, Eigen::Index batch, int count, Rng& rng) {
  if (count < 1) throw ConfigError("Hutchinson estimator needs at least one probe");
  TraceProbes p;
  std::bernoulli_distribution coin(0.5);
  p.rademacher.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    Mat e(dim, batch);
    for (Eigen::Index j = 0; j < batch; ++j)
      for (Eigen::Index i = 0; i < dim; ++i) e(i, j) = coin(rng) ? 1.0 : -1.0;
    p.rademacher.push_back(std::move(e));
  }
  return p;
}

Eigen::Index VelocityNet::param_count(Eigen::Index dim, Eigen::Index hidden) {
  return hidden * (dim + 1) + hidden + hidden * hidden + hidden + dim * hidden + dim;
}

VelocityNet::VelocityNet(Eigen::Index dim, Eigen::Index hidden) : dim_(dim), hidden_(hidden) {
  if (dim < 1 || hidden < 1) throw ConfigError("velocity net needs dim >= 1 and hidden >= 1");
  theta_ = Vec::Zero(param_count(dim, hidden));
  off_b1_ = hidden * (dim + 1);
  off_w2_ = off_b1_ + hidden;
  off_b2_ = off_w2_ + hidden * hidden;
  off_w3_ = off_b2_ + hidden;
  off_b3_ = off_w3_ + dim * hidden;
}

void VelocityNet::evaluate(const Mat& z, double t, const TraceProbes& probes, Mat& v, Vec& trace,
                           NetTape* tape) const {
  const Eigen::Index B = z.cols();
  const auto W1 = w1();
  const auto W1x = W1.leftCols(dim_);
  const auto W2 = w2();
  const auto W3 = w3();

  Mat a1 = W1x * z;
  a1.colwise() += b1() + W1.col(dim_) * t;
  Mat h1 = a1.array().tanh().matrix();
  Mat a2 = W2 * h1;
  a2.colwise() += b2();
  Mat h2 = a2.array().tanh().matrix();
  v.noalias() = W3 * h2;
  v.colwise() += b3();

  const Mat s1 = (1.0 - h1.array().square()).matrix();
  const Mat s2 = (1.0 - h2.array().square()).matrix();

  const bool exact = probes.exact();
  const auto ndir = exact ? dim_ : static_cast<Eigen::Index>(probes.rademacher.size());
  const double scale = exact ? 1.0 : 1.0 / static_cast<double>(ndir);
  trace = Vec::Zero(B);

  if (tape) {
    tape->input.resize(dim_ + 1, B);
    tape->input.topRows(dim_) = z;
    tape->input.row(dim_).setConstant(t);
    tape->dir_in.clear();
    tape->da1.clear();
    tape->dh1.clear();
    tape->da2.clear();
    tape->dh2.clear();
    tape->trace_scale = scale;
  }

  for (Eigen::Index k = 0; k < ndir; ++k) {
    Mat u;
    Mat da1;
    if (exact) {
      u = Mat::Zero(dim_, B);
      u.row(k).setOnes();
      da1 = W1x.col(k).replicate(1, B);
    } else {
      if (probes.rademacher[k].rows() != dim_ || probes.rademacher[k].cols() != B)
        throw ArgumentError("probe shape does not match batch");
      u = probes.rademacher[k];
      da1.noalias() = W1x * u;
    }
    Mat dh1 = s1.cwiseProduct(da1);
    Mat da2 = W2 * dh1;
    Mat dh2 = s2.cwiseProduct(da2);
    if (exact) {
      trace.noalias() += (W3.row(k) * dh2).transpose();
    } else {
      trace += scale * (u.cwiseProduct(W3 * dh2)).colwise().sum().transpose();
    }
    if (tape) {
      tape->dir_in.push_back(std::move(u));
      tape->da1.push_back(std::move(da1));
      tape->dh1.push_back(std::move(dh1));
      tape->da2.push_back(std::move(da2));
      tape->dh2.push_back(std::move(dh2));
    }
  }

  if (tape) {
    tape->h1 = std::move(h1);
    tape->h2 = std::move(h2);
  }
}

Mat VelocityNet::backward(const NetTape& tape, const Mat& v_bar, const Vec& trace_bar, Vec& grad) const {
  if (grad.size() != num_params()) throw ArgumentError("gradient buffer has wrong size");
  const Eigen::Index B = tape.input.cols();
  const auto W1 = w1();
  const auto W1x = W1.leftCols(dim_);
  const auto W2 = w2();
  const auto W3 = w3();

  Eigen::Map<Mat> gW1(grad.data(), hidden_, dim_ + 1);
  Eigen::Map<Vec> gb1(grad.data() + off_b1_, hidden_);
  Eigen::Map<Mat> gW2(grad.data() + off_w2_, hidden_, hidden_);
  Eigen::Map<Vec> gb2(grad.data() + off_b2_, hidden_);
  Eigen::Map<Mat> gW3(grad.data() + off_w3_, dim_, hidden_);
  Eigen::Map<Vec> gb3(grad.data() + off_b3_, dim_);

  const Mat s1 = (1.0 - tape.h1.array().square()).matrix();
  const Mat s2 = (1.0 - tape.h2.array().square()).matrix();
  // tanh'' = -2 tanh tanh'
  const Mat s1pp = (-2.0 * tape.h1.array() * s1.array()).matrix();
  const Mat s2pp = (-2.0 * tape.h2.array() * s2.array()).matrix();

  Mat ga1 = Mat::Zero(hidden_, B);
  Mat ga2 = Mat::Zero(hidden_, B);

  // Divergence path: trace = scale * sum_k <u_k, W3 dh2_k>.
  const Eigen::RowVectorXd tw = tape.trace_scale * trace_bar.transpose();
  for (std::size_t k = 0; k < tape.dir_in.size(); ++k) {
    const Mat wt = (tape.dir_in[k].array().rowwise() * tw.array()).matrix();
    gW3.noalias() += wt * tape.dh2[k].transpose();
    const Mat gdh2 = W3.transpose() * wt;
    ga2.array() += gdh2.array() * s2pp.array() * tape.da2[k].array();
    const Mat gda2 = gdh2.cwiseProduct(s2);
    gW2.noalias() += gda2 * tape.dh1[k].transpose();
    const Mat gdh1 = W2.transpose() * gda2;
    ga1.array() += gdh1.array() * s1pp.array() * tape.da1[k].array();
    const Mat gda1 = gdh1.cwiseProduct(s1);
    gW1.leftCols(dim_).noalias() += gda1 * tape.dir_in[k].transpose();
  }

  // Primal path.
  gW3.noalias() += v_bar * tape.h2.transpose();
  gb3 += v_bar.rowwise().sum();
  ga2.noalias() += (W3.transpose() * v_bar).cwiseProduct(s2);
  gW2.noalias() += ga2 * tape.h1.transpose();
  gb2 += ga2.rowwise().sum();
  ga1.noalias() += (W2.transpose() * ga2).cwiseProduct(s1);
  gW1.noalias() += ga1 * tape.input.transpose();
  gb1 += ga1.rowwise().sum();
  return W1x.transpose() * ga1;
}

Vec VelocityNet::forward(const Eigen::Ref<const Vec>& x, double t) const {
  if (x.size() != dim_) throw ArgumentError("forward: wrong input dimension");
  Vec a1 = w1().leftCols(dim_) * x + w1().col(dim_) * t + b1();
  Vec h1 = a1.array().tanh().matrix();
  Vec h2 = (w2() * h1 + b2()).array().tanh().matrix();
  return w3() * h2 + b3();
}

Mat VelocityNet::jacobian(const Eigen::Ref<const Vec>& x, double t) const {
  if (x.size() != dim_) throw ArgumentError("jacobian: wrong input dimension");
  Vec a1 = w1().leftCols(dim_) * x + w1().col(dim_) * t + b1();
  Vec h1 = a1.array().tanh().matrix();
  Vec h2 = (w2() * h1 + b2()).array().tanh().matrix();
  const Vec s1 = (1.0 - h1.array().square()).matrix();
  const Vec s2 = (1.0 - h2.array().square()).matrix();
  return w3() * s2.asDiagonal() * w2() * s1.asDiagonal() * w1().leftCols(dim_);
}

VelocityNet init_params(Eigen::Index dim, Eigen::Index hidden, Rng& rng) {
  VelocityNet net(dim, hidden);
  std::normal_distribution<double> normal;
  Vec& th = net.params();
  const Eigen::Index n_w1 = hidden * (dim + 1);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(dim + 1));
  for (Eigen::Index i = 0; i < n_w1; ++i) th[i] = s1 * normal(rng);
  const Eigen::Index off_w2 = n_w1 + hidden;
  const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index i = 0; i < hidden * hidden; ++i) th[off_w2 + i] = s2 * normal(rng);
  return net;
}

AdamState AdamState::for_params(Eigen::Index n, double lr) {
  AdamState s;
  s.m = Vec::Zero(n);
  s.v = Vec::Zero(n);
  s.lr = lr;
  return s;
}

void adam_step(Vec& params, const Vec& grad, AdamState& state) {
  if (grad.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ArgumentError("adam_step: shape mismatch");
  if (!grad.allFinite()) throw TrainingError("non-finite gradient", static_cast<std::size_t>(state.step));
  ++state.step;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  params.array() -= state.lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

nlohmann::json net_to_json(const VelocityNet& net) {
  const auto d = net.dim();
  const auto h = net.hidden();
  nlohmann::json j;
  j["dim"] = d;
  j["hidden"] = h;
  j["activation"] = net.activation();
  j["layers"] = nlohmann::json::array({{h, d + 1}, {h}, {h, h}, {h}, {d, h}, {d}});
  j["params"] = std::vector<double>(net.params().data(), net.params().data() + net.num_params());
  return j;
}

VelocityNet net_from_json(const nlohmann::json& j) {
  const auto d = j.at("dim").get<Eigen::Index>();
  const auto h = j.at("hidden").get<Eigen::Index>();
  if (j.at("activation").get<std::string>() != "tanh")
    throw ConfigError("unsupported activation '" + j.at("activation").get<std::string>() + "'");
  VelocityNet net(d, h);
  const auto p = j.at("params").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(p.size()) != net.num_params())
    throw ConfigError("parameter vector length does not match layer shapes");
  net.params() = Eigen::Map<const Vec>(p.data(), net.num_params());
  if (!net.params().allFinite()) throw ConfigError("non-finite network parameters");
  return net;
}

}  // namespace jko

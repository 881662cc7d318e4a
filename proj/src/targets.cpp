#include "jko/targets.hpp"

#include "jko/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <numeric>

namespace jko {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Mustache forward map T and its inverse.
Vec mustache_map(const Eigen::Ref<const Vec>& x) {
  Vec y(2);
  const double b = x[0] * x[0] - 1.0;
  y << x[0], x[1] - b * b;
  return y;
}

double bivariate_log_density(const Vec& y, double rho) {
  const double det = 1.0 - rho * rho;
  const double quad = (y[0] * y[0] - 2.0 * rho * y[0] * y[1] + y[1] * y[1]) / det;
  return -0.5 * quad - kLog2Pi - 0.5 * std::log(det);
}

}  // namespace

std::string_view target_kind_name(TargetKind kind) {
  switch (kind) {
    case TargetKind::Mustache: return "mustache";
    case TargetKind::Shifted8Modes: return "shifted8modes";
    case TargetKind::Shifted8Peaky: return "shifted8peaky";
    case TargetKind::Funnel: return "funnel";
    case TargetKind::Gmm: return "gmm";
    case TargetKind::Custom: return "custom";
  }
  return "unknown";
}

TargetKind parse_target_kind(std::string_view name) {
  const auto s = lower(name);
  if (s == "mustache") return TargetKind::Mustache;
  if (s == "shifted8modes" || s == "8modes") return TargetKind::Shifted8Modes;
  if (s == "shifted8peaky" || s == "8peaky") return TargetKind::Shifted8Peaky;
  if (s == "funnel") return TargetKind::Funnel;
  if (s == "gmm") return TargetKind::Gmm;
  if (s == "custom") return TargetKind::Custom;
  throw ConfigError("unknown target kind '" + std::string(name) + "'");
}

void GmmSpec::validate() const {
  if (means.empty()) throw ConfigError("GMM needs at least one mode");
  if (weights.size() != means.size()) throw ConfigError("GMM weights/means size mismatch");
  if (!(covariance_scale > 0.0)) throw ConfigError("GMM covariance scale must be positive");
  const auto d = means.front().size();
  double total = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    if (means[k].size() != d) throw ConfigError("GMM means have inconsistent dimension");
    if (!(weights[k] > 0.0)) throw ConfigError("GMM weights must be positive");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("GMM weights must sum to one");
}

GmmSpec shifted_eight_modes(double covariance_scale) {
  GmmSpec g;
  g.covariance_scale = covariance_scale;
  for (int k = 0; k < 8; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / 8.0;
    Vec m(2);
    m << -1.0 + std::cos(phi), std::sin(phi);
    g.means.push_back(m);
  }
  g.weights.assign(8, 1.0 / 8.0);
  return g;
}

TargetDensity::TargetDensity(TargetKind kind, Eigen::Index dim, TargetParams params)
    : kind_(kind), dim_(dim), params_(std::move(params)) {
  if (dim_ < 1) throw ConfigError("target dimension must be positive");
  switch (kind_) {
    case TargetKind::Mustache: {
      if (dim_ != 2) throw ConfigError("mustache target requires d = 2");
      const auto* p = std::get_if<MustacheParams>(&params_);
      if (!p) throw ConfigError("mustache target needs MustacheParams");
      if (!(std::abs(p->correlation) < 1.0)) throw ConfigError("mustache correlation must lie in (-1, 1)");
      break;
    }
    case TargetKind::Shifted8Modes:
    case TargetKind::Shifted8Peaky:
      if (dim_ != 2) throw ConfigError("shifted 8-mode targets require d = 2");
      [[fallthrough]];
    case TargetKind::Gmm: {
      const auto* g = std::get_if<GmmSpec>(&params_);
      if (!g) throw ConfigError("mixture target needs GmmSpec");
      g->validate();
      if (g->means.front().size() != dim_) throw ConfigError("GMM mean dimension does not match target");
      log_norm_ = -0.5 * static_cast<double>(dim_) * (kLog2Pi + std::log(g->covariance_scale));
      break;
    }
    case TargetKind::Funnel: {
      if (dim_ != 10) throw ConfigError("funnel target requires d = 10");
      const auto* f = std::get_if<FunnelParams>(&params_);
      if (!f) throw ConfigError("funnel target needs FunnelParams");
      if (!(f->variance > 0.0)) throw ConfigError("funnel variance must be positive");
      break;
    }
    case TargetKind::Custom: {
      const auto* c = std::get_if<CustomParams>(&params_);
      if (!c || !c->log_density) throw ConfigError("custom target needs a log-density callback");
      break;
    }
  }
}

std::string TargetDensity::name() const {
  if (kind_ == TargetKind::Gmm) return "gmm" + std::to_string(dim_);
  if (kind_ == TargetKind::Custom) return std::get<CustomParams>(params_).label;
  return std::string(target_kind_name(kind_));
}

void TargetDensity::check_point(const Eigen::Ref<const Vec>& x) const {
  if (x.size() != dim_) throw ArgumentError("point has wrong dimension");
  if (!x.allFinite()) throw ArgumentError("point has non-finite coordinates");
}

double TargetDensity::log_density(const Eigen::Ref<const Vec>& x) const {
  check_point(x);
  switch (kind_) {
    case TargetKind::Mustache:
      return bivariate_log_density(mustache_map(x), std::get<MustacheParams>(params_).correlation);
    case TargetKind::Funnel: {
      const double var = std::get<FunnelParams>(params_).variance;
      const double x1 = x[0];
      const double rest = x.tail(dim_ - 1).squaredNorm();
      const double k = static_cast<double>(dim_ - 1);
      return -0.5 * x1 * x1 / var - 0.5 * (kLog2Pi + std::log(var)) - 0.5 * k * (kLog2Pi + x1) -
             0.5 * rest * std::exp(-x1);
    }
    case TargetKind::Shifted8Modes:
    case TargetKind::Shifted8Peaky:
    case TargetKind::Gmm: {
      const auto& g = std::get<GmmSpec>(params_);
      Vec terms(static_cast<Eigen::Index>(g.num_modes()));
      for (std::size_t k = 0; k < g.num_modes(); ++k)
        terms[static_cast<Eigen::Index>(k)] =
            std::log(g.weights[k]) - 0.5 * (x - g.means[k]).squaredNorm() / g.covariance_scale;
      return log_norm_ + log_sum_exp(terms);
    }
    case TargetKind::Custom:
      return std::get<CustomParams>(params_).log_density(x);
  }
  return 0.0;
}

Vec TargetDensity::log_densities(const Mat& points) const {
  Vec out(points.cols());
  for (Eigen::Index j = 0; j < points.cols(); ++j) out[j] = log_density(points.col(j));
  return out;
}

Vec TargetDensity::log_density_grad(const Eigen::Ref<const Vec>& x) const {
  check_point(x);
  switch (kind_) {
    case TargetKind::Mustache: {
      const double rho = std::get<MustacheParams>(params_).correlation;
      const Vec y = mustache_map(x);
      const double det = 1.0 - rho * rho;
      const double gy1 = -(y[0] - rho * y[1]) / det;
      const double gy2 = -(y[1] - rho * y[0]) / det;
      // dy2/dx1 = -4 x1 (x1^2 - 1)
      Vec g(2);
      g << gy1 - 4.0 * x[0] * (x[0] * x[0] - 1.0) * gy2, gy2;
      return g;
    }
    case TargetKind::Funnel: {
      const double var = std::get<FunnelParams>(params_).variance;
      const double e = std::exp(-x[0]);
      Vec g(dim_);
      g[0] = -x[0] / var - 0.5 * static_cast<double>(dim_ - 1) + 0.5 * e * x.tail(dim_ - 1).squaredNorm();
      g.tail(dim_ - 1) = -e * x.tail(dim_ - 1);
      return g;
    }
    case TargetKind::Shifted8Modes:
    case TargetKind::Shifted8Peaky:
    case TargetKind::Gmm: {
      const auto& g = std::get<GmmSpec>(params_);
      const auto K = static_cast<Eigen::Index>(g.num_modes());
      Vec terms(K);
      for (Eigen::Index k = 0; k < K; ++k)
        terms[k] = std::log(g.weights[k]) - 0.5 * (x - g.means[k]).squaredNorm() / g.covariance_scale;
      const double lse = log_sum_exp(terms);
      Vec grad = Vec::Zero(dim_);
      for (Eigen::Index k = 0; k < K; ++k)
        grad -= std::exp(terms[k] - lse) * (x - g.means[k]) / g.covariance_scale;
      return grad;
    }
    case TargetKind::Custom: {
      const auto& c = std::get<CustomParams>(params_);
      if (c.grad) return c.grad(x);
      return finite_difference_gradient(c.log_density, x);
    }
  }
  return Vec::Zero(dim_);
}

bool TargetDensity::can_sample() const {
  if (kind_ == TargetKind::Custom) return static_cast<bool>(std::get<CustomParams>(params_).sampler);
  return true;
}

SampleBatch TargetDensity::sample(Eigen::Index n, Rng& rng) const {
  if (n < 1) throw ArgumentError("ground-truth sampling needs n >= 1");
  if (!can_sample()) throw CapabilityError("target '" + name() + "' has no exact sampler");
  std::normal_distribution<double> normal;
  SampleBatch out;
  out.points.resize(dim_, n);
  switch (kind_) {
    case TargetKind::Mustache: {
      const double rho = std::get<MustacheParams>(params_).correlation;
      const double s = std::sqrt(1.0 - rho * rho);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double y1 = normal(rng);
        const double y2 = rho * y1 + s * normal(rng);
        const double b = y1 * y1 - 1.0;
        out.points(0, j) = y1;
        out.points(1, j) = y2 + b * b;
      }
      break;
    }
    case TargetKind::Funnel: {
      const double sd = std::sqrt(std::get<FunnelParams>(params_).variance);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double x1 = sd * normal(rng);
        out.points(0, j) = x1;
        const double s = std::exp(0.5 * x1);
        for (Eigen::Index i = 1; i < dim_; ++i) out.points(i, j) = s * normal(rng);
      }
      break;
    }
    case TargetKind::Shifted8Modes:
    case TargetKind::Shifted8Peaky:
    case TargetKind::Gmm: {
      const auto& g = std::get<GmmSpec>(params_);
      std::discrete_distribution<std::size_t> pick(g.weights.begin(), g.weights.end());
      const double sd = std::sqrt(g.covariance_scale);
      for (Eigen::Index j = 0; j < n; ++j) {
        const auto k = pick(rng);
        for (Eigen::Index i = 0; i < dim_; ++i) out.points(i, j) = g.means[k][i] + sd * normal(rng);
      }
      break;
    }
    case TargetKind::Custom:
      return std::get<CustomParams>(params_).sampler(n, rng);
  }
  out.log_density = log_densities(out.points);
  return out;
}

TargetDensity make_target(TargetKind kind, Eigen::Index dim, std::uint64_t seed) {
  switch (kind) {
    case TargetKind::Mustache:
      return TargetDensity(kind, dim, MustacheParams{0.9});
    case TargetKind::Shifted8Modes:
      if (dim != 2) throw ConfigError("shifted 8 Modes requires d = 2");
      return TargetDensity(kind, dim, shifted_eight_modes(1e-2));
    case TargetKind::Shifted8Peaky:
      if (dim != 2) throw ConfigError("shifted 8 Peaky requires d = 2");
      return TargetDensity(kind, dim, shifted_eight_modes(5e-3));
    case TargetKind::Funnel:
      return TargetDensity(kind, dim, FunnelParams{9.0});
    case TargetKind::Gmm: {
      if (dim < 1) throw ConfigError("GMM dimension must be positive");
      Rng rng(seed);
      std::uniform_real_distribution<double> unif(-1.0, 1.0);
      GmmSpec g;
      g.covariance_scale = 1e-2;
      for (int k = 0; k < 10; ++k) {
        Vec m(dim);
        for (Eigen::Index i = 0; i < dim; ++i) m[i] = unif(rng);
        g.means.push_back(std::move(m));
      }
      g.weights.assign(10, 0.1);
      return TargetDensity(kind, dim, std::move(g));
    }
    case TargetKind::Custom:
      throw ConfigError("custom targets are built with make_custom_target");
  }
  throw ConfigError("unknown target kind");
}

TargetDensity make_custom_target(Eigen::Index dim, CustomParams params) {
  return TargetDensity(TargetKind::Custom, dim, std::move(params));
}

TargetDensity make_standard_normal_target(Eigen::Index dim) {
  CustomParams p;
  p.label = "standard_normal";
  p.log_density = [](const Vec& x) { return standard_normal_log_density(x); };
  p.grad = [](const Vec& x) -> Vec { return -x; };
  p.sampler = [dim](Eigen::Index n, Rng& rng) { return sample_standard_normal(dim, n, rng); };
  return make_custom_target(dim, std::move(p));
}

Vec finite_difference_gradient(const std::function<double(const Vec&)>& f, const Vec& x, double step) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + step;
    const double fp = f(xp);
    xp[i] = orig - step;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

}  // namespace jko

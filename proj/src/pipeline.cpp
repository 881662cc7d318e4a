#include "jko/pipeline.hpp"

#include "jko/errors.hpp"
#include "jko/metrics.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace jko {

std::vector<ScheduledStep> Schedule::steps() const {
  validate();
  std::vector<ScheduledStep> out;
  double tau = tau0;
  for (int i = 0; i < n1; ++i, tau *= growth) out.push_back({StepKind::Jko, tau});
  for (int b = 0; b < n2; ++b, tau *= growth) {
    out.push_back({StepKind::Jko, tau});
    for (int r = 0; r < rejections_per_block; ++r) out.push_back({StepKind::Rejection, 0.0});
  }
  return out;
}

std::size_t Schedule::num_steps() const {
  return static_cast<std::size_t>(n1 + n2 * (1 + rejections_per_block));
}

void Schedule::validate() const {
  if (n1 < 0 || n2 < 0) throw ConfigError("schedule counts must be non-negative");
  if (!(tau0 > 0.0)) throw ConfigError("initial step size must be positive");
  if (!(growth > 0.0)) throw ConfigError("step size growth must be positive");
  if (rejections_per_block < 0) throw ConfigError("rejections per block must be non-negative");
}

Schedule build_schedule(int n1, int n2, double tau0) {
  Schedule s;
  s.n1 = n1;
  s.n2 = n2;
  s.tau0 = tau0;
  s.validate();
  return s;
}

void StackedSampler::push_back(TrainedStep step) {
  if (std::holds_alternative<RejectionStepSpec>(step)) {
    if (steps_.empty()) throw ConfigError("a rejection step needs a preceding step");
    std::get<RejectionStepSpec>(step).validate();
  } else {
    if (std::get<JkoStep>(step).net.dim() != dim_) throw ConfigError("JKO step dimension does not match stack");
  }
  steps_.push_back(std::move(step));
}

StackedSampler StackedSampler::prefix(std::size_t k) const {
  if (k > steps_.size()) throw ArgumentError("prefix longer than stack");
  StackedSampler out(dim_);
  out.steps_.assign(steps_.begin(), steps_.begin() + static_cast<std::ptrdiff_t>(k));
  return out;
}

StackedSampler StackedSampler::without_rejection() const {
  StackedSampler out(dim_);
  for (const auto& s : steps_)
    if (std::holds_alternative<JkoStep>(s)) out.steps_.push_back(s);
  return out;
}

void StackedSampler::write(std::ostream& os) const {
  nlohmann::json header{{"format", "jko-stack"}, {"version", 1}, {"dim", dim_},
                        {"latent", "standard_normal"}, {"steps", steps_.size()}};
  os << header.dump() << '\n';
  for (const auto& s : steps_) {
    nlohmann::json rec;
    if (const auto* j = std::get_if<JkoStep>(&s)) {
      rec["kind"] = "jko";
      rec["tau"] = j->tau;
      rec["n_integration_steps"] = j->n_integration_steps;
      rec["trace_mode"] = j->trace_mode.to_string();
      rec["net"] = net_to_json(j->net);
    } else {
      const auto& r = std::get<RejectionStepSpec>(s);
      rec["kind"] = "rejection";
      rec["c"] = r.c();
      rec["log_c"] = r.log_c;
      rec["mean_acceptance"] = r.mean_acceptance;
      rec["r"] = r.target_rejection_rate;
      rec["calibration_size"] = r.calibration_size;
    }
    os << rec.dump() << '\n';
  }
}

void StackedSampler::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open " + path + " for writing");
  write(os);
}

StackedSampler StackedSampler::read(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("stack file is empty");
  const auto header = nlohmann::json::parse(line);
  if (header.value("format", "") != "jko-stack") throw ConfigError("not a stack file");
  if (header.value("latent", "") != "standard_normal") throw ConfigError("unsupported latent distribution");
  StackedSampler out(header.at("dim").get<Eigen::Index>());
  const auto count = header.at("steps").get<std::size_t>();
  for (std::size_t k = 0; k < count; ++k) {
    if (!std::getline(is, line)) throw ConfigError("stack file truncated at step " + std::to_string(k));
    const auto rec = nlohmann::json::parse(line);
    const auto kind = rec.at("kind").get<std::string>();
    if (kind == "jko") {
      JkoStep s;
      s.tau = rec.at("tau").get<double>();
      s.n_integration_steps = rec.at("n_integration_steps").get<int>();
      s.trace_mode = TraceMode::parse(rec.at("trace_mode").get<std::string>());
      s.net = net_from_json(rec.at("net"));
      out.push_back(std::move(s));
    } else if (kind == "rejection") {
      RejectionStepSpec r;
      r.log_c = rec.contains("log_c") ? rec.at("log_c").get<double>() : std::log(rec.at("c").get<double>());
      r.mean_acceptance = rec.at("mean_acceptance").get<double>();
      r.target_rejection_rate = rec.at("r").get<double>();
      r.calibration_size = rec.at("calibration_size").get<Eigen::Index>();
      out.push_back(r);
    } else {
      throw ConfigError("unknown step kind '" + kind + "'");
    }
  }
  return out;
}

StackedSampler StackedSampler::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ArgumentError("cannot open " + path);
  return read(is);
}

namespace {

SampleBatch sample_prefix(const StackedSampler& stack, const TargetDensity& target, std::size_t k,
                          Eigen::Index n, Rng& rng) {
  if (k == 0) return sample_standard_normal(stack.dim(), n, rng);
  SampleBatch batch = sample_prefix(stack, target, k - 1, n, rng);
  const auto& step = stack.steps()[k - 1];
  try {
    if (const auto* j = std::get_if<JkoStep>(&step)) return propagate_samples(*j, batch, rng);
    const auto& spec = std::get<RejectionStepSpec>(step);
    Resampler resample = [&](Eigen::Index m) { return sample_prefix(stack, target, k - 1, m, rng); };
    return apply_rejection_step(batch, target, spec, resample, rng);
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(e.what(), k - 1);
  }
}

Vec log_density_prefix(const StackedSampler& stack, const TargetDensity& target, std::size_t k,
                       const Mat& points, Rng& rng) {
  if (k == 0) {
    Vec out(points.cols());
    for (Eigen::Index j = 0; j < points.cols(); ++j) out[j] = standard_normal_log_density(points.col(j));
    return out;
  }
  const auto& step = stack.steps()[k - 1];
  try {
    if (const auto* j = std::get_if<JkoStep>(&step)) {
      const auto probes = inference_trace_mode(stack.dim()).draw(stack.dim(), points.cols(), rng);
      const auto back = integrate_backward(*j, points, probes);
      return log_density_prefix(stack, target, k - 1, back.x, rng) + back.logdet;
    }
    const auto& spec = std::get<RejectionStepSpec>(step);
    Vec lp = log_density_prefix(stack, target, k - 1, points, rng);
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
      const double a = acceptance_prob_log(target.log_density(points.col(i)), lp[i], spec.log_c);
      lp[i] = rejection_log_density(lp[i], a, spec.mean_acceptance);
    }
    return lp;
  } catch (const StepError&) {
    throw;
  } catch (const std::exception& e) {
    throw StepError(e.what(), k - 1);
  }
}

}  // namespace

SampleBatch sample_with_density(const StackedSampler& stack, const TargetDensity& target, Eigen::Index n,
                                Rng& rng) {
  if (n < 1) throw ArgumentError("sample count must be positive");
  if (target.dim() != stack.dim()) throw ArgumentError("target dimension does not match stack");
  return sample_prefix(stack, target, stack.num_steps(), n, rng);
}

Vec log_densities_at(const StackedSampler& stack, const TargetDensity& target, const Mat& points, Rng& rng) {
  if (points.rows() != stack.dim()) throw ArgumentError("point dimension does not match stack");
  if (!points.allFinite()) throw ArgumentError("non-finite query point");
  Vec out(points.cols());
  for (Eigen::Index start = 0; start < points.cols(); start += kIntegrationBlock) {
    const auto len = std::min(kIntegrationBlock, points.cols() - start);
    out.segment(start, len) =
        log_density_prefix(stack, target, stack.num_steps(), points.middleCols(start, len), rng);
  }
  return out;
}

double log_density_at(const StackedSampler& stack, const TargetDensity& target, const Eigen::Ref<const Vec>& x,
                      Rng& rng) {
  return log_densities_at(stack, target, Mat(x), rng)[0];
}

void TrainConfig::validate() const {
  if (pool_size < 1) throw ConfigError("pool size must be positive");
  if (train_iters < 0) throw ConfigError("train_iters must be non-negative");
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  if (n_integration_steps < 1) throw ConfigError("integration steps must be positive");
  if (hidden < 1) throw ConfigError("hidden width must be positive");
  if (!(rejection_rate > 0.0 && rejection_rate < 1.0)) throw ConfigError("rejection rate must lie in (0, 1)");
  if (calibration_size < 1) throw ConfigError("calibration size must be positive");
}

TrainResult train_stack(const Schedule& schedule, const TargetDensity& target, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto plan = schedule.steps();
  const Eigen::Index d = target.dim();
  TrainResult result{StackedSampler(d), {}};

  auto record = [&](std::size_t k, StepKind kind, const SampleBatch& pool) {
    const auto lz = log_z_estimate(pool, target);
    StepDiagnostics diag;
    diag.step = k;
    diag.kind = kind;
    diag.log_z = lz.value;
    diag.log_z_se = lz.standard_error;
    result.diagnostics.push_back(diag);
  };

  SampleBatch pool = sample_standard_normal(d, cfg.pool_size, rng);
  record(0, StepKind::Jko, pool);

  for (std::size_t k = 0; k < plan.size(); ++k) {
    try {
      if (plan[k].kind == StepKind::Jko) {
        JkoStepConfig jc;
        jc.tau = plan[k].tau;
        jc.n_integration_steps = cfg.n_integration_steps;
        jc.trace_mode = cfg.trace_mode.value_or(TraceMode::for_dim(d));
        jc.train_iters = cfg.train_iters;
        jc.batch_size = cfg.batch_size;
        jc.hidden = cfg.hidden;
        jc.learning_rate = cfg.learning_rate;
        jc.kinetic_weight = cfg.kinetic_weight;
        JkoStep step;
        step.net = train_jko_step(jc, pool.points, target, rng);
        step.tau = jc.tau;
        step.n_integration_steps = jc.n_integration_steps;
        step.trace_mode = jc.trace_mode;
        pool = propagate_samples(step, pool, rng);
        result.stack.push_back(std::move(step));
        record(k + 1, StepKind::Jko, pool);
      } else {
        const auto n_cal = std::min(cfg.calibration_size, pool.size());
        const SampleBatch cal_batch{pool.points.leftCols(n_cal), pool.log_density.head(n_cal)};
        const auto cal = select_c(cal_batch, target, cfg.rejection_rate);
        RejectionStepSpec spec;
        spec.log_c = cal.log_c;
        spec.mean_acceptance = cal.mean_acceptance;
        spec.target_rejection_rate = cfg.rejection_rate;
        spec.calibration_size = n_cal;
        const StackedSampler current = result.stack;
        Resampler resample = [&](Eigen::Index m) { return sample_with_density(current, target, m, rng); };
        RejectionStats stats;
        pool = apply_rejection_step(pool, target, spec, resample, rng, &stats);
        result.stack.push_back(spec);
        record(k + 1, StepKind::Rejection, pool);
        result.diagnostics.back().mean_acceptance = spec.mean_acceptance;
        result.diagnostics.back().rejected = stats.rejected;
      }
    } catch (const StepError& e) {
      throw StepError(std::string("while training step ") + std::to_string(k) + ": " + e.what(), k);
    } catch (const std::exception& e) {
      throw StepError(e.what(), k);
    }
  }
  return result;
}

}  // namespace jko

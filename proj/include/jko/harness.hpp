#pragma once

#include "jko/baselines.hpp"
#include "jko/metrics.hpp"
#include "jko/pipeline.hpp"
#include "jko/targets.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace jko {

enum class Method { JkoCorrected, JkoUncorrected, Mala, Hmc };

std::string_view method_name(Method m);
Method parse_method(std::string_view s);

struct ExperimentConfig {
  // [target]
  std::string target_kind = "shifted8modes";
  Eigen::Index dim = 2;
  std::uint64_t target_seed = 0;
  // [schedule]
  Schedule schedule = build_schedule(2, 4, 0.01);
  // [training]
  TrainConfig training;
  // [metrics]
  Eigen::Index n_samples = 5000;
  Eigen::Index reference_samples = 5000;
  Eigen::Index trace_samples = 2000;
  bool write_trace = true;
  // [baseline]
  Method method = Method::JkoCorrected;
  std::optional<McmcConfig> mcmc;  // unset: default_mcmc_config
  // [run]
  std::uint64_t seed = 0;
  int repetitions = 5;
  bool parallel = false;
  std::string out_dir = "out";

  TargetDensity make_target() const;
  McmcConfig mcmc_config() const;
  void validate() const;
};

// Known names: mustache, shifted8modes, shifted8peaky, funnel, gmm10, gmm20,
// gmm50, gmm100, gmm200. Sets target, dimension, schedule and hidden width;
// other fields keep their current values.
void apply_paper_defaults(ExperimentConfig& cfg, const std::string& name);

// Sectioned key/value text:
//   [target] kind, dim, seed
//   [schedule] n1, n2, tau0, growth, rejections_per_block, hidden
//   [training] pool_size, train_iters, batch_size, n_integration_steps,
//              learning_rate, kinetic_weight, rejection_rate,
//              calibration_size, trace_mode
//   [metrics] n_samples, reference_samples, trace_samples, write_trace
//   [baseline] method, step_size, n_steps, leapfrog_steps
//   [run] seed, repetitions, parallel, out, paper_defaults
// Unknown keys are rejected. `paper_defaults` is applied before the other keys.
ExperimentConfig parse_config(std::istream& is);
ExperimentConfig load_config(const std::string& path);
std::string config_to_text(const ExperimentConfig& cfg);

// Quality of the stack output after each step; row 0 is the latent.
struct TraceRow {
  std::size_t step = 0;
  std::string kind;
  double energy_distance = 0.0;
  std::optional<Estimate> log_z;
  std::optional<double> mode_mse;
};

struct RepetitionResult {
  std::uint64_t seed = 0;
  MetricReport report;
  std::vector<TraceRow> trace;
  std::vector<StepDiagnostics> diagnostics;
};

struct ExperimentResult {
  std::vector<RepetitionResult> repetitions;
  std::vector<MetricReport> reports() const;
};

// Trains (or runs the baseline), samples, evaluates against ground-truth
// draws and writes artifacts under cfg.out_dir/rep_<i>/, repeated with seeds
// derived from cfg.seed. A file INCOMPLETE marks a repetition directory whose
// run did not finish.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Per-step trace of a trained stack on `n` fresh samples.
std::vector<TraceRow> stack_trace(const StackedSampler& stack, const TargetDensity& target,
                                  const SampleBatch& reference, Eigen::Index n, Rng& rng);

struct SummaryRow {
  std::string method;
  std::string target;
  int repetitions = 0;
  Eigen::Index n_samples = 0;
  std::map<std::string, std::pair<double, double>> metrics;  // mean, std
};

// Groups reports by method x target and reduces each metric to mean and
// (sample) standard deviation over repetitions. Throws ArgumentError if empty.
std::vector<SummaryRow> summarize(const std::vector<MetricReport>& reports);
void emit_report(const std::vector<MetricReport>& reports, std::ostream& os);
void emit_report(const std::vector<MetricReport>& reports, const std::string& path);
void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& os);
// One row per step of train_stack diagnostics; row 0 is the latent.
void write_diagnostics_csv(const std::vector<StepDiagnostics>& diags, std::ostream& os);

}  // namespace jko

// Command line harness: train, sample, evaluate and benchmark importance
// corrected neural JKO samplers.

#include "jko/errors.hpp"
#include "jko/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct CommonOptions {
  std::string config_path;
  std::string paper_defaults;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> repetitions;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config file (sectioned key/value)");
  cmd->add_option("--paper-defaults", o.paper_defaults,
                  "Preset: mustache, shifted8modes, shifted8peaky, funnel, gmm10..gmm200");
  cmd->add_option("--seed", o.seed, "Global seed");
  cmd->add_option("--out", o.out, "Output path");
  cmd->add_option("--repetitions", o.repetitions, "Number of repetitions");
}

jko::ExperimentConfig resolve(const CommonOptions& o) {
  jko::ExperimentConfig cfg;
  if (!o.config_path.empty()) cfg = jko::load_config(o.config_path);
  if (!o.paper_defaults.empty()) jko::apply_paper_defaults(cfg, o.paper_defaults);
  if (o.seed) cfg.seed = *o.seed;
  if (o.repetitions) cfg.repetitions = *o.repetitions;
  return cfg;
}

std::vector<double> parse_point(const std::vector<std::string>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) {
    std::stringstream ss(p);
    std::string tok;
    while (std::getline(ss, tok, ','))
      if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Importance corrected neural JKO sampling"};
  app.require_subcommand(1);

  CommonOptions train_o, sample_o, eval_o, logd_o, bench_o;

  auto* train = app.add_subcommand("train", "Train a stack and write stack.jsonl + diagnostics.csv");
  add_common(train, train_o);

  auto* sample = app.add_subcommand("sample", "Draw samples with log-densities from a trained stack");
  add_common(sample, sample_o);
  std::string sample_stack;
  long sample_n = 0;
  sample->add_option("--stack", sample_stack, "Stack file")->required();
  sample->add_option("-n,--num", sample_n, "Number of samples (default: metrics.n_samples)");

  auto* eval = app.add_subcommand("eval", "Evaluate a sample CSV against ground-truth draws");
  add_common(eval, eval_o);
  std::string eval_samples;
  std::string eval_method = "samples";
  eval->add_option("--samples", eval_samples, "Sample CSV")->required();
  eval->add_option("--method", eval_method, "Method label for the report");

  auto* logd = app.add_subcommand("logdensity", "Evaluate the stack's log-density at a point");
  add_common(logd, logd_o);
  std::string logd_stack;
  std::vector<std::string> logd_point;
  logd->add_option("--stack", logd_stack, "Stack file")->required();
  logd->add_option("point", logd_point, "Coordinates, comma or space separated")->required();

  auto* bench = app.add_subcommand("bench", "Full benchmark row: train, sample, evaluate, repeat");
  add_common(bench, bench_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = resolve(train_o);
      cfg.validate();
      const std::string dir = train_o.out.empty() ? cfg.out_dir : train_o.out;
      std::filesystem::create_directories(dir);
      const auto target = cfg.make_target();
      jko::Rng rng(cfg.seed);
      jko::Schedule sched = cfg.schedule;
      if (cfg.method == jko::Method::JkoUncorrected) sched.rejections_per_block = 0;
      const auto res = jko::train_stack(sched, target, cfg.training, rng);
      res.stack.save(dir + "/stack.jsonl");
      std::ofstream os(dir + "/diagnostics.csv");
      jko::write_diagnostics_csv(res.diagnostics, os);
      std::cout << "wrote " << dir << "/stack.jsonl (" << res.stack.num_steps() << " steps)\n";
    } else if (*sample) {
      const auto cfg = resolve(sample_o);
      const auto target = cfg.make_target();
      const auto stack = jko::StackedSampler::load(sample_stack);
      jko::Rng rng(cfg.seed);
      const auto n = sample_n > 0 ? static_cast<Eigen::Index>(sample_n) : cfg.n_samples;
      const auto batch = jko::sample_with_density(stack, target, n, rng);
      if (sample_o.out.empty())
        jko::write_csv(std::cout, batch);
      else
        jko::write_csv(sample_o.out, batch);
    } else if (*eval) {
      const auto cfg = resolve(eval_o);
      const auto target = cfg.make_target();
      const auto samples = jko::read_csv(eval_samples);
      jko::Rng rng(jko::derive_seed(cfg.seed, 1));
      const auto reference = target.sample(cfg.reference_samples, rng);
      const auto rep = jko::evaluate_samples(samples, reference, target, eval_method);
      if (eval_o.out.empty())
        std::cout << rep.to_text();
      else
        std::ofstream(eval_o.out) << rep.to_text();
    } else if (*logd) {
      const auto cfg = resolve(logd_o);
      const auto target = cfg.make_target();
      const auto stack = jko::StackedSampler::load(logd_stack);
      const auto coords = parse_point(logd_point);
      if (static_cast<Eigen::Index>(coords.size()) != stack.dim())
        throw jko::ArgumentError("point has " + std::to_string(coords.size()) + " coordinates, stack has dimension " +
                                 std::to_string(stack.dim()));
      jko::Rng rng(cfg.seed);
      const jko::Vec x = Eigen::Map<const jko::Vec>(coords.data(), stack.dim());
      std::cout.precision(17);
      std::cout << jko::log_density_at(stack, target, x, rng) << '\n';
    } else if (*bench) {
      auto cfg = resolve(bench_o);
      if (!bench_o.out.empty()) cfg.out_dir = bench_o.out;
      const auto res = jko::run_experiment(cfg);
      jko::emit_report(res.reports(), std::cout);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

#include "jko/harness.hpp"

#include "jko/errors.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>

namespace jko {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

std::string_view method_name(Method m) {
  switch (m) {
    case Method::JkoCorrected: return "jko_ic";
    case Method::JkoUncorrected: return "jko";
    case Method::Mala: return "mala";
    case Method::Hmc: return "hmc";
  }
  return "unknown";
}

Method parse_method(std::string_view s) {
  if (s == "jko_ic") return Method::JkoCorrected;
  if (s == "jko") return Method::JkoUncorrected;
  if (s == "mala") return Method::Mala;
  if (s == "hmc") return Method::Hmc;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

TargetDensity ExperimentConfig::make_target() const {
  if (target_kind == "standard_normal") return make_standard_normal_target(dim);
  return jko::make_target(parse_target_kind(target_kind), dim, target_seed);
}

McmcConfig ExperimentConfig::mcmc_config() const {
  if (mcmc) return *mcmc;
  const auto kind = method == Method::Hmc ? McmcKind::Hmc : McmcKind::Mala;
  const auto tk = target_kind == "standard_normal" ? TargetKind::Custom : parse_target_kind(target_kind);
  return default_mcmc_config(kind, tk);
}

void ExperimentConfig::validate() const {
  schedule.validate();
  training.validate();
  if (n_samples < 1 || reference_samples < 1) throw ConfigError("sample counts must be positive");
  if (trace_samples < 1) throw ConfigError("trace sample count must be positive");
  if (repetitions < 1) throw ConfigError("repetitions must be positive");
  if (method == Method::Mala || method == Method::Hmc) mcmc_config().validate();
  (void)make_target();
}

void apply_paper_defaults(ExperimentConfig& cfg, const std::string& name) {
  struct Row {
    const char* target;
    Eigen::Index dim;
    int n1, n2;
    double tau0;
    Eigen::Index hidden;
  };
  static const std::map<std::string, Row> table = {
      {"mustache", {"mustache", 2, 6, 6, 0.05, 54}},
      {"shifted8modes", {"shifted8modes", 2, 2, 4, 0.01, 54}},
      {"shifted8peaky", {"shifted8peaky", 2, 2, 4, 0.01, 54}},
      {"funnel", {"funnel", 10, 6, 6, 5.0, 256}},
      {"gmm10", {"gmm", 10, 4, 6, 0.0025, 70}},
      {"gmm20", {"gmm", 20, 4, 6, 0.0025, 90}},
      {"gmm50", {"gmm", 50, 4, 7, 0.0025, 150}},
      {"gmm100", {"gmm", 100, 4, 8, 0.0025, 250}},
      {"gmm200", {"gmm", 200, 5, 8, 0.001, 512}},
  };
  const auto it = table.find(name);
  if (it == table.end()) throw ConfigError("no paper defaults for '" + name + "'");
  const Row& r = it->second;
  cfg.target_kind = r.target;
  cfg.dim = r.dim;
  cfg.schedule.n1 = r.n1;
  cfg.schedule.n2 = r.n2;
  cfg.schedule.tau0 = r.tau0;
  cfg.schedule.growth = 4.0;
  cfg.schedule.rejections_per_block = 3;
  cfg.training.hidden = r.hidden;
}

namespace {

template <class T>
T get_value(const pt::ptree& tree, const std::string& key) {
  try {
    return tree.get<T>(key);
  } catch (const pt::ptree_error& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("bad boolean '" + s + "'");
}

}  // namespace

ExperimentConfig parse_config(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  static const std::map<std::string, std::set<std::string>> known = {
      {"target", {"kind", "dim", "seed"}},
      {"schedule", {"n1", "n2", "tau0", "growth", "rejections_per_block", "hidden"}},
      {"training",
       {"pool_size", "train_iters", "batch_size", "n_integration_steps", "learning_rate", "kinetic_weight",
        "rejection_rate", "calibration_size", "trace_mode"}},
      {"metrics", {"n_samples", "reference_samples", "trace_samples", "write_trace"}},
      {"baseline", {"method", "step_size", "n_steps", "leapfrog_steps"}},
      {"run", {"seed", "repetitions", "parallel", "out", "paper_defaults"}},
  };
  for (const auto& [section, sub] : tree) {
    const auto ks = known.find(section);
    if (ks == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, unused] : sub)
      if (!ks->second.count(key)) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }

  ExperimentConfig cfg;
  if (auto v = tree.get_optional<std::string>("run.paper_defaults")) apply_paper_defaults(cfg, *v);

  if (auto v = tree.get_optional<std::string>("target.kind")) cfg.target_kind = *v;
  if (tree.get_optional<std::string>("target.dim")) cfg.dim = get_value<Eigen::Index>(tree, "target.dim");
  if (tree.get_optional<std::string>("target.seed")) cfg.target_seed = get_value<std::uint64_t>(tree, "target.seed");

  if (tree.get_optional<std::string>("schedule.n1")) cfg.schedule.n1 = get_value<int>(tree, "schedule.n1");
  if (tree.get_optional<std::string>("schedule.n2")) cfg.schedule.n2 = get_value<int>(tree, "schedule.n2");
  if (tree.get_optional<std::string>("schedule.tau0")) cfg.schedule.tau0 = get_value<double>(tree, "schedule.tau0");
  if (tree.get_optional<std::string>("schedule.growth"))
    cfg.schedule.growth = get_value<double>(tree, "schedule.growth");
  if (tree.get_optional<std::string>("schedule.rejections_per_block"))
    cfg.schedule.rejections_per_block = get_value<int>(tree, "schedule.rejections_per_block");
  if (tree.get_optional<std::string>("schedule.hidden"))
    cfg.training.hidden = get_value<Eigen::Index>(tree, "schedule.hidden");

  auto& tr = cfg.training;
  if (tree.get_optional<std::string>("training.pool_size")) tr.pool_size = get_value<Eigen::Index>(tree, "training.pool_size");
  if (tree.get_optional<std::string>("training.train_iters")) tr.train_iters = get_value<int>(tree, "training.train_iters");
  if (tree.get_optional<std::string>("training.batch_size")) tr.batch_size = get_value<int>(tree, "training.batch_size");
  if (tree.get_optional<std::string>("training.n_integration_steps"))
    tr.n_integration_steps = get_value<int>(tree, "training.n_integration_steps");
  if (tree.get_optional<std::string>("training.learning_rate"))
    tr.learning_rate = get_value<double>(tree, "training.learning_rate");
  if (tree.get_optional<std::string>("training.kinetic_weight"))
    tr.kinetic_weight = get_value<double>(tree, "training.kinetic_weight");
  if (tree.get_optional<std::string>("training.rejection_rate"))
    tr.rejection_rate = get_value<double>(tree, "training.rejection_rate");
  if (tree.get_optional<std::string>("training.calibration_size"))
    tr.calibration_size = get_value<Eigen::Index>(tree, "training.calibration_size");
  if (auto v = tree.get_optional<std::string>("training.trace_mode")) tr.trace_mode = TraceMode::parse(*v);

  if (tree.get_optional<std::string>("metrics.n_samples")) cfg.n_samples = get_value<Eigen::Index>(tree, "metrics.n_samples");
  if (tree.get_optional<std::string>("metrics.reference_samples"))
    cfg.reference_samples = get_value<Eigen::Index>(tree, "metrics.reference_samples");
  if (tree.get_optional<std::string>("metrics.trace_samples"))
    cfg.trace_samples = get_value<Eigen::Index>(tree, "metrics.trace_samples");
  if (auto v = tree.get_optional<std::string>("metrics.write_trace")) cfg.write_trace = parse_bool(*v);

  if (auto v = tree.get_optional<std::string>("baseline.method")) cfg.method = parse_method(*v);
  if (tree.get_optional<std::string>("baseline.step_size") || tree.get_optional<std::string>("baseline.n_steps") ||
      tree.get_optional<std::string>("baseline.leapfrog_steps")) {
    McmcConfig m = cfg.mcmc_config();
    if (tree.get_optional<std::string>("baseline.step_size")) m.step_size = get_value<double>(tree, "baseline.step_size");
    if (tree.get_optional<std::string>("baseline.n_steps")) m.n_steps = get_value<int>(tree, "baseline.n_steps");
    if (tree.get_optional<std::string>("baseline.leapfrog_steps"))
      m.leapfrog_steps = get_value<int>(tree, "baseline.leapfrog_steps");
    cfg.mcmc = m;
  }

  if (tree.get_optional<std::string>("run.seed")) cfg.seed = get_value<std::uint64_t>(tree, "run.seed");
  if (tree.get_optional<std::string>("run.repetitions")) cfg.repetitions = get_value<int>(tree, "run.repetitions");
  if (auto v = tree.get_optional<std::string>("run.parallel")) cfg.parallel = parse_bool(*v);
  if (auto v = tree.get_optional<std::string>("run.out")) cfg.out_dir = *v;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path);
  return parse_config(is);
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "[target]\nkind = " << cfg.target_kind << "\ndim = " << cfg.dim << "\nseed = " << cfg.target_seed << "\n\n";
  os << "[schedule]\nn1 = " << cfg.schedule.n1 << "\nn2 = " << cfg.schedule.n2 << "\ntau0 = " << cfg.schedule.tau0
     << "\ngrowth = " << cfg.schedule.growth << "\nrejections_per_block = " << cfg.schedule.rejections_per_block
     << "\nhidden = " << cfg.training.hidden << "\n\n";
  const auto& t = cfg.training;
  os << "[training]\npool_size = " << t.pool_size << "\ntrain_iters = " << t.train_iters
     << "\nbatch_size = " << t.batch_size << "\nn_integration_steps = " << t.n_integration_steps
     << "\nlearning_rate = " << t.learning_rate << "\nkinetic_weight = " << t.kinetic_weight
     << "\nrejection_rate = " << t.rejection_rate << "\ncalibration_size = " << t.calibration_size << '\n';
  if (t.trace_mode) os << "trace_mode = " << t.trace_mode->to_string() << '\n';
  os << "\n[metrics]\nn_samples = " << cfg.n_samples << "\nreference_samples = " << cfg.reference_samples
     << "\ntrace_samples = " << cfg.trace_samples << "\nwrite_trace = " << (cfg.write_trace ? "true" : "false")
     << "\n\n";
  os << "[baseline]\nmethod = " << method_name(cfg.method) << '\n';
  if (cfg.mcmc)
    os << "step_size = " << cfg.mcmc->step_size << "\nn_steps = " << cfg.mcmc->n_steps
       << "\nleapfrog_steps = " << cfg.mcmc->leapfrog_steps << '\n';
  os << "\n[run]\nseed = " << cfg.seed << "\nrepetitions = " << cfg.repetitions
     << "\nparallel = " << (cfg.parallel ? "true" : "false") << "\nout = " << cfg.out_dir << '\n';
  return os.str();
}

std::vector<MetricReport> ExperimentResult::reports() const {
  std::vector<MetricReport> out;
  for (const auto& r : repetitions) out.push_back(r.report);
  return out;
}

std::vector<TraceRow> stack_trace(const StackedSampler& stack, const TargetDensity& target,
                                  const SampleBatch& reference, Eigen::Index n, Rng& rng) {
  std::vector<TraceRow> rows;
  auto add = [&](std::size_t k, std::string kind, const SampleBatch& b) {
    TraceRow row;
    row.step = k;
    row.kind = std::move(kind);
    row.energy_distance = energy_distance(b.points, reference.points);
    row.log_z = log_z_estimate(b, target);
    if (const auto* g = target.gmm()) row.mode_mse = mode_mse(b.points, *g);
    rows.push_back(std::move(row));
  };
  SampleBatch batch = sample_standard_normal(stack.dim(), n, rng);
  add(0, "latent", batch);
  for (std::size_t k = 0; k < stack.num_steps(); ++k) {
    const auto& step = stack.steps()[k];
    if (const auto* j = std::get_if<JkoStep>(&step)) {
      batch = propagate_samples(*j, batch, rng);
      add(k + 1, "jko", batch);
    } else {
      const auto prefix = stack.prefix(k);
      Resampler resample = [&](Eigen::Index m) { return sample_with_density(prefix, target, m, rng); };
      batch = apply_rejection_step(batch, target, std::get<RejectionStepSpec>(step), resample, rng);
      add(k + 1, "rejection", batch);
    }
  }
  return rows;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& os) {
  os.precision(17);
  os << "step,kind,energy_distance,log_z,log_z_se,mode_mse\n";
  for (const auto& r : trace) {
    os << r.step << ',' << r.kind << ',' << r.energy_distance << ',';
    if (r.log_z) os << r.log_z->value << ',' << r.log_z->standard_error;
    else os << ',';
    os << ',';
    if (r.mode_mse) os << *r.mode_mse;
    os << '\n';
  }
}

void write_diagnostics_csv(const std::vector<StepDiagnostics>& diags, std::ostream& os) {
  os.precision(17);
  os << "step,kind,log_z,log_z_se,mean_acceptance,rejected\n";
  for (const auto& d : diags)
    os << d.step << ',' << (d.kind == StepKind::Jko ? (d.step == 0 ? "latent" : "jko") : "rejection") << ','
       << d.log_z << ',' << d.log_z_se << ',' << d.mean_acceptance << ',' << d.rejected << '\n';
}

namespace {

RepetitionResult run_repetition(const ExperimentConfig& cfg, int rep) {
  RepetitionResult res;
  res.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
  const fs::path dir = fs::path(cfg.out_dir) / ("rep_" + std::to_string(rep));
  fs::create_directories(dir);
  const fs::path marker = dir / "INCOMPLETE";
  std::ofstream(marker) << "run started\n";

  const auto target = cfg.make_target();
  Rng ref_rng(derive_seed(res.seed, 1));
  const SampleBatch reference = target.sample(cfg.reference_samples, ref_rng);
  Rng rng(derive_seed(res.seed, 2));

  SampleBatch samples;
  switch (cfg.method) {
    case Method::JkoCorrected:
    case Method::JkoUncorrected: {
      Schedule sched = cfg.schedule;
      if (cfg.method == Method::JkoUncorrected) sched.rejections_per_block = 0;
      auto trained = train_stack(sched, target, cfg.training, rng);
      trained.stack.save((dir / "stack.jsonl").string());
      samples = sample_with_density(trained.stack, target, cfg.n_samples, rng);
      res.diagnostics = std::move(trained.diagnostics);
      std::ofstream diag(dir / "diagnostics.csv");
      write_diagnostics_csv(res.diagnostics, diag);
      if (cfg.write_trace) {
        Rng trace_rng(derive_seed(res.seed, 3));
        res.trace = stack_trace(trained.stack, target, reference, cfg.trace_samples, trace_rng);
        std::ofstream os(dir / "trace.csv");
        write_trace_csv(res.trace, os);
      }
      break;
    }
    case Method::Mala:
      samples = mala_sample(target, cfg.n_samples, cfg.mcmc_config(), rng).samples;
      break;
    case Method::Hmc:
      samples = hmc_sample(target, cfg.n_samples, cfg.mcmc_config(), rng).samples;
      break;
  }
  write_csv((dir / "samples.csv").string(), samples);
  res.report = evaluate_samples(samples, reference, target, std::string(method_name(cfg.method)));
  std::ofstream(dir / "report.txt") << res.report.to_text();
  fs::remove(marker);
  return res;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  fs::create_directories(cfg.out_dir);
  std::ofstream(fs::path(cfg.out_dir) / "config.ini") << config_to_text(cfg);
  ExperimentResult result;
  if (cfg.parallel) {
    std::vector<std::future<RepetitionResult>> jobs;
    for (int rep = 0; rep < cfg.repetitions; ++rep)
      jobs.push_back(std::async(std::launch::async, run_repetition, std::cref(cfg), rep));
    for (auto& j : jobs) result.repetitions.push_back(j.get());
  } else {
    for (int rep = 0; rep < cfg.repetitions; ++rep) result.repetitions.push_back(run_repetition(cfg, rep));
  }
  emit_report(result.reports(), (fs::path(cfg.out_dir) / "summary.csv").string());
  return result;
}

std::vector<SummaryRow> summarize(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw ArgumentError("no reports to summarize");
  std::map<std::pair<std::string, std::string>, std::vector<const MetricReport*>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : reports) {
    auto key = std::make_pair(r.method, r.target);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::vector<SummaryRow> rows;
  for (const auto& key : order) {
    const auto& g = groups[key];
    SummaryRow row;
    row.method = key.first;
    row.target = key.second;
    row.repetitions = static_cast<int>(g.size());
    row.n_samples = g.front()->n_samples;
    std::map<std::string, std::vector<double>> cols;
    for (const auto* r : g)
      for (const auto& [k, v] : r->values())
        if (k != "n_samples") cols[k].push_back(v);
    for (const auto& [k, v] : cols) row.metrics[k] = {mean_of(v), sd_of(v)};
    rows.push_back(std::move(row));
  }
  return rows;
}

void emit_report(const std::vector<MetricReport>& reports, std::ostream& os) {
  const auto rows = summarize(reports);
  static const char* metrics[] = {"energy_distance", "log_z", "mode_mse"};
  os.precision(17);
  os << "method,target,repetitions,n_samples";
  for (const char* m : metrics) os << ',' << m << "_mean," << m << "_std," << m << "_se_mean";
  os << '\n';
  for (const auto& r : rows) {
    os << r.method << ',' << r.target << ',' << r.repetitions << ',' << r.n_samples;
    for (const char* m : metrics) {
      const auto it = r.metrics.find(m);
      const auto se = r.metrics.find(std::string(m) + "_se");
      if (it == r.metrics.end()) {
        os << ",,,";
      } else {
        os << ',' << it->second.first << ',' << it->second.second << ',';
        if (se != r.metrics.end()) os << se->second.first;
      }
    }
    os << '\n';
  }
}

void emit_report(const std::vector<MetricReport>& reports, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw ArgumentError("cannot open " + path + " for writing");
  emit_report(reports, os);
}

}  // namespace jko

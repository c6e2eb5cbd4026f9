#include "ivfrailty/cli.hpp"

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "ivfrailty/io.hpp"
#include "ivfrailty/mcem.hpp"
#include "ivfrailty/simulation.hpp"

namespace ivfrailty {

namespace {

struct CommonOptions {
  std::optional<int> draws;
  double epsilon = 1e-3;
  int max_iter = 200;
  bool estimate_sigma_u = false;
  std::uint64_t seed = 1;
  std::string out_path;
  std::string format = "json";
  int jobs = 1;
};

void add_common(CLI::App& cmd, CommonOptions& o) {
  cmd.add_option("--B", o.draws, "Monte Carlo draws per subject (fit: 100, simulate: 40)")->check(CLI::PositiveNumber);
  cmd.add_option("--epsilon", o.epsilon, "EM convergence threshold on the max parameter change")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  cmd.add_option("--max-iter", o.max_iter, "EM iteration cap")->capture_default_str()->check(CLI::PositiveNumber);
  cmd.add_flag("--estimate-sigma-u", o.estimate_sigma_u, "Estimate the frailty SD instead of fixing it at 1");
  cmd.add_option("--seed", o.seed, "Random seed")->capture_default_str();
  cmd.add_option("--out", o.out_path, "Write the result here instead of standard output");
  cmd.add_option("--format", o.format, "Output format")->capture_default_str()->check(CLI::IsMember({"json", "csv"}));
  cmd.add_option("--jobs", o.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
}

EMConfig em_config(const CommonOptions& o, int default_draws) {
  EMConfig em;
  em.draws = o.draws.value_or(default_draws);
  em.epsilon = o.epsilon;
  em.max_iter = o.max_iter;
  em.estimate_sigma_u = o.estimate_sigma_u;
  em.seed = o.seed;
  return em;
}

// Writes to --out when given, otherwise to `out`.
void emit(const CommonOptions& o, std::ostream& out, const std::string& text) {
  if (o.out_path.empty()) {
    out << text;
    return;
  }
  std::ofstream file(o.out_path, std::ios::binary);
  if (!file) throw Error(ErrorKind::InputFormat, "cannot write '" + o.out_path + "'");
  file << text;
}

int cmd_fit(const std::string& input, const CommonOptions& o, int n_boot, std::ostream& out, std::ostream& err) {
  const CsvTable table = read_subjects_csv(input);
  const DesignSpec design = DesignSpec::standard(table.p, table.K);
  Dataset data = validate_dataset(table.records, design, TiePolicy::Reject);
  const EMConfig em = em_config(o, 100);

  FitResult fit = run_em(data, design, em);
  std::optional<BootstrapResult> boot;
  if (n_boot > 0) boot = bootstrap_se(data, design, em, n_boot, o.jobs);

  std::ostringstream text;
  if (o.format == "csv") {
    write_fit_csv(text, fit, boot);
  } else {
    text << fit_to_json(fit, boot).dump(2) << '\n';
  }
  emit(o, out, text.str());
  for (const auto& w : fit.warnings) err << "warning: " << w << '\n';
  if (!fit.converged) {
    err << "error: EM did not converge within " << em.max_iter << " iterations\n";
    return kExitNonConvergence;
  }
  return kExitOk;
}

int cmd_simulate(int scenario, int n, int reps, const CommonOptions& o, std::ostream& out) {
  const ScenarioSpec spec = ScenarioSpec::preset(scenario, n);
  SimulationConfig config;
  config.em = em_config(o, 40);
  config.seed = o.seed;
  config.jobs = o.jobs;
  const SimulationReport report = run_replications(spec, reps, config);

  if (!o.out_path.empty()) {
    std::ostringstream text;
    if (o.format == "csv") {
      write_summaries_csv(text, report);
    } else {
      text << summaries_to_json(report).dump(2) << '\n';
    }
    emit(o, out, text.str());
  }
  write_summary_table(out, report);
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Instrumental-variable Cox regression with a correlated frailty, fitted by Monte Carlo EM"};
  app.name("ivfrailty");
  app.require_subcommand(1);

  CommonOptions fit_opts;
  std::string input;
  int n_boot = 0;
  auto* fit = app.add_subcommand("fit", "Fit a dataset given as CSV (time,status,treatment,x1..xp,z1..zK)");
  fit->add_option("INPUT", input, "Input CSV file")->required();
  fit->add_option("--bootstrap", n_boot, "Bootstrap resamples for standard errors")->check(CLI::NonNegativeNumber);
  add_common(*fit, fit_opts);

  CommonOptions sim_opts;
  int scenario = 1;
  int n = 200;
  int reps = 100;
  auto* sim = app.add_subcommand("simulate", "Run a simulation scenario and summarise the three estimators");
  sim->add_option("--scenario", scenario, "Scenario id, 1..7")->capture_default_str();
  sim->add_option("--n", n, "Subjects per replication")->capture_default_str()->check(CLI::PositiveNumber);
  sim->add_option("--reps", reps, "Replications")->capture_default_str()->check(CLI::PositiveNumber);
  add_common(*sim, sim_opts);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (!app.get_subcommands().empty()) {
      err << app.get_subcommands().front()->help();
    } else {
      err << app.help();
    }
    return kExitInputError;
  }

  try {
    if (*fit) return cmd_fit(input, fit_opts, n_boot, out, err);
    return cmd_simulate(scenario, n, reps, sim_opts, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitInputError;
  }
}

}  // namespace ivfrailty

#include "ivfrailty/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ivfrailty/cox.hpp"
#include "ivfrailty/parallel.hpp"

namespace ivfrailty {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

ScenarioSpec ScenarioSpec::preset(int id, int n) {
  ScenarioSpec s;
  s.id = id;
  s.n = n;
  switch (id) {
    case 1: break;
    case 2: s.sigma_u2 = 0.1; break;
    case 3: s.correlation = 0.1; break;
    case 4: s.alpha_wz = 0.1; break;
    case 5: s.treatment_family = TreatmentFamily::Logistic; break;
    case 6: s.frailty_family = FrailtyFamily::CenteredGamma; break;
    case 7: s.frailty_family = FrailtyFamily::StudentT; break;
    default: throw Error(ErrorKind::InvalidSpec, "scenario id must be in 1..7, got " + std::to_string(id));
  }
  return s;
}

void ScenarioSpec::validate() const {
  if (id < 1 || id > 7) throw Error(ErrorKind::InvalidSpec, "scenario id must be in 1..7");
  if (n < 1) throw Error(ErrorKind::InvalidSpec, "n must be positive");
  if (!(sigma_u2 > 0.0)) throw Error(ErrorKind::InvalidSpec, "sigma_u^2 must be positive");
  if (!(std::abs(correlation) < 1.0)) throw Error(ErrorKind::InvalidSpec, "|sigma_uv / sigma_u| must be < 1");
  if (!(censor_rate > 0.0)) throw Error(ErrorKind::InvalidSpec, "censoring rate must be positive");
  if (!std::isfinite(alpha_wz) || !std::isfinite(beta_w) || !std::isfinite(beta_x)) {
    throw Error(ErrorKind::InvalidSpec, "non-finite coefficient");
  }
}

double ScenarioSpec::sigma_u() const { return std::sqrt(sigma_u2); }
double ScenarioSpec::true_hazard_ratio() const { return std::exp(beta_w); }

bool ScenarioSpec::correctly_specified() const {
  return treatment_family == TreatmentFamily::Probit && frailty_family == FrailtyFamily::BivariateNormal;
}

SimulatedData generate(const ScenarioSpec& spec, SeededStream& stream) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.n);
  std::vector<double> x(n), z(n), v(n), u(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = sample(Uniform{-1.0, 1.0}, stream);
    z[i] = sample(Gamma{2.0, 2.0}, stream);
    switch (spec.frailty_family) {
      case FrailtyFamily::BivariateNormal:
        if (spec.treatment_family == TreatmentFamily::Logistic) {
          v[i] = sample(Logistic{0.0, 1.0}, stream);
          u[i] = 0.45 * v[i] + sample(Normal{0.0, 1.0}, stream);
        } else {
          std::tie(v[i], u[i]) = sample(BivariateNormal{spec.correlation, spec.sigma_u()}, stream);
        }
        break;
      case FrailtyFamily::CenteredGamma:
        v[i] = sample(Normal{0.0, 1.0}, stream);
        u[i] = sample(Gamma{0.15 * std::exp(v[i]), 1.0}, stream);
        break;
      case FrailtyFamily::StudentT:
        v[i] = sample(Normal{0.0, 1.0}, stream);
        u[i] = sample(StudentT{0.5 * v[i], 4.0}, stream);
        break;
    }
  }
  if (spec.frailty_family == FrailtyFamily::CenteredGamma) {
    const double mean = std::accumulate(u.begin(), u.end(), 0.0) / static_cast<double>(n);
    for (auto& ui : u) ui -= mean;
  }

  SimulatedData out;
  out.latent_u.resize(static_cast<Eigen::Index>(n));
  std::vector<SubjectRecord> records(n);
  std::size_t censored = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool treated = spec.alpha_wz * z[i] + v[i] >= 0.0;
    const double risk = spec.beta_w * (treated ? 1.0 : 0.0) + spec.beta_x * x[i] + u[i];
    const double event_time = -std::log(stream.uniform()) / std::exp(risk);
    const double censor_time = sample(Exponential{spec.censor_rate}, stream);
    auto& r = records[i];
    r.event = event_time <= censor_time;
    r.time = r.event ? event_time : censor_time;
    r.treated = treated;
    r.covariates = VectorXd::Constant(1, x[i]);
    r.instruments = VectorXd::Constant(1, z[i]);
    out.latent_u[static_cast<Eigen::Index>(i)] = u[i];
    if (!r.event) ++censored;
  }
  out.censoring_fraction = static_cast<double>(censored) / static_cast<double>(n);
  out.dataset = validate_dataset(std::move(records), DesignSpec::standard(1, 1), TiePolicy::Jitter, stream.seed());
  return out;
}

ReplicationSummary summarize(std::span<const double> estimates, double truth) {
  if (estimates.empty()) throw Error(ErrorKind::EmptyEstimates, "no estimates to summarise");
  std::vector<double> sorted(estimates.begin(), estimates.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  ReplicationSummary s;
  s.truth = truth;
  s.n_ok = static_cast<int>(n);
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  double se = 0.0;
  for (double e : sorted) {
    ss += (e - s.mean) * (e - s.mean);
    se += (e - truth) * (e - truth);
  }
  s.sd_defined = n > 1;
  s.sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.min = sorted.front();
  s.max = sorted.back();
  s.rmse = std::sqrt(se / static_cast<double>(n));
  s.cv = s.sd / s.mean;
  return s;
}

ReplicationRecord run_replication(const ScenarioSpec& spec, int replication, const SimulationConfig& config) {
  SeededStream stream(config.seed, static_cast<std::uint64_t>(replication));
  SimulatedData data = generate(spec, stream);
  ReplicationRecord rec;
  rec.replication = replication;
  rec.censoring_fraction = data.censoring_fraction;

  const DesignSpec design = DesignSpec::standard(1, 1);
  const ModelFrame frame = make_frame(data.dataset, design);
  const VectorXd zero = VectorXd::Zero(frame.size());

  const auto cox_outcome = [&](const MatrixXd& X) {
    CoxOutcome out;
    try {
      CoxFit fit = fit_cox(X, frame.time, frame.event, zero);
      out.ok = fit.converged;
      out.beta = std::move(fit.beta);
      if (!out.ok) out.error = "Cox fit did not converge";
    } catch (const Error& e) {
      out.error = e.what();
    }
    return out;
  };
  rec.ordinary = cox_outcome(frame.hazard_design);
  MatrixXd with_u(frame.size(), frame.hazard_design.cols() + 1);
  with_u << frame.hazard_design, data.latent_u;
  rec.infeasible = cox_outcome(with_u);

  EMConfig em = config.em;
  em.seed = mix_stream_id(config.em.seed, static_cast<std::uint64_t>(replication));
  try {
    FitResult fit = run_em(data.dataset, design, em);
    rec.proposed = fit.parameters;
    rec.proposed_iterations = fit.iterations;
    rec.proposed_ok = fit.converged;
    if (!fit.converged) rec.proposed_error = "EM reached max_iter without converging";
  } catch (const Error& e) {
    rec.proposed_error = e.what();
  }
  return rec;
}

namespace {

template <typename Pick>
ReplicationSummary summary_row(std::span<const ReplicationRecord> records, const std::string& estimator,
                               const std::string& parameter, double truth, Pick&& pick) {
  std::vector<double> values;
  int failed = 0;
  for (const auto& r : records) {
    if (auto v = pick(r)) {
      values.push_back(*v);
    } else {
      ++failed;
    }
  }
  ReplicationSummary s;
  if (!values.empty()) {
    s = summarize(values, truth);
  } else {
    s.truth = truth;
    s.mean = s.sd = s.median = s.min = s.max = s.rmse = s.cv = kNaN;
    s.sd_defined = false;
  }
  s.estimator = estimator;
  s.parameter = parameter;
  s.n_failed = failed;
  return s;
}

}  // namespace

std::vector<ReplicationSummary> summarize_replications(const ScenarioSpec& spec,
                                                       std::span<const ReplicationRecord> records) {
  using Opt = std::optional<double>;
  const double hr = spec.true_hazard_ratio();
  std::vector<ReplicationSummary> rows;
  rows.push_back(summary_row(records, "Proposed", "hazard_ratio", hr, [](const ReplicationRecord& r) {
    return r.proposed_ok ? Opt(std::exp(r.proposed.beta[0])) : std::nullopt;
  }));
  rows.push_back(summary_row(records, "Ordinary", "hazard_ratio", hr, [](const ReplicationRecord& r) {
    return r.ordinary.ok ? Opt(std::exp(r.ordinary.beta[0])) : std::nullopt;
  }));
  rows.push_back(summary_row(records, "Ordinary-infeasible", "hazard_ratio", hr, [](const ReplicationRecord& r) {
    return r.infeasible.ok ? Opt(std::exp(r.infeasible.beta[0])) : std::nullopt;
  }));

  const bool specified = spec.correctly_specified();
  const auto proposed = [](auto get) {
    return [get](const ReplicationRecord& r) { return r.proposed_ok ? Opt(get(r.proposed)) : std::nullopt; };
  };
  rows.push_back(summary_row(records, "Proposed", "beta_w", spec.beta_w, proposed([](const ParameterSet& p) { return p.beta[0]; })));
  rows.push_back(summary_row(records, "Proposed", "beta_x", spec.beta_x, proposed([](const ParameterSet& p) { return p.beta[1]; })));
  rows.push_back(summary_row(records, "Proposed", "alpha_z", specified ? spec.alpha_wz : kNaN,
                             proposed([](const ParameterSet& p) { return p.alpha[0]; })));
  rows.push_back(summary_row(records, "Proposed", "alpha_x", specified ? 0.0 : kNaN,
                             proposed([](const ParameterSet& p) { return p.alpha[1]; })));
  rows.push_back(summary_row(records, "Proposed", "rho", specified ? spec.correlation : kNaN,
                             proposed([](const ParameterSet& p) { return p.rho; })));
  rows.push_back(summary_row(records, "Proposed", "sigma_u", specified ? spec.sigma_u() : kNaN,
                             proposed([](const ParameterSet& p) { return p.sigma_u; })));
  return rows;
}

SimulationReport run_replications(const ScenarioSpec& spec, int reps, const SimulationConfig& config) {
  spec.validate();
  config.em.validate();
  if (reps < 1) throw Error(ErrorKind::InvalidSpec, "reps must be >= 1");
  SimulationReport report;
  report.spec = spec;
  report.reps = reps;
  report.records.resize(static_cast<std::size_t>(reps));
  parallel_for(report.records.size(), config.jobs,
               [&](std::size_t r) { report.records[r] = run_replication(spec, static_cast<int>(r), config); });
  report.summaries = summarize_replications(spec, report.records);
  return report;
}

}  // namespace ivfrailty

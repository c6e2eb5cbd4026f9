#include "ivfrailty/mcem.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <string>

#include "ivfrailty/parallel.hpp"
#include "ivfrailty/random.hpp"

namespace ivfrailty {

void EMConfig::validate() const {
  if (draws < 1) throw Error(ErrorKind::InvalidParameter, "B must be >= 1");
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidParameter, "epsilon must be positive");
  if (max_iter < 1) throw Error(ErrorKind::InvalidParameter, "max_iter must be >= 1");
  if (!(sigma_u > 0.0) || !std::isfinite(sigma_u)) throw Error(ErrorKind::InvalidParameter, "sigma_u must be positive");
  if (fixed_rho && !(std::abs(*fixed_rho) <= kRhoCap)) {
    throw Error(ErrorKind::InvalidParameter, "fixed rho outside [-rho_cap, rho_cap]");
  }
}

namespace {

// FNV-1a over the bit patterns of a record.
std::uint64_t record_key(const SubjectRecord& r) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  const auto mix = [&h](std::uint64_t bits) {
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (bits >> (8 * byte)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  };
  const auto mix_double = [&](double v) { mix(std::bit_cast<std::uint64_t>(v == 0.0 ? 0.0 : v)); };
  mix_double(r.time);
  mix(r.event ? 1 : 0);
  mix(r.treated ? 1 : 0);
  for (double v : r.covariates) mix_double(v);
  for (double v : r.instruments) mix_double(v);
  return h;
}

bool canonical_less(const SubjectRecord& a, const SubjectRecord& b) {
  if (a.time != b.time) return a.time < b.time;
  if (a.event != b.event) return a.event < b.event;
  if (a.treated != b.treated) return a.treated < b.treated;
  const auto lex = [](const VectorXd& x, const VectorXd& y) {
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
  };
  if (lex(a.covariates, b.covariates)) return true;
  if (lex(b.covariates, a.covariates)) return false;
  return lex(a.instruments, b.instruments);
}

Dataset canonical(const Dataset& dataset) {
  Dataset out = dataset;
  std::stable_sort(out.records.begin(), out.records.end(), canonical_less);
  return out;
}

double max_abs_diff(const VectorXd& a, const VectorXd& b) {
  return a.size() ? (a - b).cwiseAbs().maxCoeff() : 0.0;
}

double parameter_change(const ParameterSet& a, const ParameterSet& b) {
  return std::max({max_abs_diff(a.beta, b.beta), max_abs_diff(a.alpha, b.alpha), std::abs(a.rho - b.rho),
                   std::abs(a.sigma_u - b.sigma_u)});
}

}  // namespace

EMProblem::EMProblem(const Dataset& dataset, const DesignSpec& design)
    : EMProblem(canonical(dataset), design, 0) {}

EMProblem::EMProblem(const Dataset& sorted, const DesignSpec& design, int)
    : design_(design), frame_(make_frame(sorted, design)), risk_index_(frame_.time, frame_.event) {
  keys_.reserve(sorted.size());
  for (const auto& r : sorted.records) keys_.push_back(record_key(r));
}

EMState initialize(const EMProblem& problem, const EMConfig& config) {
  config.validate();
  const auto& frame = problem.frame();
  const VectorXd zero = VectorXd::Zero(frame.size());
  EMState state;
  state.parameters.alpha = fit_probit(frame.treatment_design, frame.treated).alpha;
  state.parameters.beta = fit_cox(frame.hazard_design, problem.risk_index(), frame.event, zero).beta;
  state.parameters.rho = config.fixed_rho.value_or(0.0);
  state.parameters.sigma_u = config.sigma_u;
  state.baseline = breslow_update(state.parameters.beta, frame.hazard_design, frame.time, problem.risk_index(),
                                  frame.event, zero);
  return state;
}

MatrixXd standard_draws(const EMProblem& problem, const EMConfig& config, int iteration) {
  const auto& keys = problem.subject_keys();
  const auto n = static_cast<Eigen::Index>(keys.size());
  const std::uint64_t round = config.draw_mode == DrawMode::Frozen ? 0 : static_cast<std::uint64_t>(iteration) + 1;
  MatrixXd z(n, config.draws);
  for (Eigen::Index i = 0; i < n; ++i) {
    SeededStream stream(config.seed, mix_stream_id(keys[static_cast<std::size_t>(i)], round));
    for (Eigen::Index b = 0; b < z.cols(); ++b) z(i, b) = sample(Normal{0.0, 1.0}, stream);
  }
  return z;
}

PosteriorMoments e_step(const EMState& state, const EMProblem& problem, const EMConfig& config) {
  MatrixXd draws = state.parameters.sigma_u * standard_draws(problem, config, state.iteration);
  return posterior_moments(problem.frame(), state.parameters, state.baseline, std::move(draws));
}

CoxUpdate m_step_cox(const PosteriorMoments& moments, const EMProblem& problem, const VectorXd& start) {
  const auto& frame = problem.frame();
  const VectorXd offset = moments.e_expu.array().log().matrix();
  CoxFit fit = fit_cox(frame.hazard_design, problem.risk_index(), frame.event, offset, start);
  BaselineHazard baseline =
      breslow_update(fit.beta, frame.hazard_design, frame.time, problem.risk_index(), frame.event, offset);
  return {std::move(fit.beta), std::move(baseline)};
}

double TreatmentObjective::value(const VectorXd& alpha, double rho) const {
  const VectorXd lin = design * alpha;
  double total = 0.0;
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    double subject = 0.0;
    for (Eigen::Index b = 0; b < draws.cols(); ++b) {
      const double w = weights(i, b);
      if (w == 0.0) continue;
      subject += w * log_treatment_weight(bool(treated[i]), lin[i], rho, sigma_u, draws(i, b));
    }
    total += subject;
  }
  return total;
}

NewtonPoint TreatmentObjective::evaluate(const VectorXd& alpha, double eta) const {
  const auto q = alpha.size();
  const double rho = std::tanh(eta);
  const double c = 1.0 / std::sqrt(1.0 - rho * rho);
  const VectorXd lin = design * alpha;
  NewtonPoint out{0.0, VectorXd::Zero(q + 1), MatrixXd::Zero(q + 1, q + 1)};

  // a = c (lin + rho u~), u~ = u / sigma_u. With rho = tanh(eta):
  //   da/dalpha = c x, da/deta = c (rho lin + u~),
  //   d2a/dalpha deta = c rho x, d2a/deta2 = rho c (rho lin + u~) + lin / c.
  for (Eigen::Index i = 0; i < design.rows(); ++i) {
    const double sign = treated[i] ? 1.0 : -1.0;
    const double L = lin[i];
    double g1 = 0.0, g2 = 0.0, g1_eta = 0.0, cross = 0.0, eta_eta = 0.0;
    for (Eigen::Index b = 0; b < draws.cols(); ++b) {
      const double w = weights(i, b);
      if (w == 0.0) continue;
      const double ut = draws(i, b) / sigma_u;
      const double a = c * (L + rho * ut);
      const double sa = sign * a;
      const double m = normal_inverse_mills(sa);
      const double d1 = sign * m;         // d log Phi(s a) / da
      const double d2 = -m * (sa + m);    // d2 log Phi(s a) / da2
      const double a_eta = c * (rho * L + ut);
      const double a_eta_eta = rho * c * (rho * L + ut) + L / c;
      out.value += w * log_std_normal_cdf(sa);
      g1 += w * d1;
      g2 += w * d2;
      g1_eta += w * d1 * a_eta;
      cross += w * (d2 * c * a_eta + d1 * c * rho);
      eta_eta += w * (d2 * a_eta * a_eta + d1 * a_eta_eta);
    }
    const auto x = design.row(i).transpose();
    out.gradient.head(q).noalias() += (c * g1) * x;
    out.gradient[q] += g1_eta;
    out.hessian.topLeftCorner(q, q).noalias() += (c * c * g2) * x * x.transpose();
    out.hessian.col(q).head(q).noalias() += cross * x;
    out.hessian(q, q) += eta_eta;
  }
  out.hessian.row(q).head(q) = out.hessian.col(q).head(q).transpose();
  return out;
}

TreatmentUpdate m_step_treatment(const PosteriorMoments& moments, const EMProblem& problem, const EMConfig& config,
                                 const ParameterSet& current) {
  const auto& frame = problem.frame();
  TreatmentUpdate update;
  update.sigma_u = config.estimate_sigma_u ? std::sqrt(moments.e_u2.mean()) : current.sigma_u;
  if (!(update.sigma_u > 0.0) || !std::isfinite(update.sigma_u)) {
    throw Error(ErrorKind::NonConvergence, "sigma_u update is not positive");
  }
  TreatmentObjective objective{frame.treatment_design, frame.treated, moments.draws, moments.weights, update.sigma_u};

  NewtonOptions options;
  options.max_iter = 200;
  options.gradient_tol = 1e-8;
  const auto q = current.alpha.size();
  const double eta_cap = std::atanh(kRhoCap);

  NewtonResult result;
  if (config.fixed_rho) {
    const double eta = std::atanh(*config.fixed_rho);
    result = newton_ascent(
        [&](const VectorXd& alpha) {
          NewtonPoint p = objective.evaluate(alpha, eta);
          return NewtonPoint{p.value, p.gradient.head(q), p.hessian.topLeftCorner(q, q)};
        },
        current.alpha, options, RidgePolicy::Adaptive);
    update.alpha = result.x;
    update.rho = *config.fixed_rho;
  } else {
    VectorXd start(q + 1);
    start << current.alpha, std::atanh(std::clamp(current.rho, -kRhoCap, kRhoCap));
    result = newton_ascent(
        [&](const VectorXd& x) { return objective.evaluate(x.head(q), x[q]); }, start, options, RidgePolicy::Adaptive,
        [&](VectorXd& x) { x[q] = std::clamp(x[q], -eta_cap, eta_cap); });
    update.alpha = result.x.head(q);
    update.rho = std::clamp(std::tanh(result.x[q]), -kRhoCap, kRhoCap);
  }
  switch (result.status) {
    case NewtonStatus::Converged:
    case NewtonStatus::Stalled:
      break;
    case NewtonStatus::Diverged:
    case NewtonStatus::FlatDirection:
      throw Error(ErrorKind::Separation, "treatment-block coefficients diverge");
    case NewtonStatus::IterationCap:
      throw Error(ErrorKind::NonConvergence, "treatment block did not converge in 200 iterations");
  }
  return update;
}

FitResult run_em(const EMProblem& problem, const EMConfig& config) {
  config.validate();
  FitResult fit;
  fit.warnings = validate_identification(problem.design(), config.identification());
  for (const auto& t : problem.design().treatment_terms) fit.treatment_terms.push_back(t.name());
  for (const auto& t : problem.design().hazard_terms) fit.hazard_terms.push_back(t.name());
  fit.draws = config.draw_mode;

  const auto& frame = problem.frame();
  EMState state = initialize(problem, config);
  for (int k = 0; k < config.max_iter; ++k) {
    state.moments = e_step(state, problem, config);
    if (k == 0) {
      state.observed_loglik = observed_loglik_mc(frame, state.parameters, state.baseline, state.moments.draws);
      fit.trace.push_back({0, state.parameters, state.observed_loglik, 0.0});
    }
    CoxUpdate cox = m_step_cox(state.moments, problem, state.parameters.beta);
    TreatmentUpdate treatment = m_step_treatment(state.moments, problem, config, state.parameters);

    ParameterSet next{std::move(treatment.alpha), std::move(cox.beta), treatment.rho, treatment.sigma_u};
    const double change = parameter_change(next, state.parameters);
    // Draws were taken at the previous sigma_u; rescale them to the new one.
    const MatrixXd draws = state.moments.draws * (next.sigma_u / state.parameters.sigma_u);
    const double loglik = observed_loglik_mc(frame, next, cox.baseline, draws);

    state.parameters = std::move(next);
    state.baseline = std::move(cox.baseline);
    state.observed_loglik = loglik;
    state.iteration = k + 1;
    fit.trace.push_back({state.iteration, state.parameters, loglik, change});
    if (change < config.epsilon) {
      fit.converged = true;
      break;
    }
  }
  fit.iterations = state.iteration;
  fit.parameters = state.parameters;
  fit.baseline = state.baseline;
  fit.final_observed_loglik = state.observed_loglik;
  fit.hazard_ratio = std::exp(fit.parameters.beta[frame.treatment_column]);
  return fit;
}

FitResult run_em(const Dataset& dataset, const DesignSpec& design, const EMConfig& config) {
  config.validate();
  validate_identification(design, config.identification());
  return run_em(EMProblem(dataset, design), config);
}

BootstrapResult bootstrap_se_from_resamples(const Dataset& dataset, const DesignSpec& design, const EMConfig& config,
                                            const std::vector<std::vector<std::size_t>>& resamples, int jobs) {
  const auto n_boot = resamples.size();
  if (n_boot < 2) throw Error(ErrorKind::InvalidParameter, "bootstrap needs at least 2 resamples");
  std::vector<std::optional<FitResult>> fits(n_boot);
  parallel_for(n_boot, jobs, [&](std::size_t b) {
    std::vector<SubjectRecord> records;
    records.reserve(resamples[b].size());
    for (std::size_t i : resamples[b]) records.push_back(dataset.records.at(i));
    try {
      Dataset resampled = validate_dataset(std::move(records), design, TiePolicy::Jitter, mix_stream_id(config.seed, b));
      FitResult fit = run_em(resampled, design, config);
      if (fit.converged) fits[b] = std::move(fit);
    } catch (const Error&) {
    }
  });

  BootstrapResult out;
  std::vector<const FitResult*> ok;
  for (const auto& f : fits)
    if (f) ok.push_back(&*f);
  out.successes = static_cast<int>(ok.size());
  out.failures = static_cast<int>(n_boot) - out.successes;
  if (out.failures > static_cast<int>(0.2 * static_cast<double>(n_boot)) || out.successes < 2) {
    throw Error(ErrorKind::TooManyFailures, std::to_string(out.failures) + " of " + std::to_string(n_boot) +
                                                " bootstrap resamples failed");
  }

  const auto sd = [&](auto&& get) {
    double mean = 0.0;
    for (const auto* f : ok) mean += get(*f);
    mean /= static_cast<double>(ok.size());
    double ss = 0.0;
    for (const auto* f : ok) ss += (get(*f) - mean) * (get(*f) - mean);
    return std::sqrt(ss / static_cast<double>(ok.size() - 1));
  };
  const auto q = ok.front()->parameters.alpha.size();
  const auto r = ok.front()->parameters.beta.size();
  out.alpha_se.resize(q);
  out.beta_se.resize(r);
  for (Eigen::Index j = 0; j < q; ++j) out.alpha_se[j] = sd([j](const FitResult& f) { return f.parameters.alpha[j]; });
  for (Eigen::Index j = 0; j < r; ++j) out.beta_se[j] = sd([j](const FitResult& f) { return f.parameters.beta[j]; });
  out.rho_se = sd([](const FitResult& f) { return f.parameters.rho; });
  out.sigma_u_se = sd([](const FitResult& f) { return f.parameters.sigma_u; });
  out.log_hazard_ratio_se = sd([](const FitResult& f) { return std::log(f.hazard_ratio); });
  return out;
}

BootstrapResult bootstrap_se(const Dataset& dataset, const DesignSpec& design, const EMConfig& config, int n_boot,
                             int jobs) {
  if (n_boot < 2) throw Error(ErrorKind::InvalidParameter, "bootstrap needs n_boot >= 2");
  const auto n = dataset.size();
  std::vector<std::vector<std::size_t>> resamples(static_cast<std::size_t>(n_boot));
  for (int b = 0; b < n_boot; ++b) {
    SeededStream stream(config.seed, mix_stream_id(0x626f6f7473747270ULL, static_cast<std::uint64_t>(b)));
    auto& idx = resamples[static_cast<std::size_t>(b)];
    idx.resize(n);
    for (auto& i : idx) i = std::min(n - 1, static_cast<std::size_t>(stream.uniform() * static_cast<double>(n)));
  }
  return bootstrap_se_from_resamples(dataset, design, config, resamples, jobs);
}

}  // namespace ivfrailty

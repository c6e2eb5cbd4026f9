#pragma once

// Monte Carlo EM for the Cox model with a frailty correlated with the latent
// error of a probit treatment model.
//
// Each iteration draws u_{i,b} ~ N(0, sigma_u^2) per subject, weights them by
// the subject's frailty posterior (E-step), then maximises the expected
// complete-data log-likelihood in two independent blocks:
//   * Cox block (beta, baseline jumps): a partial likelihood with offsets
//     log E[e^U_i], whose baseline maximiser is the Breslow form;
//   * treatment block (alpha, rho): sum_i sum_b w_ib log Phi(+-a(u_ib)) with
//     the weighted draws held fixed while alpha and rho move.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ivfrailty/cox.hpp"
#include "ivfrailty/kernel.hpp"
#include "ivfrailty/newton.hpp"
#include "ivfrailty/model.hpp"

namespace ivfrailty {

struct EMConfig {
  int draws = 100;           // B, Monte Carlo draws per subject
  double epsilon = 1e-3;     // max-norm change in (beta, alpha, rho[, sigma_u])
  int max_iter = 200;
  DrawMode draw_mode = DrawMode::Frozen;
  bool estimate_sigma_u = false;
  double sigma_u = 1.0;      // fixed value, or the start when estimated
  std::optional<double> fixed_rho;
  std::uint64_t seed = 1;

  void validate() const;
  IdentificationOptions identification() const { return {estimate_sigma_u, fixed_rho.has_value()}; }
};

/// A validated dataset arranged for estimation: subjects in a canonical order
/// (so input order never matters) and a per-subject key that seeds its draws.
class EMProblem {
 public:
  EMProblem(const Dataset& dataset, const DesignSpec& design);

  const ModelFrame& frame() const { return frame_; }
  const RiskSetIndex& risk_index() const { return risk_index_; }
  const std::vector<std::uint64_t>& subject_keys() const { return keys_; }
  const DesignSpec& design() const { return design_; }

 private:
  EMProblem(const Dataset& sorted, const DesignSpec& design, int);

  DesignSpec design_;
  ModelFrame frame_;
  RiskSetIndex risk_index_;
  std::vector<std::uint64_t> keys_;
};

struct EMState {
  int iteration = 0;
  ParameterSet parameters;
  BaselineHazard baseline;
  PosteriorMoments moments;
  double observed_loglik = 0.0;
};

/// Ordinary Cox for beta, probit for alpha, rho = 0 (or its fixed value),
/// sigma_u from the config, Breslow baseline at beta.
EMState initialize(const EMProblem& problem, const EMConfig& config);

/// Standard normal draws (n x B) for an iteration; identical across
/// iterations in frozen mode.
MatrixXd standard_draws(const EMProblem& problem, const EMConfig& config, int iteration);

PosteriorMoments e_step(const EMState& state, const EMProblem& problem, const EMConfig& config);

struct CoxUpdate {
  VectorXd beta;
  BaselineHazard baseline;
};

/// Offsets log E[e^U]; beta by Newton from `start`; Breslow jumps at the new beta.
CoxUpdate m_step_cox(const PosteriorMoments& moments, const EMProblem& problem, const VectorXd& start = VectorXd());

/// sum_i sum_b w_ib log Phi(s_i (lin_i + (rho / sigma_u) u_ib) / sqrt(1 - rho^2)),
/// with s_i = +1 for treated and -1 otherwise, and its derivatives in
/// (alpha, eta) where rho = tanh(eta).
struct TreatmentObjective {
  const MatrixXd& design;
  const EventVector& treated;
  const MatrixXd& draws;
  const MatrixXd& weights;
  double sigma_u = 1.0;

  double value(const VectorXd& alpha, double rho) const;
  /// Gradient and Hessian over (alpha, eta); the last coordinate is eta.
  NewtonPoint evaluate(const VectorXd& alpha, double eta) const;
};

struct TreatmentUpdate {
  VectorXd alpha;
  double rho = 0.0;
  double sigma_u = 1.0;
};

/// Maximises the treatment block from the current (alpha, rho). With
/// estimate_sigma_u, sigma_u^2 is first set to mean E[U^2].
TreatmentUpdate m_step_treatment(const PosteriorMoments& moments, const EMProblem& problem, const EMConfig& config,
                                 const ParameterSet& current);

FitResult run_em(const EMProblem& problem, const EMConfig& config);
FitResult run_em(const Dataset& dataset, const DesignSpec& design, const EMConfig& config);

struct BootstrapResult {
  VectorXd alpha_se;
  VectorXd beta_se;
  double rho_se = 0.0;
  double sigma_u_se = 0.0;
  double log_hazard_ratio_se = 0.0;
  int successes = 0;
  int failures = 0;
};

/// Nonparametric bootstrap over subjects. Resampled duplicates of an
/// uncensored subject are separated with the jitter tie policy. A resample
/// fails when its fit throws or does not converge; more than 20% failures
/// raises TooManyFailures.
BootstrapResult bootstrap_se(const Dataset& dataset, const DesignSpec& design, const EMConfig& config, int n_boot,
                             int jobs = 1);
BootstrapResult bootstrap_se_from_resamples(const Dataset& dataset, const DesignSpec& design, const EMConfig& config,
                                            const std::vector<std::vector<std::size_t>>& resamples, int jobs = 1);

}  // namespace ivfrailty

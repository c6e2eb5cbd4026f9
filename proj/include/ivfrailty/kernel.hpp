#pragma once

// Density, weight and expectation computations for the frailty Cox model
// with a probit treatment whose latent error is correlated with the frailty.
//
// Notation used below: eta = hazard linear predictor, u = frailty,
// Lambda(t) = cumulative baseline hazard, lin = treatment linear predictor.
// Given U = u the probit error V is N((rho / sigma_u) u, 1 - rho^2), so
//   P(W = 1 | u) = Phi((lin + (rho / sigma_u) u) / sqrt(1 - rho^2)).

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ivfrailty/model.hpp"
#include "ivfrailty/normal.hpp"

namespace ivfrailty {

/// delta * (log jump + eta + u) - Lambda(t) * exp(eta + u).
/// With delta = 0 this is the log survival; log_jump is ignored.
template <typename Scalar>
Scalar cox_log_contribution(bool event, Scalar log_jump, Scalar eta, Scalar u, Scalar cumulative_hazard) {
  const Scalar risk = eta + u;
  const Scalar integrated = cumulative_hazard == Scalar(0) ? Scalar(0) : cumulative_hazard * std::exp(risk);
  return event ? log_jump + risk - integrated : -integrated;
}

/// Frailty Cox kernel for one subject against a step baseline. Throws
/// BaselineNotCovering when an event time carries no baseline jump.
double cox_kernel(double time, bool event, const VectorXd& hazard_row, double u, const VectorXd& beta,
                  const BaselineHazard& baseline);

template <typename Scalar>
Scalar treatment_index(Scalar lin, Scalar rho, Scalar sigma_u, Scalar u) {
  return (lin + rho / sigma_u * u) / std::sqrt(Scalar(1) - rho * rho);
}

template <typename Scalar>
Scalar log_treatment_weight(bool treated, Scalar lin, Scalar rho, Scalar sigma_u, Scalar u) {
  const Scalar a = treatment_index(lin, rho, sigma_u, u);
  return log_std_normal_cdf(treated ? a : -a);
}

/// P(W = w | U = u) for the probit treatment model.
template <typename Scalar>
Scalar treatment_weight(bool treated, Scalar lin, Scalar rho, Scalar sigma_u, Scalar u) {
  const Scalar a = treatment_index(lin, rho, sigma_u, u);
  return std_normal_cdf(treated ? a : -a);
}

/// Integral of e^u P(W = w | u) against the N(0, sigma_u^2) density, in closed
/// form: exp(sigma_u^2 / 2) * Phi(+-(lin + sigma_u * rho)).
template <typename Scalar>
Scalar closed_form_frailty_treatment_integral(Scalar lin, Scalar rho, Scalar sigma_u, bool treated) {
  const Scalar shifted = lin + sigma_u * rho;
  return std::exp(sigma_u * sigma_u / Scalar(2)) * std_normal_cdf(treated ? shifted : -shifted);
}

/// Per-subject quantities the frailty posterior depends on.
struct SubjectTerms {
  bool event = false;
  bool treated = false;
  double hazard_linpred = 0.0;
  double treatment_linpred = 0.0;
  double cumulative_hazard = 0.0;
};

std::vector<SubjectTerms> subject_terms(const ModelFrame& frame, const ParameterSet& params,
                                        const BaselineHazard& baseline);

/// Unnormalised log importance weights of prior draws u_b ~ N(0, sigma_u^2):
///   delta (eta + u_b) - Lambda(t) e^{eta + u_b} + log P(W = w | u_b).
/// Factors constant in u (the baseline jump, any censoring density) drop out
/// after normalisation.
VectorXd log_posterior_weights(const SubjectTerms& subject, double rho, double sigma_u,
                               const Eigen::Ref<const VectorXd>& draws);

/// exp(log_w - max) / sum. Throws DegenerateWeights when nothing survives.
VectorXd normalize_log_weights(const Eigen::Ref<const VectorXd>& log_weights);

/// Self-normalised Monte Carlo estimate of E[g(U) | t, delta, w, z, x].
template <typename Fn>
double posterior_expectation(Fn&& g, const SubjectTerms& subject, double rho, double sigma_u,
                             const Eigen::Ref<const VectorXd>& draws) {
  const VectorXd weights = normalize_log_weights(log_posterior_weights(subject, rho, sigma_u, draws));
  double total = 0.0;
  for (Eigen::Index b = 0; b < draws.size(); ++b) total += weights[b] * g(draws[b]);
  return total;
}

/// E-step output: per-subject moments plus the weighted draws they came from.
struct PosteriorMoments {
  VectorXd e_u;
  VectorXd e_expu;
  VectorXd e_u2;
  MatrixXd draws;    // n x B frailty values u_{i,b}
  MatrixXd weights;  // n x B normalised weights, rows sum to 1

  Eigen::Index size() const { return e_u.size(); }
};

/// Fills the moments from draws (n x B) at the given parameters.
PosteriorMoments posterior_moments(const ModelFrame& frame, const ParameterSet& params,
                                   const BaselineHazard& baseline, MatrixXd draws);

/// Complete-data log-likelihood at frailty vector u: frailty Cox kernel plus
/// log P(W = w | u) plus the N(0, sigma_u^2) log-density of u.
double complete_data_loglik(const ModelFrame& frame, const ParameterSet& params, const BaselineHazard& baseline,
                            const VectorXd& u);

/// Monte Carlo observed log-likelihood with prior draws (n x B):
///   sum_i log( mean_b exp(cox kernel + log P(W = w | u_ib)) ).
/// The complete-data frailty density cancels against the sampling density.
double observed_loglik_mc(const ModelFrame& frame, const ParameterSet& params, const BaselineHazard& baseline,
                          const MatrixXd& draws);

}  // namespace ivfrailty

#include "ivfrailty/kernel.hpp"

#include <limits>
#include <string>

namespace ivfrailty {

namespace {

double log_jump_for(double time, bool event, const BaselineHazard& baseline) {
  if (!event) return 0.0;
  const auto jump = baseline.jump_at(time);
  if (!jump) throw Error(ErrorKind::BaselineNotCovering, "no baseline jump at event time " + std::to_string(time));
  return std::log(*jump);
}

double log_mean_exp(const Eigen::Ref<const VectorXd>& values) {
  const double top = values.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((values.array() - top).exp().mean());
}

}  // namespace

double cox_kernel(double time, bool event, const VectorXd& hazard_row, double u, const VectorXd& beta,
                  const BaselineHazard& baseline) {
  return cox_log_contribution(event, log_jump_for(time, event, baseline), hazard_row.dot(beta), u,
                              baseline.cumulative(time));
}

std::vector<SubjectTerms> subject_terms(const ModelFrame& frame, const ParameterSet& params,
                                        const BaselineHazard& baseline) {
  const VectorXd eta = frame.hazard_design * params.beta;
  const VectorXd lin = frame.treatment_design * params.alpha;
  std::vector<SubjectTerms> out(static_cast<std::size_t>(frame.size()));
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    out[i] = {frame.event[i], frame.treated[i], eta[i], lin[i], baseline.cumulative(frame.time[i])};
  }
  return out;
}

VectorXd log_posterior_weights(const SubjectTerms& s, double rho, double sigma_u,
                               const Eigen::Ref<const VectorXd>& draws) {
  VectorXd out(draws.size());
  for (Eigen::Index b = 0; b < draws.size(); ++b) {
    const double u = draws[b];
    out[b] = cox_log_contribution(s.event, 0.0, s.hazard_linpred, u, s.cumulative_hazard) +
             log_treatment_weight(s.treated, s.treatment_linpred, rho, sigma_u, u);
  }
  return out;
}

VectorXd normalize_log_weights(const Eigen::Ref<const VectorXd>& log_weights) {
  if (log_weights.size() == 0) throw Error(ErrorKind::DegenerateWeights, "no draws");
  const double top = log_weights.maxCoeff();
  if (!std::isfinite(top)) throw Error(ErrorKind::DegenerateWeights, "all importance weights vanish");
  VectorXd w = (log_weights.array() - top).exp().matrix();
  const double total = w.sum();
  if (!(total > 0.0) || !std::isfinite(total)) throw Error(ErrorKind::DegenerateWeights, "weights do not normalise");
  return w / total;
}

PosteriorMoments posterior_moments(const ModelFrame& frame, const ParameterSet& params,
                                   const BaselineHazard& baseline, MatrixXd draws) {
  const auto n = frame.size();
  if (draws.rows() != n || draws.cols() < 1) throw Error(ErrorKind::DimensionMismatch, "draws must be n x B, B >= 1");
  const auto terms = subject_terms(frame, params, baseline);
  PosteriorMoments m;
  m.e_u.resize(n);
  m.e_expu.resize(n);
  m.e_u2.resize(n);
  m.weights.resize(n, draws.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    VectorXd w;
    try {
      w = normalize_log_weights(log_posterior_weights(terms[i], params.rho, params.sigma_u, draws.row(i).transpose()));
    } catch (const Error& e) {
      throw Error(ErrorKind::DegenerateWeights, "subject " + std::to_string(i) + ": " + e.what());
    }
    const auto u = draws.row(i).transpose().array();
    m.e_u[i] = (w.array() * u).sum();
    m.e_expu[i] = (w.array() * u.exp()).sum();
    m.e_u2[i] = (w.array() * u.square()).sum();
    m.weights.row(i) = w.transpose();
  }
  m.draws = std::move(draws);
  return m;
}

double complete_data_loglik(const ModelFrame& frame, const ParameterSet& params, const BaselineHazard& baseline,
                            const VectorXd& u) {
  if (u.size() != frame.size()) throw Error(ErrorKind::DimensionMismatch, "frailty vector length differs from n");
  const auto terms = subject_terms(frame, params, baseline);
  const double log_sigma = std::log(params.sigma_u);
  double total = 0.0;
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    const auto& s = terms[i];
    total += cox_log_contribution(s.event, log_jump_for(frame.time[i], s.event, baseline), s.hazard_linpred, u[i],
                                  s.cumulative_hazard);
    total += log_treatment_weight(s.treated, s.treatment_linpred, params.rho, params.sigma_u, u[i]);
    total += log_std_normal_pdf(u[i] / params.sigma_u) - log_sigma;
  }
  return total;
}

double observed_loglik_mc(const ModelFrame& frame, const ParameterSet& params, const BaselineHazard& baseline,
                          const MatrixXd& draws) {
  if (draws.rows() != frame.size() || draws.cols() < 1) {
    throw Error(ErrorKind::DimensionMismatch, "draws must be n x B, B >= 1");
  }
  const auto terms = subject_terms(frame, params, baseline);
  double total = 0.0;
  VectorXd contrib(draws.cols());
  for (Eigen::Index i = 0; i < frame.size(); ++i) {
    const auto& s = terms[i];
    const double log_jump = log_jump_for(frame.time[i], s.event, baseline);
    contrib = log_posterior_weights(s, params.rho, params.sigma_u, draws.row(i).transpose());
    if (s.event) contrib.array() += log_jump;
    const double value = log_mean_exp(contrib);
    if (!std::isfinite(value)) {
      throw Error(ErrorKind::DegenerateWeights, "subject " + std::to_string(i) + " has zero Monte Carlo likelihood");
    }
    total += value;
  }
  return total;
}

}  // namespace ivfrailty

#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ivfrailty/model.hpp"

namespace ivfrailty {

/// Subjects sorted by observed time, with the start of each risk set
/// {j : t_j >= t_i}. Built once per fit; offsets and coefficients vary freely.
class RiskSetIndex {
 public:
  RiskSetIndex(const VectorXd& time, const EventVector& event);

  /// Subject indices in ascending time order.
  const std::vector<Eigen::Index>& order() const { return order_; }
  /// For sorted position k, the first sorted position whose time equals the
  /// time at k; positions >= that form the risk set.
  Eigen::Index risk_begin(Eigen::Index position) const { return risk_begin_[position]; }
  /// Sorted positions of uncensored subjects, ascending in time.
  const std::vector<Eigen::Index>& event_positions() const { return event_positions_; }

  Eigen::Index size() const { return static_cast<Eigen::Index>(order_.size()); }

 private:
  std::vector<Eigen::Index> order_;
  std::vector<Eigen::Index> risk_begin_;
  std::vector<Eigen::Index> event_positions_;
};

struct CoxEvaluation {
  double value = 0.0;
  VectorXd gradient;
  MatrixXd hessian;
};

/// Partial log-likelihood with fixed subject offsets,
///   sum_{delta_i = 1} [ x_i' beta - log sum_{t_j >= t_i} exp(x_j' beta + offset_j) ],
/// with its exact gradient and Hessian. One reverse pass over sorted times.
CoxEvaluation cox_profile_loglik(const VectorXd& beta, const MatrixXd& X, const RiskSetIndex& index,
                                 const EventVector& event, const VectorXd& offset);
CoxEvaluation cox_profile_loglik(const VectorXd& beta, const MatrixXd& X, const VectorXd& time,
                                 const EventVector& event, const VectorXd& offset);

struct NewtonOptions {
  int max_iter = 50;
  double gradient_tol = 1e-8;
  int max_halvings = 30;
  double divergence_bound = 50.0;
};

struct CoxFit {
  VectorXd beta;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Newton-Raphson with step halving. Starts at `start` (zero when empty).
CoxFit fit_cox(const MatrixXd& X, const VectorXd& time, const EventVector& event, const VectorXd& offset,
               const VectorXd& start = VectorXd(), const NewtonOptions& options = {});
CoxFit fit_cox(const MatrixXd& X, const RiskSetIndex& index, const EventVector& event, const VectorXd& offset,
               const VectorXd& start = VectorXd(), const NewtonOptions& options = {});

/// Breslow jumps 1 / sum_{t_j >= t_i} exp(x_j' beta + offset_j) at each
/// uncensored time.
BaselineHazard breslow_update(const VectorXd& beta, const MatrixXd& X, const VectorXd& time, const EventVector& event,
                              const VectorXd& offset);
BaselineHazard breslow_update(const VectorXd& beta, const MatrixXd& X, const VectorXd& time,
                              const RiskSetIndex& index, const EventVector& event, const VectorXd& offset);

/// The Cox block of the expected complete-data log-likelihood,
///   sum delta_i (log lambda(t_i) + x_i' beta + E[U_i]) - sum Lambda(t_i) exp(x_i' beta) E[e^U_i].
double cox_block_objective(const VectorXd& beta, const BaselineHazard& baseline, const MatrixXd& X,
                           const VectorXd& time, const EventVector& event, const VectorXd& e_u,
                           const VectorXd& e_expu);

struct ProbitEvaluation {
  double value = 0.0;
  VectorXd gradient;
  MatrixXd hessian;
};

ProbitEvaluation probit_loglik(const VectorXd& alpha, const MatrixXd& X, const EventVector& treated);

struct ProbitFit {
  VectorXd alpha;
  double loglik = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Probit maximum likelihood by Newton with step halving from alpha = 0.
/// Throws Separation when the likelihood has no finite maximiser.
ProbitFit fit_probit(const MatrixXd& X, const EventVector& treated, const NewtonOptions& options = {});

}  // namespace ivfrailty

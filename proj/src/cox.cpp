#include "ivfrailty/cox.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ivfrailty/newton.hpp"
#include "ivfrailty/normal.hpp"

namespace ivfrailty {

RiskSetIndex::RiskSetIndex(const VectorXd& time, const EventVector& event) {
  const auto n = time.size();
  if (event.size() != n) throw Error(ErrorKind::DimensionMismatch, "time and event lengths differ");
  order_.resize(static_cast<std::size_t>(n));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  std::stable_sort(order_.begin(), order_.end(), [&](Eigen::Index a, Eigen::Index b) { return time[a] < time[b]; });
  risk_begin_.resize(order_.size());
  for (Eigen::Index k = 0; k < n; ++k) {
    risk_begin_[k] = (k > 0 && time[order_[k]] == time[order_[k - 1]]) ? risk_begin_[k - 1] : k;
    if (event[order_[k]]) event_positions_.push_back(k);
  }
}

namespace {

// Walks tie groups from the latest time backwards, growing the risk set one
// group at a time and calling visit(position, S0) for each event, where the
// running sums carry the common factor exp(-shift).
template <typename AddFn, typename VisitFn>
void reverse_risk_pass(const RiskSetIndex& index, const EventVector& event, AddFn&& add, VisitFn&& visit) {
  const auto& order = index.order();
  Eigen::Index end = index.size();
  while (end > 0) {
    const Eigen::Index begin = index.risk_begin(end - 1);
    for (Eigen::Index k = begin; k < end; ++k) add(order[k]);
    for (Eigen::Index k = begin; k < end; ++k)
      if (event[order[k]]) visit(order[k]);
    end = begin;
  }
}

}  // namespace

CoxEvaluation cox_profile_loglik(const VectorXd& beta, const MatrixXd& X, const RiskSetIndex& index,
                                 const EventVector& event, const VectorXd& offset) {
  const auto n = X.rows();
  const auto r = X.cols();
  if (beta.size() != r || offset.size() != n || event.size() != n || index.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "cox_profile_loglik: inconsistent dimensions");
  }
  const VectorXd eta = X * beta;
  const VectorXd score = eta + offset;
  const double shift = n > 0 ? score.maxCoeff() : 0.0;

  double s0 = 0.0;
  VectorXd s1 = VectorXd::Zero(r);
  MatrixXd s2 = MatrixXd::Zero(r, r);
  CoxEvaluation out{0.0, VectorXd::Zero(r), MatrixXd::Zero(r, r)};

  reverse_risk_pass(
      index, event,
      [&](Eigen::Index j) {
        const double w = std::exp(score[j] - shift);
        s0 += w;
        s1.noalias() += w * X.row(j).transpose();
        s2.noalias() += w * X.row(j).transpose() * X.row(j);
      },
      [&](Eigen::Index i) {
        const VectorXd mean = s1 / s0;
        out.value += eta[i] - (std::log(s0) + shift);
        out.gradient.noalias() += X.row(i).transpose() - mean;
        out.hessian.noalias() -= s2 / s0 - mean * mean.transpose();
      });
  return out;
}

CoxEvaluation cox_profile_loglik(const VectorXd& beta, const MatrixXd& X, const VectorXd& time,
                                 const EventVector& event, const VectorXd& offset) {
  return cox_profile_loglik(beta, X, RiskSetIndex(time, event), event, offset);
}

CoxFit fit_cox(const MatrixXd& X, const RiskSetIndex& index, const EventVector& event, const VectorXd& offset,
               const VectorXd& start, const NewtonOptions& options) {
  const VectorXd beta0 = start.size() == 0 ? VectorXd::Zero(X.cols()) : start;
  auto result = newton_ascent(
      [&](const VectorXd& beta) {
        auto e = cox_profile_loglik(beta, X, index, event, offset);
        return NewtonPoint{e.value, std::move(e.gradient), std::move(e.hessian)};
      },
      beta0, options);
  switch (result.status) {
    case NewtonStatus::Converged:
    case NewtonStatus::Stalled:
      break;
    case NewtonStatus::Diverged:
    case NewtonStatus::FlatDirection:
      throw Error(ErrorKind::MonotoneLikelihoodDivergence,
                  "Cox coefficients diverge (monotone partial likelihood), |beta| reached " +
                      std::to_string(result.x.cwiseAbs().maxCoeff()));
    case NewtonStatus::IterationCap:
      break;
  }
  return {result.x, result.value, result.iterations, result.status == NewtonStatus::Converged ||
                                                         result.status == NewtonStatus::Stalled};
}

CoxFit fit_cox(const MatrixXd& X, const VectorXd& time, const EventVector& event, const VectorXd& offset,
               const VectorXd& start, const NewtonOptions& options) {
  return fit_cox(X, RiskSetIndex(time, event), event, offset, start, options);
}

BaselineHazard breslow_update(const VectorXd& beta, const MatrixXd& X, const VectorXd& time,
                              const RiskSetIndex& index, const EventVector& event, const VectorXd& offset) {
  const auto n = X.rows();
  if (beta.size() != X.cols() || offset.size() != n || time.size() != n || event.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "breslow_update: inconsistent dimensions");
  }
  const VectorXd score = X * beta + offset;
  const double shift = n > 0 ? score.maxCoeff() : 0.0;
  double s0 = 0.0;
  std::vector<double> times;
  std::vector<double> jumps;
  reverse_risk_pass(
      index, event, [&](Eigen::Index j) { s0 += std::exp(score[j] - shift); },
      [&](Eigen::Index i) {
        times.push_back(time[i]);
        jumps.push_back(std::exp(-shift) / s0);
      });
  std::reverse(times.begin(), times.end());
  std::reverse(jumps.begin(), jumps.end());
  return BaselineHazard(std::move(times), std::move(jumps));
}

BaselineHazard breslow_update(const VectorXd& beta, const MatrixXd& X, const VectorXd& time, const EventVector& event,
                              const VectorXd& offset) {
  return breslow_update(beta, X, time, RiskSetIndex(time, event), event, offset);
}

double cox_block_objective(const VectorXd& beta, const BaselineHazard& baseline, const MatrixXd& X,
                           const VectorXd& time, const EventVector& event, const VectorXd& e_u,
                           const VectorXd& e_expu) {
  const VectorXd eta = X * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    if (event[i]) {
      const auto jump = baseline.jump_at(time[i]);
      if (!jump) throw Error(ErrorKind::BaselineNotCovering, "no baseline jump at event time " + std::to_string(time[i]));
      total += std::log(*jump) + eta[i] + e_u[i];
    }
    total -= baseline.cumulative(time[i]) * std::exp(eta[i]) * e_expu[i];
  }
  return total;
}

ProbitEvaluation probit_loglik(const VectorXd& alpha, const MatrixXd& X, const EventVector& treated) {
  if (alpha.size() != X.cols() || treated.size() != X.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "probit_loglik: inconsistent dimensions");
  }
  const VectorXd lin = X * alpha;
  ProbitEvaluation out{0.0, VectorXd::Zero(X.cols()), MatrixXd::Zero(X.cols(), X.cols())};
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double sign = treated[i] ? 1.0 : -1.0;
    const double a = sign * lin[i];
    const double m = normal_inverse_mills(a);
    out.value += log_std_normal_cdf(a);
    out.gradient.noalias() += (sign * m) * X.row(i).transpose();
    out.hessian.noalias() -= (m * (a + m)) * X.row(i).transpose() * X.row(i);
  }
  return out;
}

ProbitFit fit_probit(const MatrixXd& X, const EventVector& treated, const NewtonOptions& options) {
  if (treated.size() == 0) throw Error(ErrorKind::EmptyData, "probit fit on no subjects");
  if (treated.all() || !treated.any()) {
    throw Error(ErrorKind::Separation, "treatment is constant; probit likelihood has no finite maximiser");
  }
  auto result = newton_ascent(
      [&](const VectorXd& alpha) {
        auto e = probit_loglik(alpha, X, treated);
        return NewtonPoint{e.value, std::move(e.gradient), std::move(e.hessian)};
      },
      VectorXd::Zero(X.cols()), options);
  if (result.status == NewtonStatus::Diverged || result.status == NewtonStatus::FlatDirection) {
    throw Error(ErrorKind::Separation, "probit coefficients diverge, |alpha| reached " +
                                           std::to_string(result.x.cwiseAbs().maxCoeff()));
  }
  if (result.status == NewtonStatus::IterationCap && result.value > -1e-8 * static_cast<double>(X.rows())) {
    throw Error(ErrorKind::Separation, "probit fit predicts every treatment perfectly");
  }
  return {result.x, result.value, result.iterations,
          result.status == NewtonStatus::Converged || result.status == NewtonStatus::Stalled};
}

}  // namespace ivfrailty

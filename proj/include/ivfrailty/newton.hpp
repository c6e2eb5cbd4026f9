#pragma once

// Damped Newton ascent shared by the Cox, probit and treatment-block fits.

#include <cmath>
#include <utility>

#include <Eigen/Dense>

#include "ivfrailty/cox.hpp"
#include "ivfrailty/error.hpp"

namespace ivfrailty {

struct NewtonPoint {
  double value = 0.0;
  VectorXd gradient;
  MatrixXd hessian;
};

enum class NewtonStatus {
  Converged,      // gradient and Newton step both negligible
  Stalled,        // no ascent found along the step; numerically at the maximum
  Diverged,       // a coordinate left the divergence bound
  FlatDirection,  // gradient vanished but the step did not: maximiser at infinity
  IterationCap,
};

struct NewtonResult {
  VectorXd x;
  double value = 0.0;
  VectorXd gradient;
  int iterations = 0;
  NewtonStatus status = NewtonStatus::IterationCap;
};

enum class RidgePolicy {
  Fixed,     // one 1e-8 ridge attempt, then SingularHessian
  Adaptive,  // grow the ridge until the system is positive definite
};

inline VectorXd newton_direction(const MatrixXd& hessian, const VectorXd& gradient, RidgePolicy policy) {
  MatrixXd information = -hessian;
  const auto dim = information.rows();
  const auto solvable = [](const Eigen::LDLT<MatrixXd>& ldlt) {
    return ldlt.info() == Eigen::Success && (ldlt.vectorD().array() > 0.0).all();
  };
  Eigen::LDLT<MatrixXd> ldlt(information);
  if (solvable(ldlt)) return ldlt.solve(gradient);

  double ridge = 1e-8;
  const double scale = std::max(1.0, information.diagonal().cwiseAbs().maxCoeff());
  for (int attempt = 0; attempt < (policy == RidgePolicy::Fixed ? 1 : 40); ++attempt, ridge *= 10.0) {
    ldlt.compute(information + ridge * scale * MatrixXd::Identity(dim, dim));
    if (solvable(ldlt)) return ldlt.solve(gradient);
  }
  throw Error(ErrorKind::SingularHessian, "Hessian is singular even after ridge regularisation");
}

struct IdentityProjection {
  void operator()(VectorXd&) const {}
};

/// Maximises eval(x) from x0. `project` may clamp a candidate onto a box.
template <typename EvalFn, typename ProjectFn = IdentityProjection>
NewtonResult newton_ascent(EvalFn&& eval, VectorXd x0, const NewtonOptions& options,
                           RidgePolicy ridge = RidgePolicy::Fixed, ProjectFn&& project = {}) {
  NewtonResult result;
  result.x = std::move(x0);
  NewtonPoint point = eval(result.x);
  const double initial_curvature = point.hessian.size() ? point.hessian.diagonal().cwiseAbs().maxCoeff() : 0.0;
  VectorXd last_move;
  // Curvature along the last accepted move has collapsed: the maximiser is at infinity.
  const auto curvature_vanished = [&] {
    if (last_move.size() == 0 || initial_curvature == 0.0 || last_move.squaredNorm() == 0.0) return false;
    const double curvature = std::abs(last_move.dot(point.hessian * last_move)) / last_move.squaredNorm();
    return curvature < 1e-10 * initial_curvature;
  };
  for (result.iterations = 0; result.iterations < options.max_iter; ++result.iterations) {
    const VectorXd step = newton_direction(point.hessian, point.gradient, ridge);
    const double grad_norm = point.gradient.size() ? point.gradient.cwiseAbs().maxCoeff() : 0.0;
    const double step_norm = step.size() ? step.cwiseAbs().maxCoeff() : 0.0;
    const double x_norm = result.x.size() ? result.x.cwiseAbs().maxCoeff() : 0.0;
    if (grad_norm < options.gradient_tol && step_norm < 1e-6 * (1.0 + x_norm)) {
      result.status = curvature_vanished() ? NewtonStatus::FlatDirection : NewtonStatus::Converged;
      break;
    }
    // Predicted gain below rounding of the objective: no further progress is measurable.
    const double predicted_gain = point.gradient.dot(step);
    if (predicted_gain < 1e-13 * (1.0 + std::abs(point.value)) && step_norm < 1e-4 * (1.0 + x_norm)) {
      result.status = curvature_vanished() ? NewtonStatus::FlatDirection : NewtonStatus::Converged;
      break;
    }

    double scale = 1.0;
    bool accepted = false;
    for (int h = 0; h <= options.max_halvings; ++h, scale *= 0.5) {
      VectorXd candidate = result.x + scale * step;
      project(candidate);
      if (candidate == result.x) break;
      NewtonPoint next = eval(candidate);
      if (std::isfinite(next.value) && next.value >= point.value) {
        last_move = candidate - result.x;
        result.x = std::move(candidate);
        point = std::move(next);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.status = NewtonStatus::Stalled;
      break;
    }
    if (result.x.size() && result.x.cwiseAbs().maxCoeff() > options.divergence_bound) {
      result.status = NewtonStatus::Diverged;
      break;
    }
  }
  if (result.iterations == options.max_iter) {
    const double grad_norm = point.gradient.size() ? point.gradient.cwiseAbs().maxCoeff() : 0.0;
    result.status = grad_norm < options.gradient_tol ? NewtonStatus::FlatDirection : NewtonStatus::IterationCap;
  }
  result.value = point.value;
  result.gradient = std::move(point.gradient);
  return result;
}

}  // namespace ivfrailty

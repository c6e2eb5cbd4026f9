#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ivfrailty/error.hpp"

namespace ivfrailty {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using EventVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

// |rho| is held below this so that sqrt(1 - rho^2) stays well conditioned.
inline constexpr double kRhoCap = 0.995;

struct SubjectRecord {
  double time = 0.0;
  bool event = false;
  bool treated = false;
  VectorXd covariates;
  VectorXd instruments;
};

enum class TiePolicy { Reject, Jitter };

struct Dataset {
  std::vector<SubjectRecord> records;
  Eigen::Index p = 0;  // covariates per subject
  Eigen::Index K = 0;  // instruments per subject

  std::size_t size() const { return records.size(); }
};

struct Term {
  enum class Kind { Intercept, Treatment, Covariate, Instrument, TreatmentByCovariate };

  Kind kind = Kind::Intercept;
  Eigen::Index index = 0;  // covariate / instrument column for the indexed kinds

  static Term intercept() { return {Kind::Intercept, 0}; }
  static Term treatment() { return {Kind::Treatment, 0}; }
  static Term covariate(Eigen::Index j) { return {Kind::Covariate, j}; }
  static Term instrument(Eigen::Index k) { return {Kind::Instrument, k}; }
  static Term treatment_by_covariate(Eigen::Index j) { return {Kind::TreatmentByCovariate, j}; }

  std::string name() const;
  bool operator==(const Term&) const = default;
};

/// Term lists for the two linear predictors: the probit treatment index
/// (built from instruments and covariates) and the log-hazard (built from
/// treatment, covariates and treatment-by-covariate interactions).
struct DesignSpec {
  std::vector<Term> treatment_terms;
  std::vector<Term> hazard_terms;

  /// z_1..z_K + x_1..x_p for treatment; w + x_1..x_p (+ w:x_j) for hazard.
  static DesignSpec standard(Eigen::Index p, Eigen::Index K, bool interactions = false);

  /// Column of the treatment main effect in the hazard design.
  Eigen::Index treatment_column() const;
};

void validate_design(const DesignSpec& design, Eigen::Index p, Eigen::Index K);

Dataset validate_dataset(std::vector<SubjectRecord> records, const DesignSpec& design,
                         TiePolicy ties = TiePolicy::Reject, std::uint64_t seed = 0);

enum class IdentificationCondition { SigmaUFixed, NoHazardIntercept, TreatmentInterceptOrFixedRho };

class IdentificationError : public Error {
 public:
  IdentificationError(IdentificationCondition condition, const std::string& message)
      : Error(ErrorKind::IdentificationViolation, message), condition_(condition) {}
  IdentificationCondition condition() const noexcept { return condition_; }

 private:
  IdentificationCondition condition_;
};

struct IdentificationOptions {
  bool estimate_sigma_u = false;
  bool rho_fixed = false;
};

/// Throws IdentificationError naming the first violated condition. Returns
/// warnings for configurations that are allowed but not identified (an
/// estimated sigma_u).
std::vector<std::string> validate_identification(const DesignSpec& design,
                                                 const IdentificationOptions& options);

struct DesignMatrices {
  MatrixXd treatment;  // n x q, row i is the treatment-index regressor of subject i
  MatrixXd hazard;     // n x r, row i is the log-hazard regressor of subject i
};

DesignMatrices build_designs(const Dataset& dataset, const DesignSpec& design);

/// Column-oriented view of a validated dataset, as consumed by the estimators.
struct ModelFrame {
  VectorXd time;
  EventVector event;
  EventVector treated;
  MatrixXd treatment_design;
  MatrixXd hazard_design;
  Eigen::Index treatment_column = 0;

  Eigen::Index size() const { return time.size(); }
  Eigen::Index event_count() const { return event.count(); }
};

ModelFrame make_frame(const Dataset& dataset, const DesignSpec& design);

struct ParameterSet {
  VectorXd alpha;
  VectorXd beta;
  double rho = 0.0;
  double sigma_u = 1.0;

  void validate() const;
};

/// Step-function cumulative baseline hazard with positive jumps at the
/// (strictly increasing) uncensored times.
class BaselineHazard {
 public:
  BaselineHazard() = default;
  BaselineHazard(std::vector<double> event_times, std::vector<double> jumps);

  std::span<const double> event_times() const { return event_times_; }
  std::span<const double> jumps() const { return jumps_; }
  std::size_t event_count() const { return event_times_.size(); }

  /// Lambda(t) = sum of jumps at event times <= t.
  double cumulative(double t) const;
  /// Jump at t, or nullopt when t is not an event time.
  std::optional<double> jump_at(double t) const;

 private:
  std::vector<double> event_times_;
  std::vector<double> jumps_;
  std::vector<double> cumulative_;
};

enum class DrawMode { Frozen, Fresh };

struct IterationSnapshot {
  int iteration = 0;
  ParameterSet parameters;
  double observed_loglik = 0.0;
  double max_change = 0.0;
};

struct FitResult {
  ParameterSet parameters;
  BaselineHazard baseline;
  double hazard_ratio = 1.0;
  int iterations = 0;
  bool converged = false;
  double final_observed_loglik = 0.0;
  DrawMode draws = DrawMode::Frozen;
  std::vector<std::string> treatment_terms;
  std::vector<std::string> hazard_terms;
  std::vector<std::string> warnings;
  std::vector<IterationSnapshot> trace;
};

}  // namespace ivfrailty

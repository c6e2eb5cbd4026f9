#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ivfrailty/mcem.hpp"
#include "ivfrailty/model.hpp"
#include "ivfrailty/random.hpp"

namespace ivfrailty {

enum class TreatmentFamily { Probit, Logistic };
enum class FrailtyFamily { BivariateNormal, CenteredGamma, StudentT };

/// Data-generating configuration. Scenarios 1-4 use a bivariate normal
/// (V, U) with a probit treatment; 5 swaps in a logistic treatment error,
/// 6 a centred gamma frailty, 7 a heavy-tailed t frailty.
struct ScenarioSpec {
  int id = 1;
  int n = 200;
  double sigma_u2 = 1.0;
  double correlation = 0.4;  // sigma_uv / sigma_u for the bivariate normal scenarios
  double alpha_wz = 1.0;
  TreatmentFamily treatment_family = TreatmentFamily::Probit;
  FrailtyFamily frailty_family = FrailtyFamily::BivariateNormal;
  double censor_rate = 0.5;
  double beta_w = 0.5;
  double beta_x = 0.2;

  static ScenarioSpec preset(int id, int n);
  void validate() const;

  double sigma_u() const;
  double true_hazard_ratio() const;
  /// Whether (alpha, rho, sigma_u) have true values the estimator targets.
  bool correctly_specified() const;
};

struct SimulatedData {
  Dataset dataset;
  VectorXd latent_u;
  double censoring_fraction = 0.0;
};

SimulatedData generate(const ScenarioSpec& spec, SeededStream& stream);

struct ReplicationSummary {
  std::string estimator;
  std::string parameter;
  double truth = 0.0;
  int n_ok = 0;
  int n_failed = 0;
  double mean = 0.0;
  double sd = 0.0;  // sample SD (divisor n - 1); 0 with sd_defined = false when n = 1
  bool sd_defined = true;
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
  double rmse = 0.0;
  double cv = 0.0;
};

ReplicationSummary summarize(std::span<const double> estimates, double truth);

struct SimulationConfig {
  EMConfig em;
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct CoxOutcome {
  bool ok = false;
  VectorXd beta;
  std::string error;
};

struct ReplicationRecord {
  int replication = 0;
  double censoring_fraction = 0.0;
  bool proposed_ok = false;
  ParameterSet proposed;
  int proposed_iterations = 0;
  std::string proposed_error;
  CoxOutcome ordinary;
  CoxOutcome infeasible;
};

/// Generates and fits one replication: the proposed estimator, ordinary Cox
/// on (w, x) and the infeasible Cox on (w, x, U).
ReplicationRecord run_replication(const ScenarioSpec& spec, int replication, const SimulationConfig& config);

struct SimulationReport {
  ScenarioSpec spec;
  int reps = 0;
  std::vector<ReplicationRecord> records;
  std::vector<ReplicationSummary> summaries;  // hazard ratios, then proposed parameters
};

SimulationReport run_replications(const ScenarioSpec& spec, int reps, const SimulationConfig& config);

/// Summary rows from finished replications.
std::vector<ReplicationSummary> summarize_replications(const ScenarioSpec& spec,
                                                       std::span<const ReplicationRecord> records);

}  // namespace ivfrailty

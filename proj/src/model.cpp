#include "ivfrailty/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ivfrailty/random.hpp"

namespace ivfrailty {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::EmptyData: return "EmptyData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::TiedEventTimes: return "TiedEventTimes";
    case ErrorKind::InvalidDesign: return "InvalidDesign";
    case ErrorKind::IdentificationViolation: return "IdentificationViolation";
    case ErrorKind::InvalidParameter: return "InvalidParameter";
    case ErrorKind::BaselineNotCovering: return "BaselineNotCovering";
    case ErrorKind::DegenerateWeights: return "DegenerateWeights";
    case ErrorKind::SingularHessian: return "SingularHessian";
    case ErrorKind::MonotoneLikelihoodDivergence: return "MonotoneLikelihoodDivergence";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::TooManyFailures: return "TooManyFailures";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::EmptyEstimates: return "EmptyEstimates";
    case ErrorKind::InputFormat: return "InputFormat";
  }
  return "Unknown";
}

std::string Term::name() const {
  switch (kind) {
    case Kind::Intercept: return "(Intercept)";
    case Kind::Treatment: return "w";
    case Kind::Covariate: return "x" + std::to_string(index + 1);
    case Kind::Instrument: return "z" + std::to_string(index + 1);
    case Kind::TreatmentByCovariate: return "w:x" + std::to_string(index + 1);
  }
  return "?";
}

DesignSpec DesignSpec::standard(Eigen::Index p, Eigen::Index K, bool interactions) {
  DesignSpec design;
  for (Eigen::Index k = 0; k < K; ++k) design.treatment_terms.push_back(Term::instrument(k));
  for (Eigen::Index j = 0; j < p; ++j) design.treatment_terms.push_back(Term::covariate(j));
  design.hazard_terms.push_back(Term::treatment());
  for (Eigen::Index j = 0; j < p; ++j) design.hazard_terms.push_back(Term::covariate(j));
  if (interactions) {
    for (Eigen::Index j = 0; j < p; ++j) design.hazard_terms.push_back(Term::treatment_by_covariate(j));
  }
  return design;
}

Eigen::Index DesignSpec::treatment_column() const {
  auto it = std::find(hazard_terms.begin(), hazard_terms.end(), Term::treatment());
  if (it == hazard_terms.end()) throw Error(ErrorKind::InvalidDesign, "hazard design has no treatment term");
  return it - hazard_terms.begin();
}

namespace {

void check_index(const Term& term, Eigen::Index p, Eigen::Index K) {
  const bool uses_x = term.kind == Term::Kind::Covariate || term.kind == Term::Kind::TreatmentByCovariate;
  const bool uses_z = term.kind == Term::Kind::Instrument;
  if ((uses_x && (term.index < 0 || term.index >= p)) || (uses_z && (term.index < 0 || term.index >= K))) {
    throw Error(ErrorKind::DimensionMismatch,
                "term " + term.name() + " is out of range (p=" + std::to_string(p) + ", K=" + std::to_string(K) + ")");
  }
}

bool has_duplicates(const std::vector<Term>& terms) {
  for (std::size_t a = 0; a < terms.size(); ++a)
    for (std::size_t b = a + 1; b < terms.size(); ++b)
      if (terms[a] == terms[b]) return true;
  return false;
}

bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace

void validate_design(const DesignSpec& design, Eigen::Index p, Eigen::Index K) {
  if (design.treatment_terms.empty()) throw Error(ErrorKind::InvalidDesign, "treatment design is empty");
  for (const auto& term : design.treatment_terms) {
    if (term.kind == Term::Kind::Treatment || term.kind == Term::Kind::TreatmentByCovariate) {
      throw Error(ErrorKind::InvalidDesign, "treatment design cannot contain " + term.name());
    }
    check_index(term, p, K);
  }
  for (const auto& term : design.hazard_terms) {
    if (term.kind == Term::Kind::Instrument) {
      throw Error(ErrorKind::InvalidDesign, "instrument " + term.name() + " cannot enter the hazard design");
    }
    check_index(term, p, K);
  }
  if (std::count(design.hazard_terms.begin(), design.hazard_terms.end(), Term::treatment()) != 1) {
    throw Error(ErrorKind::InvalidDesign, "hazard design needs exactly one treatment term");
  }
  if (has_duplicates(design.treatment_terms) || has_duplicates(design.hazard_terms)) {
    throw Error(ErrorKind::InvalidDesign, "duplicate design term");
  }
}

namespace {

// Spreads each group of tied uncensored times upward by multiples of a step
// small enough not to cross the next distinct observed time.
void jitter_ties(std::vector<SubjectRecord>& records, std::uint64_t seed) {
  std::vector<std::size_t> events;
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].event) events.push_back(i);
  std::stable_sort(events.begin(), events.end(),
                   [&](std::size_t a, std::size_t b) { return records[a].time < records[b].time; });

  std::vector<double> all_times;
  all_times.reserve(records.size());
  double max_time = 0.0;
  for (const auto& r : records) {
    all_times.push_back(r.time);
    max_time = std::max(max_time, r.time);
  }
  std::sort(all_times.begin(), all_times.end());

  SeededStream stream(seed, 0x7469657300000000ULL);  // "ties"
  for (std::size_t begin = 0; begin < events.size();) {
    std::size_t end = begin + 1;
    while (end < events.size() && records[events[end]].time == records[events[begin]].time) ++end;
    const std::size_t m = end - begin;
    if (m > 1) {
      const double t = records[events[begin]].time;
      double step = 1e-9 * max_time;
      auto next = std::upper_bound(all_times.begin(), all_times.end(), t);
      if (next != all_times.end()) step = std::min(step, (*next - t) / static_cast<double>(m + 1));
      if (!(step > 0.0)) throw Error(ErrorKind::TiedEventTimes, "cannot jitter ties at time " + std::to_string(t));
      std::vector<std::size_t> group(events.begin() + begin, events.begin() + end);
      for (std::size_t k = m - 1; k > 0; --k) {
        const auto j = static_cast<std::size_t>(stream.uniform() * static_cast<double>(k + 1));
        std::swap(group[k], group[std::min(j, k)]);
      }
      for (std::size_t k = 1; k < m; ++k) records[group[k]].time = t + step * static_cast<double>(k);
    }
    begin = end;
  }
}

}  // namespace

Dataset validate_dataset(std::vector<SubjectRecord> records, const DesignSpec& design, TiePolicy ties,
                         std::uint64_t seed) {
  if (records.empty()) throw Error(ErrorKind::EmptyData, "no records");
  const Eigen::Index p = records.front().covariates.size();
  const Eigen::Index K = records.front().instruments.size();
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.covariates.size() != p || r.instruments.size() != K) {
      throw Error(ErrorKind::DimensionMismatch, "record " + std::to_string(i) + " has inconsistent dimensions");
    }
    if (!std::isfinite(r.time) || r.time < 0.0) {
      throw Error(ErrorKind::NonFiniteValue, "record " + std::to_string(i) + " has invalid time " + std::to_string(r.time));
    }
    if (!all_finite(r.covariates) || !all_finite(r.instruments)) {
      throw Error(ErrorKind::NonFiniteValue, "record " + std::to_string(i) + " has a non-finite covariate or instrument");
    }
  }
  validate_design(design, p, K);

  std::vector<double> event_times;
  for (const auto& r : records)
    if (r.event) event_times.push_back(r.time);
  std::sort(event_times.begin(), event_times.end());
  if (std::adjacent_find(event_times.begin(), event_times.end()) != event_times.end()) {
    if (ties == TiePolicy::Reject) throw Error(ErrorKind::TiedEventTimes, "tied uncensored event times");
    jitter_ties(records, seed);
  }
  return Dataset{std::move(records), p, K};
}

std::vector<std::string> validate_identification(const DesignSpec& design, const IdentificationOptions& options) {
  std::vector<std::string> warnings;
  if (std::find(design.hazard_terms.begin(), design.hazard_terms.end(), Term::intercept()) !=
      design.hazard_terms.end()) {
    throw IdentificationError(IdentificationCondition::NoHazardIntercept,
                              "hazard design contains an intercept, which the baseline hazard absorbs");
  }
  const bool treatment_intercept = std::find(design.treatment_terms.begin(), design.treatment_terms.end(),
                                             Term::intercept()) != design.treatment_terms.end();
  if (treatment_intercept && !options.rho_fixed) {
    throw IdentificationError(IdentificationCondition::TreatmentInterceptOrFixedRho,
                              "treatment design contains an intercept while rho is free; drop the intercept or fix rho");
  }
  if (options.estimate_sigma_u) {
    warnings.emplace_back(
        "sigma_u is estimated: with one subject per frailty it is not identified separately from the baseline "
        "hazard, so its estimate and those depending on it are not consistent");
  }
  return warnings;
}

namespace {

double term_value(const Term& term, const SubjectRecord& r) {
  const double w = r.treated ? 1.0 : 0.0;
  switch (term.kind) {
    case Term::Kind::Intercept: return 1.0;
    case Term::Kind::Treatment: return w;
    case Term::Kind::Covariate: return r.covariates[term.index];
    case Term::Kind::Instrument: return r.instruments[term.index];
    case Term::Kind::TreatmentByCovariate: return w * r.covariates[term.index];
  }
  return 0.0;
}

MatrixXd assemble(const Dataset& dataset, const std::vector<Term>& terms) {
  MatrixXd out(static_cast<Eigen::Index>(dataset.size()), static_cast<Eigen::Index>(terms.size()));
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(i, c) = term_value(terms[c], dataset.records[i]);
  return out;
}

}  // namespace

DesignMatrices build_designs(const Dataset& dataset, const DesignSpec& design) {
  validate_design(design, dataset.p, dataset.K);
  return {assemble(dataset, design.treatment_terms), assemble(dataset, design.hazard_terms)};
}

ModelFrame make_frame(const Dataset& dataset, const DesignSpec& design) {
  auto designs = build_designs(dataset, design);
  const auto n = static_cast<Eigen::Index>(dataset.size());
  ModelFrame frame;
  frame.time.resize(n);
  frame.event.resize(n);
  frame.treated.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    frame.time[i] = dataset.records[i].time;
    frame.event[i] = dataset.records[i].event;
    frame.treated[i] = dataset.records[i].treated;
  }
  frame.treatment_design = std::move(designs.treatment);
  frame.hazard_design = std::move(designs.hazard);
  frame.treatment_column = design.treatment_column();
  return frame;
}

void ParameterSet::validate() const {
  if (!alpha.allFinite() || !beta.allFinite()) throw Error(ErrorKind::InvalidParameter, "non-finite coefficient");
  if (!(std::abs(rho) <= kRhoCap)) throw Error(ErrorKind::InvalidParameter, "rho outside [-rho_cap, rho_cap]");
  if (!(sigma_u > 0.0) || !std::isfinite(sigma_u)) throw Error(ErrorKind::InvalidParameter, "sigma_u must be positive");
}

BaselineHazard::BaselineHazard(std::vector<double> event_times, std::vector<double> jumps)
    : event_times_(std::move(event_times)), jumps_(std::move(jumps)) {
  if (event_times_.size() != jumps_.size()) {
    throw Error(ErrorKind::InvalidParameter, "baseline times and jumps differ in length");
  }
  cumulative_.assign(jumps_.size() + 1, 0.0);
  for (std::size_t k = 0; k < jumps_.size(); ++k) {
    if (!(jumps_[k] > 0.0) || !std::isfinite(jumps_[k])) throw Error(ErrorKind::InvalidParameter, "baseline jump must be positive");
    if (!std::isfinite(event_times_[k]) || (k > 0 && !(event_times_[k] > event_times_[k - 1]))) {
      throw Error(ErrorKind::InvalidParameter, "baseline event times must be finite and strictly increasing");
    }
    cumulative_[k + 1] = cumulative_[k] + jumps_[k];
  }
}

double BaselineHazard::cumulative(double t) const {
  const auto k = std::upper_bound(event_times_.begin(), event_times_.end(), t) - event_times_.begin();
  return cumulative_[static_cast<std::size_t>(k)];
}

std::optional<double> BaselineHazard::jump_at(double t) const {
  auto it = std::lower_bound(event_times_.begin(), event_times_.end(), t);
  if (it == event_times_.end() || *it != t) return std::nullopt;
  return jumps_[static_cast<std::size_t>(it - event_times_.begin())];
}

}  // namespace ivfrailty

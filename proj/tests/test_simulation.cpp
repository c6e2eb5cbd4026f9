#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "ivfrailty/simulation.hpp"
#include "support/fixtures.hpp"

using namespace ivfrailty;
using fixture::thrown_kind;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("scenario presets") {
  CHECK(ScenarioSpec::preset(1, 200).correctly_specified());
  CHECK(ScenarioSpec::preset(2, 200).sigma_u2 == 0.1);
  CHECK(ScenarioSpec::preset(3, 200).correlation == 0.1);
  CHECK(ScenarioSpec::preset(4, 200).alpha_wz == 0.1);
  CHECK(ScenarioSpec::preset(5, 200).treatment_family == TreatmentFamily::Logistic);
  CHECK(ScenarioSpec::preset(6, 200).frailty_family == FrailtyFamily::CenteredGamma);
  CHECK(ScenarioSpec::preset(7, 200).frailty_family == FrailtyFamily::StudentT);
  CHECK_FALSE(ScenarioSpec::preset(7, 200).correctly_specified());
  CHECK(ScenarioSpec::preset(1, 200).true_hazard_ratio() == doctest::Approx(1.6487212707));
  CHECK(thrown_kind([] { ScenarioSpec::preset(8, 200); }) == ErrorKind::InvalidSpec);
  CHECK(thrown_kind([] { ScenarioSpec::preset(0, 200); }) == ErrorKind::InvalidSpec);
  ScenarioSpec bad = ScenarioSpec::preset(1, 200);
  bad.correlation = 1.0;
  CHECK(thrown_kind([&] { bad.validate(); }) == ErrorKind::InvalidSpec);
}

TEST_CASE("generated data is valid and reproducible") {
  for (int id = 1; id <= 7; ++id) {
    SeededStream a(5, 1), b(5, 1);
    const SimulatedData x = generate(ScenarioSpec::preset(id, 300), a);
    const SimulatedData y = generate(ScenarioSpec::preset(id, 300), b);
    REQUIRE(x.dataset.size() == 300);
    CHECK(x.latent_u == y.latent_u);
    CHECK(x.censoring_fraction == y.censoring_fraction);
    for (std::size_t i = 0; i < 300; ++i) {
      CHECK(x.dataset.records[i].time == y.dataset.records[i].time);
      CHECK(x.dataset.records[i].time > 0.0);
    }
  }
}

TEST_CASE("centred gamma frailty has the stated correlation with V") {
  // Reconstruct V from the same stream layout: V is standard normal, drawn after x and z.
  const ScenarioSpec spec = ScenarioSpec::preset(6, 100000);
  SeededStream stream(21, 0);
  const SimulatedData data = generate(spec, stream);
  SeededStream replay(21, 0);
  std::vector<double> v, u;
  for (int i = 0; i < spec.n; ++i) {
    sample(Uniform{-1.0, 1.0}, replay);
    sample(Gamma{2.0, 2.0}, replay);
    const double vi = sample(Normal{}, replay);
    sample(Gamma{0.15 * std::exp(vi), 1.0}, replay);
    v.push_back(vi);
    u.push_back(data.latent_u[i]);
  }
  const double mean_u = data.latent_u.mean();
  CHECK(std::abs(mean_u) < 1e-12);
  const double r = correlation(u, v);
  MESSAGE("Cor(U, V) = " << r);
  CHECK(std::abs(r - 0.4) < 0.05);
}

TEST_CASE("without confounding the frailty law does not depend on treatment") {
  ScenarioSpec spec = ScenarioSpec::preset(1, 100000);
  spec.correlation = 0.0;
  SeededStream stream(22, 0);
  const SimulatedData data = generate(spec, stream);
  // Records are in generation order; latent_u is aligned with them.
  std::vector<double> treated, control;
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    (data.dataset.records[i].treated ? treated : control).push_back(data.latent_u[static_cast<Eigen::Index>(i)]);
  }
  CHECK(ks_statistic(treated, control) < 0.02);
}

TEST_CASE("confounding raises the ordinary hazard ratio") {
  SeededStream stream(23, 0);
  const SimulatedData data = generate(ScenarioSpec::preset(1, 20000), stream);
  std::vector<double> treated, control;
  for (std::size_t i = 0; i < data.dataset.size(); ++i) {
    (data.dataset.records[i].treated ? treated : control).push_back(data.latent_u[static_cast<Eigen::Index>(i)]);
  }
  const auto mean = [](const std::vector<double>& x) { return std::accumulate(x.begin(), x.end(), 0.0) / x.size(); };
  CHECK(mean(treated) > mean(control) + 0.2);
}

TEST_CASE("summaries") {
  const std::vector<double> three{1.0, 2.0, 3.0};
  const ReplicationSummary s = summarize(three, 2.0);
  CHECK(s.mean == 2.0);
  CHECK(s.sd == 1.0);
  CHECK(s.median == 2.0);
  CHECK(s.rmse == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(s.cv == 0.5);
  CHECK(s.min == 1.0);
  CHECK(s.max == 3.0);

  const std::vector<double> exact{1.649, 1.649};
  const ReplicationSummary e = summarize(exact, 1.649);
  CHECK(e.rmse == 0.0);
  CHECK(e.sd == 0.0);

  const std::vector<double> one{1.649};
  const ReplicationSummary o = summarize(one, 1.649);
  CHECK(o.rmse == 0.0);
  CHECK(o.mean == 1.649);
  CHECK(o.median == 1.649);
  CHECK(o.sd == 0.0);
  CHECK_FALSE(o.sd_defined);

  const std::vector<double> even{4.0, 1.0, 3.0, 2.0};
  CHECK(summarize(even, 0.0).median == 2.5);
  CHECK(thrown_kind([] { summarize({}, 1.0); }) == ErrorKind::EmptyEstimates);
}

TEST_CASE("replications are deterministic and report every estimator") {
  SimulationConfig config;
  config.em.draws = 20;
  config.seed = 4;
  const ScenarioSpec spec = ScenarioSpec::preset(1, 120);
  const SimulationReport a = run_replications(spec, 3, config);
  config.jobs = 2;
  const SimulationReport b = run_replications(spec, 3, config);
  REQUIRE(a.summaries.size() == b.summaries.size());
  for (std::size_t k = 0; k < a.summaries.size(); ++k) {
    CHECK(a.summaries[k].estimator == b.summaries[k].estimator);
    CHECK(a.summaries[k].mean == b.summaries[k].mean);
    CHECK(a.summaries[k].n_ok + a.summaries[k].n_failed == 3);
  }
  CHECK(a.summaries[0].estimator == "Proposed");
  CHECK(a.summaries[1].estimator == "Ordinary");
  CHECK(a.summaries[2].estimator == "Ordinary-infeasible");
  for (int k = 0; k < 3; ++k) CHECK(a.summaries[k].truth == doctest::Approx(std::exp(0.5)));
  CHECK(thrown_kind([&] { run_replications(spec, 0, config); }) == ErrorKind::InvalidSpec);

  const SimulationReport single = run_replications(spec, 1, config);
  CHECK(single.summaries[1].mean == single.summaries[1].median);
  CHECK_FALSE(single.summaries[1].sd_defined);
}

TEST_CASE("failed replications are counted, not dropped") {
  std::vector<ReplicationRecord> records(3);
  records[0].ordinary = {true, VectorXd::Constant(2, 0.5), ""};
  records[1].ordinary = {false, VectorXd(), "diverged"};
  records[2].ordinary = {true, VectorXd::Constant(2, 0.7), ""};
  records[0].infeasible = records[2].infeasible = records[1].infeasible = {true, VectorXd::Constant(3, 0.5), ""};
  records[1].proposed_ok = true;
  records[1].proposed = {VectorXd::Constant(2, 1.0), VectorXd::Constant(2, 0.4), 0.3, 1.0};
  const auto rows = summarize_replications(ScenarioSpec::preset(7, 100), records);
  CHECK(rows[0].n_ok == 1);
  CHECK(rows[0].n_failed == 2);
  CHECK(rows[1].n_ok == 2);
  CHECK(rows[1].n_failed == 1);
  CHECK(std::isnan(rows.back().truth));  // misspecified: no true sigma_u
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ivfrailty/cox.hpp"
#include "ivfrailty/random.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace ivfrailty;
using fixture::thrown_kind;

namespace {

// Partial log-likelihood straight from its definition, O(n^2).
double partial_loglik_direct(const VectorXd& beta, const MatrixXd& X, const VectorXd& time, const EventVector& event,
                             const VectorXd& offset) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < time.size(); ++i) {
    if (!event[i]) continue;
    double risk = 0.0;
    for (Eigen::Index j = 0; j < time.size(); ++j) {
      if (time[j] >= time[i]) risk += std::exp(X.row(j).dot(beta) + offset[j]);
    }
    total += X.row(i).dot(beta) - std::log(risk);
  }
  return total;
}

double probit_direct(const VectorXd& alpha, const MatrixXd& X, const EventVector& w) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double a = X.row(i).dot(alpha);
    total += std::log(0.5 * std::erfc(-(w[i] ? a : -a) / std::sqrt(2.0)));
  }
  return total;
}

struct Sample {
  MatrixXd X;
  VectorXd time;
  EventVector event;
  VectorXd offset;
};

Sample random_sample(int n, int p, std::uint64_t seed, double censor_share = 0.3) {
  SeededStream s(seed, 0);
  Sample out{MatrixXd(n, p), VectorXd(n), EventVector(n), VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) out.X(i, j) = sample(Normal{}, s);
    out.time[i] = sample(Exponential{1.0}, s);
    out.event[i] = s.uniform() > censor_share;
    out.offset[i] = 0.3 * sample(Normal{}, s);
  }
  return out;
}

bool negative_semidefinite(const MatrixXd& h) {
  const MatrixXd shifted = -h + 1e-10 * MatrixXd::Identity(h.rows(), h.cols());
  return Eigen::LLT<MatrixXd>(shifted).info() == Eigen::Success;
}

}  // namespace

TEST_CASE("profile log-likelihood by hand") {
  const MatrixXd X = (MatrixXd(2, 1) << 1.0, 0.0).finished();
  const VectorXd time = (VectorXd(2) << 1.0, 2.0).finished();
  const EventVector event = EventVector::Constant(2, true);
  const CoxEvaluation e = cox_profile_loglik(VectorXd::Zero(1), X, time, event, VectorXd::Zero(2));
  CHECK(e.value == doctest::Approx(-std::log(2.0)));
}

TEST_CASE("profile log-likelihood matches the direct formula, with tied censored times") {
  Sample s = random_sample(7, 2, 17);
  s.time[3] = s.time[5];
  s.event[3] = false;
  const VectorXd beta = (VectorXd(2) << 0.4, -0.7).finished();
  CHECK(cox_profile_loglik(beta, s.X, s.time, s.event, s.offset).value ==
        doctest::Approx(partial_loglik_direct(beta, s.X, s.time, s.event, s.offset)).epsilon(1e-13));
}

TEST_CASE("cox gradient and Hessian against finite differences; concavity") {
  for (int point = 0; point < 20; ++point) {
    const Sample s = random_sample(6, 2, 100 + point);
    SeededStream r(200 + point, 0);
    const VectorXd beta = (VectorXd(2) << sample(Normal{}, r), sample(Normal{}, r)).finished();
    const CoxEvaluation e = cox_profile_loglik(beta, s.X, s.time, s.event, s.offset);
    const auto value = [&](const VectorXd& b) { return cox_profile_loglik(b, s.X, s.time, s.event, s.offset).value; };
    const auto grad = [&](const VectorXd& b) { return cox_profile_loglik(b, s.X, s.time, s.event, s.offset).gradient; };
    CHECK(oracle::relative_error(e.gradient, oracle::gradient(value, beta)) < 1e-6);
    const MatrixXd fd_hessian = oracle::jacobian(grad, beta);
    CHECK(((e.hessian - fd_hessian).array().abs() / fd_hessian.array().abs().max(1.0)).maxCoeff() < 1e-6);
    CHECK(negative_semidefinite(e.hessian));
  }
}

TEST_CASE("constant offset shifts the value and leaves the argmax") {
  const Sample s = random_sample(8, 1, 5);
  const VectorXd beta = VectorXd::Constant(1, 0.3);
  const VectorXd shifted = s.offset.array() + 1.7;
  const double events = static_cast<double>(s.event.count());
  CHECK(cox_profile_loglik(beta, s.X, s.time, s.event, shifted).value ==
        doctest::Approx(cox_profile_loglik(beta, s.X, s.time, s.event, s.offset).value - events * 1.7));
  CHECK(fit_cox(s.X, s.time, s.event, shifted).beta[0] ==
        doctest::Approx(fit_cox(s.X, s.time, s.event, s.offset).beta[0]).epsilon(1e-10));
}

TEST_CASE("fit_cox against a brute-force maximiser") {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    const Sample s = random_sample(6, 1, seed, 0.2);
    const auto f = [&](double b) {
      return partial_loglik_direct(VectorXd::Constant(1, b), s.X, s.time, s.event, s.offset);
    };
    const double brute = oracle::maximize_1d(f, -20.0, 20.0);
    const CoxFit fit = fit_cox(s.X, s.time, s.event, s.offset);
    CHECK(fit.converged);
    CHECK(std::abs(fit.beta[0] - brute) < 1e-5);
  }
}

TEST_CASE("fit_cox invariances and failure modes") {
  const Sample s = random_sample(8, 1, 9);
  const CoxFit zero = fit_cox(MatrixXd::Zero(8, 1), s.time, s.event, VectorXd::Zero(8));
  CHECK(zero.beta[0] == 0.0);

  const VectorXd scaled = s.time * 3.7;
  CHECK(fit_cox(s.X, scaled, s.event, s.offset).beta[0] == fit_cox(s.X, s.time, s.event, s.offset).beta[0]);

  // Covariate perfectly ordered with event times: the partial likelihood is monotone.
  MatrixXd X(4, 1);
  X << 3.0, 2.0, 1.0, 0.0;
  const VectorXd t = (VectorXd(4) << 1.0, 2.0, 3.0, 4.0).finished();
  CHECK(thrown_kind([&] { fit_cox(X, t, EventVector::Constant(4, true), VectorXd::Zero(4)); }) ==
        ErrorKind::MonotoneLikelihoodDivergence);
}

TEST_CASE("breslow jumps") {
  const MatrixXd X = MatrixXd::Zero(3, 1);
  const VectorXd t = (VectorXd(3) << 2.0, 1.0, 3.0).finished();
  const EventVector all = EventVector::Constant(3, true);
  const BaselineHazard h = breslow_update(VectorXd::Zero(1), X, t, all, VectorXd::Zero(3));
  REQUIRE(h.jumps().size() == 3);
  CHECK(h.jumps()[0] == 1.0 / 3.0);
  CHECK(h.jumps()[1] == 0.5);
  CHECK(h.jumps()[2] == 1.0);
  CHECK(h.event_times()[0] == 1.0);

  const BaselineHazard halved = breslow_update(VectorXd::Zero(1), X, t, all, VectorXd::Constant(3, std::log(2.0)));
  for (std::size_t k = 0; k < 3; ++k) CHECK(halved.jumps()[k] == h.jumps()[k] / 2.0);

  EventVector middle_censored = all;
  middle_censored[0] = false;  // t = 2
  const BaselineHazard two = breslow_update(VectorXd::Zero(1), X, t, middle_censored, VectorXd::Zero(3));
  REQUIRE(two.jumps().size() == 2);
  CHECK(two.jumps()[0] == 1.0 / 3.0);
  CHECK(two.jumps()[1] == 1.0);
}

TEST_CASE("breslow profiles the baseline out of the Cox block") {
  const Sample s = random_sample(8, 2, 21);
  const VectorXd beta = (VectorXd(2) << 0.2, -0.5).finished();
  SeededStream r(4, 4);
  VectorXd e_u(8), e_expu(8);
  for (int i = 0; i < 8; ++i) {
    e_u[i] = 0.3 * sample(Normal{}, r);
    e_expu[i] = std::exp(0.4 * sample(Normal{}, r));
  }
  const VectorXd offset = e_expu.array().log();
  const BaselineHazard h = breslow_update(beta, s.X, s.time, s.event, offset);
  const double block = cox_block_objective(beta, h, s.X, s.time, s.event, e_u, e_expu);
  const double events = static_cast<double>(s.event.count());
  double event_frailty = 0.0;
  for (int i = 0; i < 8; ++i) event_frailty += s.event[i] ? e_u[i] : 0.0;
  const double profile = cox_profile_loglik(beta, s.X, s.time, s.event, offset).value;
  CHECK(block == doctest::Approx(profile - events + event_frailty).epsilon(1e-12));

  // Breslow maximises the block over the jumps: perturbing them never helps.
  std::vector<double> times(h.event_times().begin(), h.event_times().end());
  std::vector<double> jumps(h.jumps().begin(), h.jumps().end());
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    for (double factor : {0.9, 1.1}) {
      auto perturbed = jumps;
      perturbed[k] *= factor;
      CHECK(cox_block_objective(beta, BaselineHazard(times, perturbed), s.X, s.time, s.event, e_u, e_expu) < block);
    }
  }
}

TEST_CASE("probit") {
  // (z, w) = (1, 1), (-1, 0) repeated: perfectly separated, so add one crossing pair.
  MatrixXd X(10, 1);
  EventVector w(10);
  for (int i = 0; i < 4; ++i) {
    X(2 * i, 0) = 1.0;
    w[2 * i] = true;
    X(2 * i + 1, 0) = -1.0;
    w[2 * i + 1] = false;
  }
  X(8, 0) = 1.0;
  w[8] = false;
  X(9, 0) = -1.0;
  w[9] = true;
  const ProbitFit fit = fit_probit(X, w);
  const double brute = oracle::maximize_1d([&](double a) { return probit_direct(VectorXd::Constant(1, a), X, w); }, -10, 10);
  CHECK(fit.converged);
  CHECK(std::abs(fit.alpha[0] - brute) < 1e-5);

  CHECK(thrown_kind([&] { fit_probit(X, EventVector::Constant(10, true)); }) == ErrorKind::Separation);

  MatrixXd separated(8, 1);
  EventVector sw(8);
  for (int i = 0; i < 8; ++i) {
    separated(i, 0) = i < 4 ? 1.0 : -1.0;
    sw[i] = i < 4;
  }
  CHECK(thrown_kind([&] { fit_probit(separated, sw); }) == ErrorKind::Separation);
}

TEST_CASE("probit matches a brute-force maximiser in two dimensions") {
  SeededStream s(77, 0);
  MatrixXd X(8, 2);
  EventVector w(8);
  for (int i = 0; i < 8; ++i) {
    X(i, 0) = sample(Gamma{2.0, 2.0}, s);
    X(i, 1) = sample(Uniform{-1.0, 1.0}, s);
    w[i] = X(i, 0) - 1.0 + sample(Normal{}, s) >= 0.0;
  }
  w[0] = !w[0];
  w[1] = !w[1];
  ProbitFit fit;
  REQUIRE_NOTHROW(fit = fit_probit(X, w));
  // Coordinate ascent with 1-D brute force converges to the joint maximiser of a concave function.
  VectorXd a = VectorXd::Zero(2);
  for (int sweep = 0; sweep < 200; ++sweep) {
    for (int j = 0; j < 2; ++j) {
      a[j] = oracle::maximize_1d(
          [&](double v) {
            VectorXd c = a;
            c[j] = v;
            return probit_direct(c, X, w);
          },
          a[j] - 5.0, a[j] + 5.0, 400);
    }
  }
  CHECK(std::abs(fit.alpha[0] - a[0]) < 1e-5);
  CHECK(std::abs(fit.alpha[1] - a[1]) < 1e-5);
}

TEST_CASE("probit derivatives against finite differences; concavity") {
  SeededStream s(31, 0);
  MatrixXd X(20, 2);
  EventVector w(20);
  for (int i = 0; i < 20; ++i) {
    X(i, 0) = sample(Normal{}, s);
    X(i, 1) = sample(Normal{}, s);
    w[i] = s.uniform() < 0.5;
  }
  for (int point = 0; point < 20; ++point) {
    const VectorXd alpha = (VectorXd(2) << sample(Normal{}, s), sample(Normal{}, s)).finished();
    const ProbitEvaluation e = probit_loglik(alpha, X, w);
    CHECK(e.value == doctest::Approx(probit_direct(alpha, X, w)).epsilon(1e-12));
    CHECK(oracle::relative_error(e.gradient, oracle::gradient([&](const VectorXd& a) { return probit_loglik(a, X, w).value; }, alpha)) < 1e-6);
    CHECK(negative_semidefinite(e.hessian));
  }
}

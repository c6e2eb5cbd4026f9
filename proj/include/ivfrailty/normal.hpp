#pragma once

// Standard normal density and distribution functions.
//
// log_std_normal_cdf stays finite far into the lower tail: below -30 the
// erfc route runs out of exponent range, so the Mills ratio is evaluated by
// its continued fraction instead.

#include <cmath>
#include <numbers>

namespace ivfrailty {

template <typename Scalar>
Scalar log_std_normal_pdf(Scalar x) {
  return Scalar(-0.5) * x * x - Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
}

template <typename Scalar>
Scalar std_normal_pdf(Scalar x) {
  return std::exp(log_std_normal_pdf(x));
}

template <typename Scalar>
Scalar std_normal_cdf(Scalar x) {
  return Scalar(0.5) * std::erfc(-x / std::numbers::sqrt2_v<Scalar>);
}

// Mills ratio R(t) = (1 - Phi(t)) / phi(t) for t >= 20, by backward
// evaluation of R = 1 / (t + 1 / (t + 2 / (t + 3 / ...))).
template <typename Scalar>
Scalar mills_ratio_upper_tail(Scalar t) {
  Scalar tail = t;
  for (int k = 80; k >= 1; --k) tail = t + Scalar(k) / tail;
  return Scalar(1) / tail;
}

template <typename Scalar>
Scalar log_std_normal_cdf(Scalar x) {
  if (x > Scalar(5)) return std::log1p(-Scalar(0.5) * std::erfc(x / std::numbers::sqrt2_v<Scalar>));
  if (x > Scalar(-30)) return std::log(std_normal_cdf(x));
  return log_std_normal_pdf(x) + std::log(mills_ratio_upper_tail(-x));
}

// phi(x) / Phi(x), the derivative of log Phi. Tends to -x as x -> -inf.
template <typename Scalar>
Scalar normal_inverse_mills(Scalar x) {
  if (x < Scalar(-30)) return Scalar(1) / mills_ratio_upper_tail(-x);
  return std::exp(log_std_normal_pdf(x) - log_std_normal_cdf(x));
}

}  // namespace ivfrailty

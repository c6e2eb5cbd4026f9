#pragma once

#include <optional>
#include <vector>

#include "ivfrailty/model.hpp"

namespace fixture {

using ivfrailty::ErrorKind;

inline ivfrailty::SubjectRecord record(double time, bool event, bool treated, double x, double z) {
  ivfrailty::SubjectRecord r;
  r.time = time;
  r.event = event;
  r.treated = treated;
  r.covariates = Eigen::VectorXd::Constant(1, x);
  r.instruments = Eigen::VectorXd::Constant(1, z);
  return r;
}

/// Kind of the ivfrailty::Error thrown by fn, or nullopt when nothing is thrown.
template <typename Fn>
std::optional<ErrorKind> thrown_kind(Fn&& fn) {
  try {
    fn();
  } catch (const ivfrailty::Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

}  // namespace fixture

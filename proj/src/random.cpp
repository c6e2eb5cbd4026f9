#include "ivfrailty/random.hpp"

#include <cmath>
#include <string>

#include <boost/random/exponential_distribution.hpp>
#include <boost/random/gamma_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/student_t_distribution.hpp>

#include "ivfrailty/error.hpp"

namespace ivfrailty {

namespace {

std::seed_seq make_seed_seq(std::uint64_t seed, std::uint64_t stream_id) {
  return std::seed_seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream_id), static_cast<std::uint32_t>(stream_id >> 32)};
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream_id) {
  auto seq = make_seed_seq(seed, stream_id);
  return std::mt19937_64(seq);
}

void require(bool ok, const char* what) {
  if (!ok) throw Error(ErrorKind::InvalidParameter, what);
}

}  // namespace

SeededStream::SeededStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(make_engine(seed, stream_id)) {}

double SeededStream::uniform() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t mix_stream_id(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void validate(const Normal& d) {
  require(std::isfinite(d.mean) && d.variance > 0.0 && std::isfinite(d.variance), "Normal needs finite mean, variance > 0");
}
void validate(const BivariateNormal& d) {
  require(std::abs(d.rho) < 1.0 && d.sigma_u > 0.0 && std::isfinite(d.sigma_u), "BivariateNormal needs |rho| < 1, sigma_u > 0");
}
void validate(const Uniform& d) {
  require(std::isfinite(d.lower) && std::isfinite(d.upper) && d.lower < d.upper, "Uniform needs a < b");
}
void validate(const Gamma& d) {
  require(d.shape > 0.0 && d.rate > 0.0 && std::isfinite(d.shape) && std::isfinite(d.rate), "Gamma needs shape > 0, rate > 0");
}
void validate(const Logistic& d) {
  require(std::isfinite(d.location) && d.scale > 0.0 && std::isfinite(d.scale), "Logistic needs scale > 0");
}
void validate(const StudentT& d) {
  require(std::isfinite(d.location) && d.df > 0.0 && std::isfinite(d.df), "StudentT needs df > 0");
}
void validate(const Exponential& d) {
  require(d.rate > 0.0 && std::isfinite(d.rate), "Exponential needs rate > 0");
}

double sample(const Normal& d, SeededStream& stream) {
  validate(d);
  boost::random::normal_distribution<double> dist(d.mean, std::sqrt(d.variance));
  return dist(stream.engine());
}

double sample(const Uniform& d, SeededStream& stream) {
  validate(d);
  return d.lower + (d.upper - d.lower) * stream.uniform();
}

double sample(const Gamma& d, SeededStream& stream) {
  validate(d);
  boost::random::gamma_distribution<double> dist(d.shape, 1.0 / d.rate);
  return dist(stream.engine());
}

double sample(const Logistic& d, SeededStream& stream) {
  validate(d);
  const double u = stream.uniform();
  return d.location + d.scale * std::log(u / (1.0 - u));
}

double sample(const StudentT& d, SeededStream& stream) {
  validate(d);
  boost::random::student_t_distribution<double> dist(d.df);
  return d.location + dist(stream.engine());
}

double sample(const Exponential& d, SeededStream& stream) {
  validate(d);
  boost::random::exponential_distribution<double> dist(d.rate);
  return dist(stream.engine());
}

std::pair<double, double> sample(const BivariateNormal& d, SeededStream& stream) {
  validate(d);
  boost::random::normal_distribution<double> standard;
  const double v = standard(stream.engine());
  const double e = standard(stream.engine());
  const double u = d.sigma_u * (d.rho * v + std::sqrt(1.0 - d.rho * d.rho) * e);
  return {v, u};
}

}  // namespace ivfrailty

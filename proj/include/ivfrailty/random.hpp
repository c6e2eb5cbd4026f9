#pragma once

#include <cstdint>
#include <random>
#include <utility>

namespace ivfrailty {

/// Reproducible random stream keyed by (seed, stream_id).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard, seeded through std::seed_seq (also standardised). Samplers come
/// from Boost.Random, which ships its algorithms in headers, so a given
/// (seed, stream_id) yields the same draws on every platform with the same
/// Boost version. Distinct stream ids give statistically independent streams.
class SeededStream {
 public:
  using engine_type = std::mt19937_64;

  SeededStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  /// Uniform on the open interval (0, 1), 53-bit resolution.
  double uniform();
  engine_type& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  engine_type engine_;
};

/// Combines two 64-bit keys into one stream id (splitmix64 finaliser).
std::uint64_t mix_stream_id(std::uint64_t a, std::uint64_t b) noexcept;

struct Normal {
  double mean = 0.0;
  double variance = 1.0;
};

/// (V, U) with Var(V) = 1, Var(U) = sigma_u^2, Cov(V, U) = rho * sigma_u.
struct BivariateNormal {
  double rho = 0.0;
  double sigma_u = 1.0;
};

struct Uniform {
  double lower = 0.0;
  double upper = 1.0;
};

struct Gamma {
  double shape = 1.0;
  double rate = 1.0;
};

struct Logistic {
  double location = 0.0;
  double scale = 1.0;
};

/// location + t_df.
struct StudentT {
  double location = 0.0;
  double df = 1.0;
};

struct Exponential {
  double rate = 1.0;
};

void validate(const Normal& d);
void validate(const BivariateNormal& d);
void validate(const Uniform& d);
void validate(const Gamma& d);
void validate(const Logistic& d);
void validate(const StudentT& d);
void validate(const Exponential& d);

double sample(const Normal& d, SeededStream& stream);
double sample(const Uniform& d, SeededStream& stream);
double sample(const Gamma& d, SeededStream& stream);
double sample(const Logistic& d, SeededStream& stream);
double sample(const StudentT& d, SeededStream& stream);
double sample(const Exponential& d, SeededStream& stream);
/// Returns (V, U).
std::pair<double, double> sample(const BivariateNormal& d, SeededStream& stream);

}  // namespace ivfrailty

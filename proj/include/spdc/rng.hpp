#pragma once

#include <cstdint>
#include <random>

namespace spdc {

/// Mixes (seed, stream, salt) into a well-spread 64-bit engine seed,
/// so disjoint work units (time slices, frame batches) get independent
/// reproducible streams regardless of thread scheduling.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t salt = 0);

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0,
                     std::uint64_t salt = 0)
      : eng_(mix_seed(seed, stream, salt)) {}

  /// Uniform in [0, 1).
  double uniform() { return u01_(eng_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal(double mean, double sigma) { return mean + sigma * n01_(eng_); }
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    return pois_(eng_, pois_t::param_type(lambda));
  }
  std::uint64_t binomial(std::uint64_t n, double p) {
    if (n == 0 || p <= 0.0) return 0;
    if (p >= 1.0) return n;
    return binom_(eng_, binom_t::param_type(static_cast<long long>(n), p));
  }
  std::uint64_t integer(std::uint64_t bound) {  // uniform in [0, bound)
    return std::uniform_int_distribution<std::uint64_t>(0, bound - 1)(eng_);
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  using pois_t = std::poisson_distribution<std::uint64_t>;
  using binom_t = std::binomial_distribution<long long>;
  std::mt19937_64 eng_;
  std::uniform_real_distribution<double> u01_{0.0, 1.0};
  std::normal_distribution<double> n01_{0.0, 1.0};
  pois_t pois_;
  binom_t binom_;
};

}  // namespace spdc

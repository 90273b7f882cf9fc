#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace lmmsubset {

/// Philox4x32-10 counter-based generator.
///
/// A stream is identified by (seed, stream). Outputs are a pure function of
/// (seed, stream, position), so independent workers can own disjoint streams
/// and reproduce the same numbers regardless of scheduling.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t stream) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept;

  // Uniform on the open interval (0, 1).
  double uniform() noexcept;
  double normal() { return normal_(*this); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  // Gamma with shape/rate parametrization.
  double gamma(double shape, double rate);
  // Inverse-gamma with shape/rate: 1 / Gamma(shape, rate).
  double inverse_gamma(double shape, double rate);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;

 private:
  void refill() noexcept;

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int used_ = 2;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Raw Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Child seed in the derivation tree: master -> (tag, index).
/// Tags in use: "chain", "predictive", "folds", "fold", "fold-predictive",
/// "rep", "data".
std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                          std::uint64_t index = 0) noexcept;

}  // namespace lmmsubset

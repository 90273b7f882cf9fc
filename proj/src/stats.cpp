#include "lmmsubset/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace lmmsubset::stats {

double mean(std::span<const double> x) {
  if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double quantile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of empty sample");
  q = std::clamp(q, 0.0, 1.0);
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::span<const double> x, double q) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  return quantile_sorted(s, q);
}

std::pair<double, double> hpd_interval(std::span<const double> x, double level) {
  if (x.empty()) throw std::invalid_argument("hpd of empty sample");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const auto width = static_cast<std::size_t>(std::ceil(level * static_cast<double>(n)));
  if (width >= n) return {s.front(), s.back()};
  std::size_t best = 0;
  double best_len = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + width < n; ++i) {
    const double len = s[i + width] - s[i];
    if (len < best_len) {
      best_len = len;
      best = i;
    }
  }
  return {s[best], s[best + width]};
}

double effective_sample_size(std::span<const double> x, int max_lag) {
  const std::size_t n = x.size();
  if (n < 4) return static_cast<double>(n);
  const double m = mean(x);
  double c0 = 0.0;
  for (double v : x) c0 += (v - m) * (v - m);
  c0 /= static_cast<double>(n);
  if (c0 <= 0.0) return static_cast<double>(n);

  auto autocov = [&](std::size_t lag) {
    double s = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) s += (x[i] - m) * (x[i + lag] - m);
    return s / static_cast<double>(n);
  };

  const std::size_t limit = std::min<std::size_t>(n - 1, static_cast<std::size_t>(max_lag));
  double sum_pairs = 0.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; 2 * k + 1 <= limit; ++k) {
    double pair = autocov(2 * k) + autocov(2 * k + 1);
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    sum_pairs += pair;
  }
  const double tau = std::max(-1.0 + 2.0 * sum_pairs / c0, 1e-3);
  return std::min(static_cast<double>(n) / tau, static_cast<double>(n) * std::log10(static_cast<double>(n)));
}

double batch_means_se(std::span<const double> x, int batches) {
  const std::size_t size = x.size() / static_cast<std::size_t>(batches);
  if (size == 0) return std::sqrt(variance(x) / static_cast<double>(x.size()));
  std::vector<double> means;
  means.reserve(batches);
  for (int b = 0; b < batches; ++b) means.push_back(mean(x.subspan(b * size, size)));
  return std::sqrt(variance(means) / static_cast<double>(batches));
}

}  // namespace lmmsubset::stats

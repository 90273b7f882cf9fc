#pragma once

#include <span>
#include <utility>
#include <vector>

namespace lmmsubset::stats {

double mean(std::span<const double> x);
// Sample variance with n-1 denominator.
double variance(std::span<const double> x);

// Type-7 (linear interpolation) quantile, q in [0, 1].
double quantile(std::span<const double> x, double q);
double quantile_sorted(std::span<const double> sorted, double q);

// Shortest interval containing a `level` fraction of the draws.
std::pair<double, double> hpd_interval(std::span<const double> x, double level);

// Effective sample size via Geyer's initial monotone sequence estimator.
double effective_sample_size(std::span<const double> x, int max_lag = 1000);

// Monte Carlo standard error of the mean using non-overlapping batch means.
double batch_means_se(std::span<const double> x, int batches = 50);

}  // namespace lmmsubset::stats

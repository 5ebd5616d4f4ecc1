#pragma once

#include <span>
#include <vector>

namespace rpf::stats {

double mean(std::span<double const> x);
/// Linear interpolation between order statistics, q in [0, 1].
double quantile(std::span<double const> x, double q);
double median(std::span<double const> x);

/// Coefficient of determination of the least-squares line y ~ a + b x.
double r_squared(std::span<double const> x, std::span<double const> y);

/// Pearson correlation of the ranks (average ranks for ties).
double spearman(std::span<double const> x, std::span<double const> y);

std::vector<double> ranks(std::span<double const> x);

}  // namespace rpf::stats

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

namespace mubsde {

/// Cascade (pairwise) summation: order-stable and accurate for long vectors.
double pairwise_sum(const std::vector<double>& xs);

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;  // standard error of the mean
  std::size_t n = 0;
};

MeanSE mean_se(const std::vector<double>& xs);

/// One-sample Kolmogorov-Smirnov statistic against a cdf.
double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf);

/// Asymptotic tail P(K > x) of the Kolmogorov distribution.
double kolmogorov_tail(double x);

}  // namespace mubsde

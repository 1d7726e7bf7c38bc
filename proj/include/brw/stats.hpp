#ifndef BRW_STATS_HPP
#define BRW_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace brw {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> xs);

// Empirical quantile (linear interpolation) of an already-sorted sample.
double quantile_sorted(std::span<const double> sorted, double q);

// Fraction of samples strictly greater than y (sorted input).
double survival_sorted(std::span<const double> sorted, double y);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  double slope_se = 0.0;
  std::size_t n = 0;
};

LineFit ols(std::span<const double> x, std::span<const double> y);

// Weighted least squares with known per-point standard deviations; the
// slope_se comes from the weight matrix, not the residuals.
LineFit wls(std::span<const double> x, std::span<const double> y,
            std::span<const double> sigma);

double normal_cdf(double z);

// One-sample Kolmogorov-Smirnov statistic against a cdf evaluated at the
// sorted sample points.
double ks_statistic(std::span<const double> sorted,
                    std::span<const double> cdf_at_points);

// Asymptotic KS critical value at a given significance level.
double ks_critical(std::size_t n, double alpha);

struct Quadrature {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;  // sum to 2
};

// Gauss-Legendre rule; cached per order.
const Quadrature& gauss_legendre(int order);

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_mix(std::uint64_t h, std::uint64_t v);

}  // namespace brw

#endif  // BRW_STATS_HPP

#ifndef BRW_ANALYSIS_HPP
#define BRW_ANALYSIS_HPP

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "brw/model.hpp"
#include "brw/stats.hpp"

namespace brw {

enum class TailKind { Exponential, Power };

class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& what) : std::runtime_error(what) {}
};

struct TailFit {
  TailKind kind = TailKind::Exponential;
  // Exponential decay rate c of C e^{-c y}, or tail index kappa-hat.
  double rate_or_index = 0.0;
  double prefactor = 0.0;
  double y_lo = 0.0, y_hi = 0.0;
  double r_squared = 0.0;
  double ci_lo = 0.0, ci_hi = 0.0;  // 95% bootstrap on rate_or_index
  // Log-likelihood of the fitted exponential minus the fitted Pareto on the
  // excess-over-threshold data; negative favors the power law.
  double loglik_exp_minus_power = 0.0;
  std::size_t n_samples = 0, n_fit = 0;
};

struct TailFitOptions {
  double q_lo = 0.90;
  double q_hi = 0.999;
  double hill_fraction = 0.01;  // top order-statistic share for Hill
  int grid_points = 160;
  int bootstrap = 200;
  std::uint64_t seed = 1;
};

// Exponential: least squares on (y, ln S(y)) over the quantile window.
// Power: Hill estimator on the top order statistics with a log-log
// regression cross-check. Both carry a bootstrap CI and the
// exponential-vs-Pareto likelihood comparison.
TailFit fit_tail(std::span<const double> samples, TailKind kind,
                 const TailFitOptions& opt = {});

struct XDependencePoint {
  double x = 0.0;
  double p_hat = 0.0;
  double se = 0.0;
};

struct XDependenceFit {
  LineFit line;  // weighted fit of ln p_hat against x
  bool inconclusive = false;
};

// Weighted regression of ln P-hat on x; flags the degenerate case where
// every point's 2-sigma band overlaps a common value.
XDependenceFit scan_x_dependence(std::span<const XDependencePoint> pts);

// Log-MGF of the killed additive sum, iterated through the generation-one
// decomposition: exp(psi_n(t,x)) = (E_Z[g_{n-1}(x+Z)])^2 with g = e^{psi} on
// x+Z >= 0 and 1 below. Lattice models evaluate the expectation exactly;
// gaussian models use Gauss-Legendre quadrature with linear interpolation on
// the x-grid and the asymptote psi = t e^{-x} above it.
struct MgfTable {
  std::vector<double> theta_grid;
  std::vector<double> x_grid;
  std::size_t n_max = 0;
  std::vector<double> psi;  // (n_max+1) * theta * x, NaN once diverged
  std::vector<int> diverged_at;        // per theta; -1 when finite throughout
  std::vector<double> sup_increment;   // per n >= 1, over non-diverged columns
  double theta_frontier = 0.0;         // smallest diverged theta (inf if none)
  // Largest single-step decrease of psi in n (informational). Killing drains
  // mass, so the iteration typically descends toward its fixed point at
  // small theta and climbs near the divergence frontier.
  double max_decrease_in_n = 0.0;
  double divergence_sentinel = 50.0;

  double get(std::size_t n, std::size_t it, std::size_t ix) const {
    return psi[(n * theta_grid.size() + it) * x_grid.size() + ix];
  }
};

struct MgfOptions {
  std::vector<double> theta_grid;
  double x_max = 12.0;
  double x_step = 0.05;  // gaussian grid; lattice grids use the span
  int quad_order = 256;
  std::size_t n_max = 40;
};

MgfTable mgf_recursion(const ModelSpec& m, const MgfOptions& opt);

struct LemmaCertificate {
  double rho = 0.0;
  double K = 0.0;
  double theta_bar = 0.0;
  bool holds = false;
};

// Smallest K with psi_n(t,x) <= t e^{-x} + K t^rho e^{-rho x} across the
// table for t <= theta_bar, theta_bar being the largest grid point below
// every divergence. holds requires theta_bar >= 0.01.
LemmaCertificate certify_lemma21_bound(const MgfTable& table, double rho);

}  // namespace brw

#endif  // BRW_ANALYSIS_HPP

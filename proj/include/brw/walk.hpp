#ifndef BRW_WALK_HPP
#define BRW_WALK_HPP

#include <cstdint>
#include <memory>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "brw/model.hpp"
#include "brw/rng.hpp"

namespace brw {

// Step law of the associated walk: the e^{-x}-tilt of the offspring
// intensity. Gaussian models tilt to N(mu - sigma2, sigma2); lattice models
// tilt to +-a with up-probability 2 p e^{-a}.
struct StepLaw {
  bool lattice = false;
  double a = 0.0;
  double p_up = 0.0;
  double step_mean = 0.0;  // gaussian mean (also exposed for lattice)
  double step_var = 0.0;

  double mean() const { return step_mean; }
  double variance() const { return step_var; }
  double sample(Stream& rng) const {
    if (lattice) return rng.bernoulli(p_up) ? a : -a;
    return rng.normal(step_mean, std::sqrt(step_var));
  }
};

StepLaw step_law(const ModelSpec& m);

class EstimationError : public std::runtime_error {
 public:
  explicit EstimationError(const std::string& what) : std::runtime_error(what) {}
};

class SamplerError : public std::runtime_error {
 public:
  explicit SamplerError(const std::string& what) : std::runtime_error(what) {}
};

// Renewal function of the strictly descending ladder heights, tabulated on
// an increasing grid starting at u_0 = 0 with R(0) = 1. Lattice tables are
// exact; continuous ones come from Monte Carlo occupation counts.
struct RenewalTable {
  std::vector<double> grid;
  std::vector<double> values;
  double slope = 0.0;  // asymptotic increment per unit, used to extrapolate
  bool exact = false;
  double span = 0.0;  // lattice span (0 for continuous laws)
  std::uint64_t source_hash = 0;
  double capped_fraction = 0.0;
  double slope_ci_lo = 0.0, slope_ci_hi = 0.0;
  // Per-grid-point standard errors (empty for exact tables).
  std::vector<double> se;

  double u_max() const { return grid.back(); }
};

// Exact lookup on lattice grids, linear interpolation inside a continuous
// grid, slope extrapolation beyond u_max. u < 0 is a domain error: callers
// must apply the killing indicator themselves.
double renewal_eval(const RenewalTable& t, double u);

// P(conditioned walk started at x ever enters [0, y)) = 1 - R(x-y)/R(x).
double hitting_probability(const RenewalTable& t, double x, double y);

// Closed-form lattice table. Boundary: R(ka) = k+1. Positive drift: ladder
// epochs are defective and R(ka) is a geometric partial sum.
RenewalTable lattice_renewal_table(const ModelSpec& m, double u_max);

struct RenewalEstimateOptions {
  double u_max = 15.0;
  double grid_step = 0.05;
  std::uint64_t replicas = 1000000;
  std::uint64_t step_cap = 10000000;
  std::uint64_t seed = 1;
  int threads = 0;
  int blocks = 100;      // replica blocks for SEs and the slope bootstrap
  int bootstrap = 200;
};

// Monte Carlo estimate of R via pre-tau+ occupation counts. Works for any
// step mean >= 0. Also usable on lattice laws as a cross-check of the exact
// table (grid snaps to multiples of the span).
RenewalTable estimate_renewal_mc(const StepLaw& step,
                                 const RenewalEstimateOptions& opt);

// Exact table for lattice models, Monte Carlo otherwise.
RenewalTable make_renewal_table(const ModelSpec& m,
                                const RenewalEstimateOptions& opt);

// |E[R(x+S_1); x+S_1 >= 0] - R(x)| / R(x) on every grid point. Exact
// two-point sums for lattice laws, Gauss-Legendre quadrature for gaussian.
std::vector<double> harmonicity_residuals(const RenewalTable& t,
                                          const StepLaw& step);

void save_renewal_csv(const RenewalTable& t, const std::string& path);
RenewalTable load_renewal_csv(const std::string& path);

// One transition of the walk conditioned to stay nonnegative (Doob
// h-transform by R). Lattice states use the exact two-point law. Continuous
// states sample a tabulated inverse CDF of R(x+z) phi(z) on z in
// [-x, mean+12sd], cached per 0.01-bucket of x; far above the table the tilt
// is exactly affine and a rejection sampler is used instead.
class ConditionedWalk {
 public:
  ConditionedWalk(const StepLaw& step, const RenewalTable& table);

  double step(double x, Stream& rng) const;

  // Exact up-probability from a lattice state (x a multiple of the span).
  double lattice_up_probability(double x) const;

  // Target CDF used by the tabulated sampler at the bucket of x; for tests.
  struct TargetCdf {
    double z0 = 0.0, dz = 0.0;
    std::vector<double> cdf;  // cdf[i] = F(z0 + i dz), F(zmax) = 1
    double eval(double z) const;
  };
  std::shared_ptr<const TargetCdf> target_cdf(double x) const;

  const RenewalTable& table() const { return table_; }
  const StepLaw& step_law() const { return step_; }
  double far_field_threshold() const { return far_field_; }

 private:
  std::shared_ptr<const TargetCdf> table_for_bucket(long bucket) const;
  double sample_far_field(double x, Stream& rng) const;

  StepLaw step_;
  RenewalTable table_;
  double bucket_width_ = 0.01;
  double z_hi_ = 0.0;
  double far_field_ = 0.0;
  int nodes_ = 4096;
  mutable std::unordered_map<long, std::shared_ptr<const TargetCdf>> cache_;
  mutable std::shared_mutex cache_mu_;
  std::size_t cache_cap_ = 4096;
};

struct WalkPath {
  enum class Stop { MaxSteps, Event };
  std::vector<double> positions;
  Stop stopped_reason = Stop::MaxSteps;
};

WalkPath simulate_walk(const StepLaw& step, double start, std::size_t steps,
                       Stream& rng);
WalkPath simulate_conditioned_walk(const ConditionedWalk& walk, double start,
                                   std::size_t steps, Stream& rng);

}  // namespace brw

#endif  // BRW_WALK_HPP

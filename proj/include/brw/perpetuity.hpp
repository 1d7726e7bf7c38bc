#ifndef BRW_PERPETUITY_HPP
#define BRW_PERPETUITY_HPP

#include <cstdint>
#include <vector>

#include "brw/model.hpp"
#include "brw/walk.hpp"

namespace brw {

enum class QKind { ConstantOne, SpineSiblingDelta };

// Perpetuity driven by the conditioned walk: sum_k R(S+_k) e^{-S+_k} Q_{k+1}
// up to a finite horizon, with a per-path convergence certificate. The
// positive-drift variant replaces R(s) e^{-s} by e^{-s} 1{s >= 0} on the
// unconditioned associated walk.
struct PerpetuityConfig {
  QKind q_kind = QKind::ConstantOne;
  double c_r = 2.0;  // Q = 1 + 2 c_r Delta for the sibling-driven choice
  double start_x = 0.0;
  std::size_t horizon = 100000;
  double epsilon = 0.05;
};

struct PerpetuityPath {
  std::vector<double> partial_sums;  // at steps 1, 10, 100, ..., horizon
  double final = 0.0;
  double last_decade_increment = 0.0;
  bool converged = true;  // last-decade increment <= 1e-6 * final
};

PerpetuityPath simulate_perpetuity(const ModelSpec& m, const RenewalTable& renewal,
                                   const ConditionedWalk& walk,
                                   const PerpetuityConfig& cfg, Stream& rng);

PerpetuityPath positive_drift_perpetuity(const ModelSpec& m,
                                         const PerpetuityConfig& cfg,
                                         Stream& rng);

struct PerpetuityBatch {
  std::vector<double> finals;
  std::uint64_t nonconverged = 0;
};

// Regime dispatch: boundary models run the conditioned-walk form, subcritical
// ones the positive-drift form.
PerpetuityBatch run_perpetuity_batch(const ModelSpec& m,
                                     const RenewalTable& renewal,
                                     const ConditionedWalk* walk,
                                     const PerpetuityConfig& cfg,
                                     std::uint64_t replicas, std::uint64_t seed,
                                     int threads);

struct MgfProbeRow {
  double start_x = 0.0;
  double mgf = 0.0;
  double se = 0.0;
  double max_term_share = 0.0;
  bool unstable = false;  // one sample carries more than half the mean
};

struct MgfProbeResult {
  double epsilon_star = 0.0;
  bool found = false;
  std::vector<MgfProbeRow> at_star;      // per start_x at epsilon_star
  std::vector<double> probe_epsilons;    // bisection trace
  std::vector<double> probe_max_mgf;
};

// Bisection over epsilon of the empirical MGF of the perpetuity's final
// value across several starting heights; returns the largest epsilon whose
// max-over-x MGF stays at or below 2.
MgfProbeResult probe_exponential_moment(const ModelSpec& m,
                                        const RenewalTable& renewal,
                                        const ConditionedWalk* walk,
                                        const PerpetuityConfig& cfg,
                                        std::span<const double> start_xs,
                                        std::uint64_t replicas,
                                        std::uint64_t seed, int threads);

struct LevelStats {
  double level_lo = 0.0;  // band [level_lo, level_lo + width)
  std::uint64_t excursions = 0;
  double mean_zeta = 0.0;  // excursions per replica
  std::vector<std::uint64_t> local_time_hist;  // P(L = m) support
  double geom_slope = 0.0;  // fitted slope of ln P(L > m)
  double geom_r2 = 0.0;
  MeanSe q1;                // per-excursion Q sums
  double q1_lag1_autocorr = 0.0;
  std::uint64_t q1_pairs = 0;
  double occupation = 0.0;  // total steps spent in the band
};

struct ExcursionStats {
  double width = 0.0;  // lattice span, or 1 for continuous walks
  std::vector<LevelStats> levels;
  std::uint64_t replicas = 0;
  std::uint64_t total_steps = 0;
};

// Excursion decomposition of the conditioned walk: an excursion at level j
// starts on entering [j w, (j+1) w) and ends on first reaching [(j+2) w, inf).
ExcursionStats excursion_anatomy(const ModelSpec& m, const RenewalTable& renewal,
                                 const ConditionedWalk& walk, double start_x,
                                 std::size_t j_max, std::size_t horizon,
                                 std::uint64_t replicas,
                                 const PerpetuityConfig& cfg, std::uint64_t seed,
                                 int threads);

}  // namespace brw

#endif  // BRW_PERPETUITY_HPP

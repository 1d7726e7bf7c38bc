#ifndef BRW_SPINE_HPP
#define BRW_SPINE_HPP

#include <cstdint>
#include <vector>

#include "brw/engine.hpp"
#include "brw/model.hpp"
#include "brw/walk.hpp"

namespace brw {

// One draw of the tilted reproduction law at spine height y >= 0, factorized
// for deterministic-count iid-displacement families: the spine child steps
// like the conditioned walk, the sibling keeps the original displacement law.
struct SpineOffspring {
  double spine_displacement = 0.0;
  double sibling_displacement = 0.0;
};

SpineOffspring spine_reproduce(const ModelSpec& m, const ConditionedWalk& walk,
                               double y, Stream& rng);

// Realization of the derivative-martingale spine measure: conditioned-walk
// spine, iid sibling whose subtree is an ordinary killed BRW, and the killed
// derivative sum assembled along the spine.
struct SpineRealization {
  std::vector<double> spine_positions;    // absolute, k = 0..n
  std::vector<double> sibling_positions;  // absolute, k = 1..n
  double D_value = 0.0;
  double A_n = 0.0;  // sum of R(pos) e^{-pos} over surviving siblings
  double weight = 0.0;  // R(x) e^{-x} / D_value
  double pruned_D_mass = 0.0;
  bool budget_exhausted = false;
};

SpineRealization simulate_spine_replica(const ModelSpec& m,
                                        const RenewalTable& renewal,
                                        const ConditionedWalk& walk,
                                        const KillConfig& cfg, Stream& rng);

// Additive analogue for subcritical models. The spine follows the positive
// drift associated walk and freezes on entering the negative half-line; the
// frozen and killed masses complete the killed additive sum into the
// mean-e^{-x} martingale used as the change of measure, so
// P(W_n^(x) > y) = e^{-x} E*[1{W > y} / W_tilde].
struct AdditiveSpineRealization {
  double W_value = 0.0;   // killed additive sum
  double W_tilde = 0.0;   // + frozen spine and killed-particle masses
  double weight = 0.0;    // e^{-x} / W_tilde
  double pruned_W_mass = 0.0;
  bool spine_frozen = false;
  std::size_t frozen_generation = 0;
  bool budget_exhausted = false;
};

AdditiveSpineRealization simulate_additive_spine_replica(
    const ModelSpec& m, const RenewalTable& renewal, const KillConfig& cfg,
    Stream& rng);

struct TailPoint {
  double y = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double ess = 0.0;  // Kish effective sample size of the nonzero weights
  std::uint64_t hits = 0;
  bool unreliable = false;  // ess < 30
};

struct TailEstimate {
  std::vector<TailPoint> points;
  MeanSe mean_weight;  // total-mass diagnostic, targets P(value > 0)
  std::uint64_t replicas = 0, discarded = 0;
};

struct SpineBatchOptions {
  std::uint64_t replicas = 0;
  std::uint64_t seed = 1;
  int threads = 0;
};

// Importance-sampling tail of the killed derivative martingale:
// P(D_n^(x) > y) = R(x) e^{-x} E*[1{D > y} / D].
TailEstimate is_tail_estimate(const ModelSpec& m, const RenewalTable& renewal,
                              const ConditionedWalk& walk, const KillConfig& cfg,
                              std::span<const double> y_grid,
                              const SpineBatchOptions& opt);

// Importance-sampling tail of the killed additive martingale (subcritical).
TailEstimate additive_spine_estimate(const ModelSpec& m,
                                     const RenewalTable& renewal,
                                     const KillConfig& cfg,
                                     std::span<const double> y_grid,
                                     const SpineBatchOptions& opt);

// Default experiment grid: geometric from the naive median to 20x the naive
// 99.9th percentile.
std::vector<double> default_y_grid(std::span<const double> naive_sorted,
                                   std::size_t points);

}  // namespace brw

#endif  // BRW_SPINE_HPP

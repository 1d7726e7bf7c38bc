#ifndef BRW_ENGINE_HPP
#define BRW_ENGINE_HPP

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "brw/model.hpp"
#include "brw/rng.hpp"
#include "brw/walk.hpp"

namespace brw {

// Killing/pruning policy for one simulation. Positions are absolute: the
// root starts at x (barrier frame), a particle is killed when its position
// goes negative and pruned when it reaches v_cap. x = +infinity disables
// killing; the root then sits at 0 and v_cap caps V(u) directly.
struct KillConfig {
  double x = 0.0;
  std::size_t n = 0;
  double v_cap = std::numeric_limits<double>::infinity();
  std::uint64_t node_budget = 100000000;

  bool killing_enabled() const { return std::isfinite(x); }
  double root_position() const { return killing_enabled() ? x : 0.0; }
  void validate() const;
};

struct MartingaleSnapshot {
  std::size_t n = 0;
  double x = 0.0;
  // Untruncated sums; populated only when killing is disabled.
  double W = std::numeric_limits<double>::quiet_NaN();
  double D = std::numeric_limits<double>::quiet_NaN();
  // Killed sums (eqs with the ancestral-minimum indicator); populated only
  // when killing is enabled.
  double W_trunc = std::numeric_limits<double>::quiet_NaN();
  double D_trunc = std::numeric_limits<double>::quiet_NaN();
  double I_n = 0.0;  // minimum of V(u) over visited particles, |u| <= n
  // Pruning-bias certificates: expected martingale mass of dropped subtrees.
  double pruned_W_mass = 0.0;
  double pruned_D_mass = 0.0;
  // Mass frozen at killed particles, sum of e^{-pos}; together with W_trunc
  // this completes the killed additive sum into a mean-e^{-x} martingale.
  double killed_W_mass = 0.0;
  std::uint64_t alive_count = 0;
  std::uint64_t pruned_count = 0;
  std::uint64_t killed_count = 0;
  std::uint64_t nodes_visited = 0;
  bool budget_exhausted = false;
};

class ResourceError : public std::runtime_error {
 public:
  ResourceError(const std::string& what, MartingaleSnapshot partial)
      : std::runtime_error(what), partial_(partial) {}
  const MartingaleSnapshot& partial() const { return partial_; }

 private:
  MartingaleSnapshot partial_;
};

// Depth-first simulation from an arbitrary root position (spine subtrees
// start at the sibling's height). Memory is O(n); no tree is materialized.
MartingaleSnapshot simulate_tree(const ModelSpec& m, const RenewalTable& renewal,
                                 const KillConfig& cfg, double root_pos,
                                 std::size_t gens, Stream& rng);

// One full replica: root at cfg.x (or 0 when killing is disabled), cfg.n
// generations.
MartingaleSnapshot simulate_replica(const ModelSpec& m,
                                    const RenewalTable& renewal,
                                    const KillConfig& cfg, Stream& rng);

// Recursive reference implementation with the identical draw order and
// accumulation sequence; kept for equivalence tests and the benchmark.
MartingaleSnapshot simulate_replica_reference(const ModelSpec& m,
                                              const RenewalTable& renewal,
                                              const KillConfig& cfg,
                                              Stream& rng);

struct EngineBatchOptions {
  std::uint64_t replicas = 0;
  std::uint64_t seed = 1;
  int threads = 0;
  Stage stage = Stage::Engine;
  bool reference = false;  // run the recursive reference engine instead
};

struct EngineBatch {
  std::vector<MartingaleSnapshot> snapshots;
  std::uint64_t discarded = 0;  // node-budget breaches, excluded from stats

  std::vector<double> collect(double MartingaleSnapshot::*field) const;
};

EngineBatch run_replicas(const ModelSpec& m, const RenewalTable& renewal,
                         const KillConfig& cfg, const EngineBatchOptions& opt);

// Monte Carlo estimate of P(x + I_n <= z) for subcritical models, with the
// exponential bound e^{-kappa (x-z)} it is checked against. Subtrees that
// climb far above the target level are cut; the induced downward bias is
// bounded by hits_bound_error and is orders below the binomial SE at the
// default margin.
struct MinimumTailResult {
  double x = 0.0, z = 0.0;
  std::size_t n = 0;
  std::uint64_t replicas = 0, hits = 0;
  double p_hat = 0.0, se = 0.0;
  double bound = 0.0;      // e^{-kappa (x - z)}
  bool within_bound = false;  // p_hat <= bound + 3 se
};

MinimumTailResult minimum_tail_experiment(const ModelSpec& m, double x, double z,
                                          std::size_t n, std::uint64_t replicas,
                                          std::uint64_t seed, int threads);

}  // namespace brw

#endif  // BRW_ENGINE_HPP

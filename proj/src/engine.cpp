#include "brw/engine.hpp"

#include <cmath>

#include "brw/parallel.hpp"

namespace brw {

namespace {

struct Accumulator {
  const ModelSpec* model = nullptr;
  const RenewalTable* renewal = nullptr;
  bool killing = false;
  double v_cap = 0.0;
  std::size_t n = 0;
  std::uint64_t budget = 0;
  MartingaleSnapshot snap;
  double frame_offset = 0.0;  // subtract to get V(u) from absolute position

  void init(const ModelSpec& m, const RenewalTable& r, const KillConfig& cfg,
            double root_pos, std::size_t gens) {
    model = &m;
    renewal = &r;
    killing = cfg.killing_enabled();
    v_cap = cfg.v_cap;
    n = gens;
    budget = cfg.node_budget;
    frame_offset = root_pos;
    snap = MartingaleSnapshot{};
    snap.n = gens;
    snap.x = cfg.x;
    snap.I_n = 0.0;
    if (killing) {
      snap.W_trunc = 0.0;
      snap.D_trunc = 0.0;
    } else {
      snap.W = 0.0;
      snap.D = 0.0;
    }
  }

  void terminal(double pos) {
    const double w = std::exp(-pos);
    if (killing) {
      snap.W_trunc += w;
      snap.D_trunc += renewal_eval(*renewal, pos) * w;
    } else {
      snap.W += w;
      snap.D += pos * w;
    }
    snap.alive_count += 1;
  }

  // Classify a particle at `pos`, generation `gen`. Returns true when the
  // particle stays alive with children still to simulate.
  bool classify(double pos, std::size_t gen) {
    if (++snap.nodes_visited > budget) {
      snap.budget_exhausted = true;
      throw ResourceError("engine: node budget exhausted", snap);
    }
    if (killing && pos < 0.0) {
      snap.killed_count += 1;
      snap.killed_W_mass += std::exp(-pos);
      snap.I_n = std::min(snap.I_n, pos - frame_offset);
      return false;
    }
    if (pos >= v_cap) {
      snap.pruned_count += 1;
      const double w = std::exp(-pos);
      snap.pruned_W_mass += w;
      snap.pruned_D_mass += renewal_eval(*renewal, pos) * w;
      return false;
    }
    snap.I_n = std::min(snap.I_n, pos - frame_offset);
    if (gen == n) {
      terminal(pos);
      return false;
    }
    return true;
  }
};

void recurse(Accumulator& acc, double pos, std::size_t gen, Stream& rng) {
  if (!acc.classify(pos, gen)) return;
  const double d1 = sample_child_displacement(*acc.model, rng);
  const double d2 = sample_child_displacement(*acc.model, rng);
  recurse(acc, pos + d1, gen + 1, rng);
  recurse(acc, pos + d2, gen + 1, rng);
}

}  // namespace

void KillConfig::validate() const {
  if (killing_enabled()) {
    if (!(x >= 0.0)) throw std::domain_error("KillConfig: x < 0");
    if (!(v_cap > x)) throw std::domain_error("KillConfig: v_cap <= x");
  } else if (!(v_cap > 0.0)) {
    throw std::domain_error("KillConfig: v_cap <= 0 with killing disabled");
  }
}

MartingaleSnapshot simulate_tree(const ModelSpec& m, const RenewalTable& renewal,
                                 const KillConfig& cfg, double root_pos,
                                 std::size_t gens, Stream& rng) {
  Accumulator acc;
  acc.init(m, renewal, cfg, root_pos, gens);

  // Explicit stack; nodes are classified when popped and children are pushed
  // right-then-left, so the visit order, rng consumption and accumulation
  // sequence all match the recursive reference bit for bit.
  struct Node {
    double pos;
    std::uint32_t gen;
  };
  std::vector<Node> stack;
  stack.reserve(2 * gens + 2);
  stack.push_back({root_pos, 0});
  while (!stack.empty()) {
    const Node node = stack.back();
    stack.pop_back();
    if (!acc.classify(node.pos, node.gen)) continue;
    const double d1 = sample_child_displacement(m, rng);
    const double d2 = sample_child_displacement(m, rng);
    const std::uint32_t g = node.gen + 1;
    stack.push_back({node.pos + d2, g});
    stack.push_back({node.pos + d1, g});
  }
  return acc.snap;
}

MartingaleSnapshot simulate_replica(const ModelSpec& m,
                                    const RenewalTable& renewal,
                                    const KillConfig& cfg, Stream& rng) {
  cfg.validate();
  return simulate_tree(m, renewal, cfg, cfg.root_position(), cfg.n, rng);
}

MartingaleSnapshot simulate_replica_reference(const ModelSpec& m,
                                              const RenewalTable& renewal,
                                              const KillConfig& cfg,
                                              Stream& rng) {
  cfg.validate();
  Accumulator acc;
  acc.init(m, renewal, cfg, cfg.root_position(), cfg.n);
  recurse(acc, cfg.root_position(), 0, rng);
  return acc.snap;
}

std::vector<double> EngineBatch::collect(double MartingaleSnapshot::*field) const {
  std::vector<double> out;
  out.reserve(snapshots.size());
  for (const auto& s : snapshots) {
    if (!s.budget_exhausted) out.push_back(s.*field);
  }
  return out;
}

EngineBatch run_replicas(const ModelSpec& m, const RenewalTable& renewal,
                         const KillConfig& cfg, const EngineBatchOptions& opt) {
  cfg.validate();
  EngineBatch batch;
  batch.snapshots.resize(opt.replicas);
  for_each_replica(opt.replicas, opt.threads, [&](std::uint64_t rep) {
    Stream rng(opt.seed, opt.stage, rep);
    try {
      batch.snapshots[rep] = opt.reference
                                 ? simulate_replica_reference(m, renewal, cfg, rng)
                                 : simulate_replica(m, renewal, cfg, rng);
    } catch (const ResourceError& e) {
      batch.snapshots[rep] = e.partial();
      batch.snapshots[rep].budget_exhausted = true;
    }
  });
  for (const auto& s : batch.snapshots) {
    if (s.budget_exhausted) batch.discarded += 1;
  }
  return batch;
}

MinimumTailResult minimum_tail_experiment(const ModelSpec& m, double x, double z,
                                          std::size_t n, std::uint64_t replicas,
                                          std::uint64_t seed, int threads) {
  if (m.regime != Regime::Subcritical) {
    throw std::domain_error("minimum_tail_experiment: subcritical models only");
  }
  if (!(z >= 0.0 && z < x)) {
    throw std::domain_error("minimum_tail_experiment: need 0 <= z < x");
  }
  const double target = z - x;  // event: some V(u) <= target
  // Particles this far above the target level are dropped: the chance any
  // descendant dives back is below e^{-kappa * gap}, negligible against SE.
  const double gap = 14.0 / m.kappa;
  const double cut = target + gap;

  std::vector<std::uint8_t> hit(replicas, 0);
  for_each_replica(replicas, threads, [&](std::uint64_t rep) {
    Stream rng(seed, Stage::Minimum, rep);
    struct Node {
      double pos;
      std::uint32_t gen;
    };
    std::vector<Node> stack;
    stack.push_back({0.0, 0});
    if (n == 0) {
      hit[rep] = 0.0 <= target ? 1 : 0;
      return;
    }
    while (!stack.empty()) {
      const Node node = stack.back();
      stack.pop_back();
      const double d1 = sample_child_displacement(m, rng);
      const double d2 = sample_child_displacement(m, rng);
      const std::uint32_t g = node.gen + 1;
      for (const double p : {node.pos + d1, node.pos + d2}) {
        if (p <= target) {
          hit[rep] = 1;
          return;
        }
        if (g < n && p < cut) stack.push_back({p, g});
      }
    }
  });

  MinimumTailResult r;
  r.x = x;
  r.z = z;
  r.n = n;
  r.replicas = replicas;
  for (auto h : hit) r.hits += h;
  r.p_hat = static_cast<double>(r.hits) / static_cast<double>(replicas);
  r.se = std::sqrt(std::max(r.p_hat * (1.0 - r.p_hat), 1e-300) /
                   static_cast<double>(replicas));
  r.bound = std::exp(-m.kappa * (x - z));
  r.within_bound = r.p_hat <= r.bound + 3.0 * r.se;
  return r;
}

}  // namespace brw

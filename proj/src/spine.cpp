#include "brw/spine.hpp"

#include <algorithm>
#include <cmath>

#include "brw/parallel.hpp"

namespace brw {

SpineOffspring spine_reproduce(const ModelSpec& m, const ConditionedWalk& walk,
                               double y, Stream& rng) {
  if (!(y >= 0.0)) throw std::domain_error("spine_reproduce: y < 0");
  SpineOffspring o;
  o.spine_displacement = walk.step(y, rng) - y;
  o.sibling_displacement = sample_child_displacement(m, rng);
  return o;
}

SpineRealization simulate_spine_replica(const ModelSpec& m,
                                        const RenewalTable& renewal,
                                        const ConditionedWalk& walk,
                                        const KillConfig& cfg, Stream& rng) {
  cfg.validate();
  if (!cfg.killing_enabled()) {
    throw std::domain_error("spine replica: killing must be enabled");
  }
  SpineRealization r;
  r.spine_positions.reserve(cfg.n + 1);
  r.spine_positions.push_back(cfg.x);
  r.sibling_positions.reserve(cfg.n);

  double y = cfg.x;
  for (std::size_t k = 1; k <= cfg.n; ++k) {
    const SpineOffspring o = spine_reproduce(m, walk, y, rng);
    const double sib = y + o.sibling_displacement;
    y += o.spine_displacement;
    r.spine_positions.push_back(y);
    r.sibling_positions.push_back(sib);

    if (sib < 0.0) continue;  // sibling killed at birth
    if (sib >= cfg.v_cap) {
      r.pruned_D_mass += renewal_eval(renewal, sib) * std::exp(-sib);
      continue;
    }
    r.A_n += renewal_eval(renewal, sib) * std::exp(-sib);
    try {
      const MartingaleSnapshot sub =
          simulate_tree(m, renewal, cfg, sib, cfg.n - k, rng);
      r.D_value += sub.D_trunc;
      r.pruned_D_mass += sub.pruned_D_mass;
    } catch (const ResourceError&) {
      r.budget_exhausted = true;
      return r;
    }
  }
  // The spine's own terminal term keeps D_value strictly positive.
  r.D_value += renewal_eval(renewal, y) * std::exp(-y);
  r.weight = renewal_eval(renewal, cfg.x) * std::exp(-cfg.x) / r.D_value;
  return r;
}

AdditiveSpineRealization simulate_additive_spine_replica(
    const ModelSpec& m, const RenewalTable& renewal, const KillConfig& cfg,
    Stream& rng) {
  cfg.validate();
  if (!cfg.killing_enabled()) {
    throw std::domain_error("additive spine replica: killing must be enabled");
  }
  if (m.regime != Regime::Subcritical) {
    throw std::domain_error("additive spine replica: subcritical models only");
  }
  const StepLaw assoc = step_law(m);
  AdditiveSpineRealization r;
  double y = cfg.x;
  for (std::size_t k = 1; k <= cfg.n; ++k) {
    const double spine_disp = assoc.sample(rng);
    const double sib = y + sample_child_displacement(m, rng);
    y += spine_disp;

    if (sib < 0.0) {
      r.W_tilde += std::exp(-sib);
    } else if (sib >= cfg.v_cap) {
      r.pruned_W_mass += std::exp(-sib);
    } else {
      try {
        const MartingaleSnapshot sub =
            simulate_tree(m, renewal, cfg, sib, cfg.n - k, rng);
        r.W_value += sub.W_trunc;
        r.W_tilde += sub.W_trunc + sub.killed_W_mass;
        r.pruned_W_mass += sub.pruned_W_mass;
      } catch (const ResourceError&) {
        r.budget_exhausted = true;
        return r;
      }
    }
    if (y < 0.0) {
      // Spine frozen at its killing position; no further spine offspring.
      r.spine_frozen = true;
      r.frozen_generation = k;
      r.W_tilde += std::exp(-y);
      break;
    }
  }
  if (!r.spine_frozen) {
    const double w = std::exp(-y);
    r.W_value += w;
    r.W_tilde += w;
  }
  r.weight = std::exp(-cfg.x) / r.W_tilde;
  return r;
}

namespace {

TailEstimate tabulate(const std::vector<double>& values,
                      const std::vector<double>& denoms,
                      const std::vector<std::uint8_t>& ok, double prefactor,
                      std::span<const double> y_grid) {
  TailEstimate est;
  est.replicas = values.size();
  std::vector<double> weights;
  weights.reserve(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!ok[i]) {
      est.discarded += 1;
      continue;
    }
    weights.push_back(prefactor / denoms[i]);
  }
  est.mean_weight = mean_se(weights);

  const double n = static_cast<double>(values.size() - est.discarded);
  for (double y : y_grid) {
    TailPoint p;
    p.y = y;
    double s = 0.0, ss = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!ok[i] || !(values[i] > y)) continue;
      const double g = prefactor / denoms[i];
      s += g;
      ss += g * g;
      p.hits += 1;
    }
    p.estimate = s / n;
    const double var = (ss / n - p.estimate * p.estimate) / n;
    p.se = std::sqrt(std::max(var, 0.0));
    p.ess = ss > 0.0 ? s * s / ss : 0.0;
    p.unreliable = p.ess < 30.0;
    est.points.push_back(p);
  }
  return est;
}

}  // namespace

TailEstimate is_tail_estimate(const ModelSpec& m, const RenewalTable& renewal,
                              const ConditionedWalk& walk, const KillConfig& cfg,
                              std::span<const double> y_grid,
                              const SpineBatchOptions& opt) {
  std::vector<double> d(opt.replicas), denom(opt.replicas);
  std::vector<std::uint8_t> ok(opt.replicas, 0);
  for_each_replica(opt.replicas, opt.threads, [&](std::uint64_t rep) {
    Stream rng(opt.seed, Stage::Spine, rep);
    const SpineRealization r = simulate_spine_replica(m, renewal, walk, cfg, rng);
    if (r.budget_exhausted) return;
    d[rep] = r.D_value;
    denom[rep] = r.D_value;
    ok[rep] = 1;
  });
  return tabulate(d, denom, ok,
                  renewal_eval(renewal, cfg.x) * std::exp(-cfg.x), y_grid);
}

TailEstimate additive_spine_estimate(const ModelSpec& m,
                                     const RenewalTable& renewal,
                                     const KillConfig& cfg,
                                     std::span<const double> y_grid,
                                     const SpineBatchOptions& opt) {
  std::vector<double> w(opt.replicas), denom(opt.replicas);
  std::vector<std::uint8_t> ok(opt.replicas, 0);
  for_each_replica(opt.replicas, opt.threads, [&](std::uint64_t rep) {
    Stream rng(opt.seed, Stage::Spine, rep);
    const AdditiveSpineRealization r =
        simulate_additive_spine_replica(m, renewal, cfg, rng);
    if (r.budget_exhausted) return;
    w[rep] = r.W_value;
    denom[rep] = r.W_tilde;
    ok[rep] = 1;
  });
  return tabulate(w, denom, ok, std::exp(-cfg.x), y_grid);
}

std::vector<double> default_y_grid(std::span<const double> naive_sorted,
                                   std::size_t points) {
  const double lo = std::max(quantile_sorted(naive_sorted, 0.5), 1e-12);
  const double hi = 20.0 * quantile_sorted(naive_sorted, 0.999);
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) /
                                         static_cast<double>(points - 1));
  }
  return grid;
}

}  // namespace brw

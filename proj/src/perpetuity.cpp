#include "brw/perpetuity.hpp"

#include <algorithm>
#include <cmath>

#include "brw/parallel.hpp"
#include "brw/stats.hpp"

namespace brw {

namespace {

double draw_q(const ModelSpec& m, const PerpetuityConfig& cfg, Stream& rng) {
  if (cfg.q_kind == QKind::ConstantOne) return 1.0;
  // Sibling bundle of the spine: one iid child displacement for the binary
  // families; Delta = [1 + (dV)_+] e^{-dV}.
  const double dv = sample_child_displacement(m, rng);
  const double delta = (1.0 + std::max(dv, 0.0)) * std::exp(-dv);
  return 1.0 + 2.0 * cfg.c_r * delta;
}

PerpetuityPath accumulate(const ModelSpec& m, const PerpetuityConfig& cfg,
                          Stream& rng, auto&& advance, auto&& weight) {
  PerpetuityPath path;
  double s = cfg.start_x;
  double sum = 0.0;
  std::size_t next_checkpoint = 1;
  double at_tenth = 0.0;
  // convergence diagnostic: mass added over the last log-decade of steps
  const std::size_t tenth = cfg.horizon / 10;
  for (std::size_t k = 0; k < cfg.horizon; ++k) {
    if (k == tenth) at_tenth = sum;
    const double f = weight(s);
    const double q = draw_q(m, cfg, rng);
    sum += f * q;
    s = advance(s, rng);
    if (k + 1 == next_checkpoint) {
      path.partial_sums.push_back(sum);
      next_checkpoint *= 10;
    }
  }
  if (path.partial_sums.empty() || path.partial_sums.back() != sum) {
    path.partial_sums.push_back(sum);
  }
  path.final = sum;
  path.last_decade_increment = cfg.horizon > 0 ? sum - at_tenth : 0.0;
  path.converged = path.last_decade_increment <= 1e-6 * std::max(path.final, 1e-300);
  return path;
}

}  // namespace

PerpetuityPath simulate_perpetuity(const ModelSpec& m, const RenewalTable& renewal,
                                   const ConditionedWalk& walk,
                                   const PerpetuityConfig& cfg, Stream& rng) {
  if (!m.boundary()) {
    throw std::domain_error("simulate_perpetuity: boundary regime required");
  }
  if (!(cfg.start_x >= 0.0)) {
    throw std::domain_error("simulate_perpetuity: start_x < 0");
  }
  return accumulate(
      m, cfg, rng, [&](double s, Stream& r) { return walk.step(s, r); },
      [&](double s) { return renewal_eval(renewal, s) * std::exp(-s); });
}

PerpetuityPath positive_drift_perpetuity(const ModelSpec& m,
                                         const PerpetuityConfig& cfg,
                                         Stream& rng) {
  if (m.regime != Regime::Subcritical) {
    throw std::domain_error("positive_drift_perpetuity: subcritical regime required");
  }
  const StepLaw assoc = step_law(m);
  return accumulate(
      m, cfg, rng, [&](double s, Stream& r) { return s + assoc.sample(r); },
      [&](double s) { return s >= 0.0 ? std::exp(-s) : 0.0; });
}

PerpetuityBatch run_perpetuity_batch(const ModelSpec& m,
                                     const RenewalTable& renewal,
                                     const ConditionedWalk* walk,
                                     const PerpetuityConfig& cfg,
                                     std::uint64_t replicas, std::uint64_t seed,
                                     int threads) {
  PerpetuityBatch batch;
  batch.finals.resize(replicas);
  std::vector<std::uint8_t> bad(replicas, 0);
  if (m.boundary() && walk == nullptr) {
    throw std::invalid_argument("run_perpetuity_batch: boundary needs a conditioned walk");
  }
  for_each_replica(replicas, threads, [&](std::uint64_t rep) {
    Stream rng(seed, Stage::Perpetuity, rep);
    const PerpetuityPath p =
        m.boundary() ? simulate_perpetuity(m, renewal, *walk, cfg, rng)
                     : positive_drift_perpetuity(m, cfg, rng);
    batch.finals[rep] = p.final;
    bad[rep] = p.converged ? 0 : 1;
  });
  for (auto b : bad) batch.nonconverged += b;
  return batch;
}

MgfProbeResult probe_exponential_moment(const ModelSpec& m,
                                        const RenewalTable& renewal,
                                        const ConditionedWalk* walk,
                                        const PerpetuityConfig& cfg,
                                        std::span<const double> start_xs,
                                        std::uint64_t replicas,
                                        std::uint64_t seed, int threads) {
  // Simulate once per starting height, then bisection is pure arithmetic on
  // the stored final values.
  std::vector<std::vector<double>> finals;
  finals.reserve(start_xs.size());
  for (std::size_t i = 0; i < start_xs.size(); ++i) {
    PerpetuityConfig c = cfg;
    c.start_x = start_xs[i];
    finals.push_back(
        run_perpetuity_batch(m, renewal, walk, c, replicas, seed + i, threads)
            .finals);
  }

  auto mgf_at = [&](double eps, std::size_t i) {
    MgfProbeRow row;
    row.start_x = start_xs[i];
    double s = 0.0, ss = 0.0, mx = 0.0;
    for (double t : finals[i]) {
      const double e = std::exp(eps * t);
      s += e;
      ss += e * e;
      mx = std::max(mx, e);
    }
    const double n = static_cast<double>(finals[i].size());
    row.mgf = s / n;
    row.se = std::sqrt(std::max(ss / n - row.mgf * row.mgf, 0.0) / n);
    row.max_term_share = mx / s;
    row.unstable = row.max_term_share > 0.5;
    return row;
  };
  auto max_mgf = [&](double eps) {
    double worst = 0.0;
    for (std::size_t i = 0; i < start_xs.size(); ++i) {
      worst = std::max(worst, mgf_at(eps, i).mgf);
    }
    return worst;
  };

  MgfProbeResult out;
  // Grow until the target is bracketed, then bisect.
  double lo = 0.0, hi = 1e-3;
  for (int i = 0; i < 40 && max_mgf(hi) <= 2.0; ++i) {
    lo = hi;
    hi *= 2.0;
    out.probe_epsilons.push_back(lo);
    out.probe_max_mgf.push_back(max_mgf(lo));
  }
  for (int i = 0; i < 50; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (max_mgf(mid) <= 2.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  out.epsilon_star = lo;
  out.found = lo > 0.0;
  for (std::size_t i = 0; i < start_xs.size(); ++i) {
    out.at_star.push_back(mgf_at(lo, i));
  }
  return out;
}

ExcursionStats excursion_anatomy(const ModelSpec& m, const RenewalTable& renewal,
                                 const ConditionedWalk& walk, double start_x,
                                 std::size_t j_max, std::size_t horizon,
                                 std::uint64_t replicas,
                                 const PerpetuityConfig& cfg, std::uint64_t seed,
                                 int threads) {
  if (!m.boundary()) {
    throw std::domain_error("excursion_anatomy: boundary regime required");
  }
  const double w = m.family == Family::LatticeBinary ? m.a : 1.0;
  const std::size_t nlev = j_max + 1;

  struct LevelAccum {
    std::vector<std::uint64_t> zeta_hist;  // per replica excursion counts
    std::vector<std::uint64_t> l_hist;
    std::vector<double> q1;                // per-excursion Q sums, in order
    std::vector<std::uint64_t> q1_replica; // owning replica per entry
    std::uint64_t occupation = 0;
  };
  const int nthreads = threads == 0 ? hardware_threads() : threads;
  std::vector<std::vector<LevelAccum>> acc(
      nthreads, std::vector<LevelAccum>(nlev));

  for_each_replica(replicas, nthreads, [&](std::uint64_t rep) {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    Stream rng(seed, Stage::Perpetuity, rep);
    struct Open {
      bool active = false;
      std::uint64_t local_time = 0;
      double q_sum = 0.0;
    };
    std::vector<Open> open(nlev);
    std::vector<std::uint64_t> zeta(nlev, 0);
    double s = start_x;
    for (std::size_t k = 0; k < horizon; ++k) {
      const long band = static_cast<long>(std::floor(s / w + 1e-9));
      const double q = cfg.q_kind == QKind::SpineSiblingDelta
                           ? draw_q(m, cfg, rng)
                           : 1.0;
      for (std::size_t j = 0; j < nlev; ++j) {
        auto& o = open[j];
        const long jl = static_cast<long>(j);
        if (o.active && band >= jl + 2) {
          // excursion ends on first passage of [(j+2) w, inf)
          auto& la = acc[tid][j];
          if (o.local_time >= la.l_hist.size()) la.l_hist.resize(o.local_time + 1, 0);
          la.l_hist[o.local_time] += 1;
          la.q1.push_back(o.q_sum);
          la.q1_replica.push_back(rep);
          o = Open{};
        }
        if (band == jl) {
          if (!o.active) {
            o.active = true;
            o.local_time = 0;
            o.q_sum = 0.0;
            zeta[j] += 1;
          }
          o.local_time += 1;
          o.q_sum += q;
          acc[tid][j].occupation += 1;
        }
      }
      s = walk.step(s, rng);
    }
    for (std::size_t j = 0; j < nlev; ++j) {
      // an excursion still open at the horizon is dropped (censored)
      auto& la = acc[tid][j];
      if (zeta[j] >= la.zeta_hist.size()) la.zeta_hist.resize(zeta[j] + 1, 0);
      la.zeta_hist[zeta[j]] += 1;
    }
  });

  ExcursionStats stats;
  stats.width = w;
  stats.replicas = replicas;
  stats.levels.resize(nlev);
  for (std::size_t j = 0; j < nlev; ++j) {
    LevelStats& lv = stats.levels[j];
    lv.level_lo = static_cast<double>(j) * w;
    std::vector<double> q1;
    std::vector<std::uint64_t> q1_rep;
    std::vector<std::uint64_t> zh, lh;
    for (int t = 0; t < nthreads; ++t) {
      const auto& la = acc[t][j];
      if (la.zeta_hist.size() > zh.size()) zh.resize(la.zeta_hist.size(), 0);
      for (std::size_t i = 0; i < la.zeta_hist.size(); ++i) zh[i] += la.zeta_hist[i];
      if (la.l_hist.size() > lh.size()) lh.resize(la.l_hist.size(), 0);
      for (std::size_t i = 0; i < la.l_hist.size(); ++i) lh[i] += la.l_hist[i];
      q1.insert(q1.end(), la.q1.begin(), la.q1.end());
      q1_rep.insert(q1_rep.end(), la.q1_replica.begin(), la.q1_replica.end());
      lv.occupation += static_cast<double>(la.occupation);
      stats.total_steps += la.occupation;
    }
    lv.local_time_hist = lh;
    std::uint64_t total_exc = 0, zsum = 0;
    for (std::size_t i = 0; i < zh.size(); ++i) zsum += i * zh[i];
    for (std::size_t i = 1; i < lh.size(); ++i) total_exc += lh[i];
    lv.excursions = total_exc;
    lv.mean_zeta = static_cast<double>(zsum) / static_cast<double>(replicas);
    lv.q1 = mean_se(q1);

    // Geometric-domination diagnostic: ln P(L > m) against m.
    if (total_exc >= 100) {
      std::vector<double> xs, ys;
      std::uint64_t tail = total_exc;
      for (std::size_t mloc = 1; mloc < lh.size(); ++mloc) {
        tail -= lh[mloc];
        if (tail >= 20 && mloc >= 1) {
          xs.push_back(static_cast<double>(mloc));
          ys.push_back(std::log(static_cast<double>(tail) /
                                static_cast<double>(total_exc)));
        }
      }
      if (xs.size() >= 3) {
        const LineFit f = ols(xs, ys);
        lv.geom_slope = f.slope;
        lv.geom_r2 = f.r_squared;
      }
    }

    // Lag-1 autocorrelation of per-excursion sums within a replica, skipping
    // each replica's first excursion.
    if (q1.size() >= 10) {
      std::vector<double> a, b;
      for (std::size_t i = 1; i < q1.size(); ++i) {
        if (q1_rep[i] == q1_rep[i - 1]) {
          a.push_back(q1[i - 1]);
          b.push_back(q1[i]);
        }
      }
      lv.q1_pairs = a.size();
      if (a.size() >= 10) {
        const MeanSe ma = mean_se(a), mb = mean_se(b);
        double c = 0, va = 0, vb = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
          c += (a[i] - ma.mean) * (b[i] - mb.mean);
          va += (a[i] - ma.mean) * (a[i] - ma.mean);
          vb += (b[i] - mb.mean) * (b[i] - mb.mean);
        }
        lv.q1_lag1_autocorr = va > 0 && vb > 0 ? c / std::sqrt(va * vb) : 0.0;
      }
    }
  }
  return stats;
}

}  // namespace brw

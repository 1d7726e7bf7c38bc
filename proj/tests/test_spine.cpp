#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "brw/spine.hpp"
#include "brw/stats.hpp"

using namespace brw;

namespace {

ModelSpec lattice_boundary() {
  CalibrationRequest r;
  r.family = Family::LatticeBinary;
  return calibrate(r);
}

ModelSpec lattice_subcritical() {
  CalibrationRequest r;
  r.family = Family::LatticeBinary;
  r.regime = Regime::Subcritical;
  r.a = 1.0;
  return calibrate(r);
}

double two_sample_ks(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    // advance through whole tie blocks before comparing the empirical cdfs
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / a.size() -
                             static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST_CASE("spine reproduction: forced up-step at the barrier, untilted sibling") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  const ConditionedWalk walk(step_law(lb), t);
  Stream rng(1, Stage::Spine, 0);
  std::size_t sib_up = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const SpineOffspring o = spine_reproduce(lb, walk, 0.0, rng);
    CHECK(o.spine_displacement == doctest::Approx(lb.a));
    sib_up += o.sibling_displacement > 0;
  }
  const double se = std::sqrt(lb.p * (1 - lb.p) / static_cast<double>(n));
  CHECK(std::abs(static_cast<double>(sib_up) / n - lb.p) < 3 * se);
  CHECK_THROWS_AS(spine_reproduce(lb, walk, -1.0, rng), std::domain_error);
}

TEST_CASE("spine replica at n = 0 is the root term") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  const ConditionedWalk walk(step_law(lb), t);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 0;
  Stream rng(2, Stage::Spine, 1);
  const SpineRealization r = simulate_spine_replica(lb, t, walk, kc, rng);
  CHECK(r.D_value ==
        doctest::Approx(renewal_eval(t, lb.a) * std::exp(-lb.a)).epsilon(1e-12));
  CHECK(r.weight == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.spine_positions.size() == 1);
}

TEST_CASE("change of measure recovers killed-positive expectations") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  const ConditionedWalk walk(step_law(lb), t);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 6;

  // naive side
  EngineBatchOptions eopt;
  eopt.replicas = 60000;
  eopt.seed = 31;
  const EngineBatch naive = run_replicas(lb, t, kc, eopt);
  const std::vector<double> d = naive.collect(&MartingaleSnapshot::D_trunc);
  std::vector<double> sorted = d;
  std::sort(sorted.begin(), sorted.end());
  const double med = quantile_sorted(sorted, 0.5);

  // spine side
  const std::uint64_t reps = 60000;
  std::vector<double> dv(reps);
  for (std::uint64_t i = 0; i < reps; ++i) {
    Stream rng(32, Stage::Spine, i);
    dv[i] = simulate_spine_replica(lb, t, walk, kc, rng).D_value;
  }
  const double pref = renewal_eval(t, kc.x) * std::exp(-kc.x);

  auto check_g = [&](auto&& g, const char* name) {
    double s1 = 0, s1s = 0;
    for (double v : d) {
      const double t1 = v > 0 ? g(v) : 0.0;
      s1 += t1;
      s1s += t1 * t1;
    }
    const double m1 = s1 / d.size();
    const double se1 = std::sqrt((s1s / d.size() - m1 * m1) / d.size());
    double s2 = 0, s2s = 0;
    for (double v : dv) {
      const double t2 = g(v) * pref / v;
      s2 += t2;
      s2s += t2 * t2;
    }
    const double m2 = s2 / reps;
    const double se2 = std::sqrt((s2s / reps - m2 * m2) / reps);
    INFO(name << ": naive " << m1 << " vs spine " << m2);
    CHECK(std::abs(m1 - m2) < 3 * std::sqrt(se1 * se1 + se2 * se2));
  };
  check_g([](double) { return 1.0; }, "g = 1");
  check_g([&](double v) { return v > med ? 1.0 : 0.0; }, "g = 1{D > median}");
  check_g([](double v) { return std::min(v, 1.0); }, "g = min(D, 1)");
}

TEST_CASE("spine marginals match the conditioned walk") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  const ConditionedWalk walk(step_law(lb), t);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 10;
  const std::size_t n = 20000;
  std::vector<std::vector<double>> spine_at(3);
  std::vector<double> sib;
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(33, Stage::Spine, i);
    const SpineRealization r = simulate_spine_replica(lb, t, walk, kc, rng);
    spine_at[0].push_back(r.spine_positions[1]);
    spine_at[1].push_back(r.spine_positions[5]);
    spine_at[2].push_back(r.spine_positions[10]);
    for (std::size_t k = 0; k < r.sibling_positions.size(); ++k) {
      sib.push_back(r.sibling_positions[k] - r.spine_positions[k]);
    }
  }
  std::vector<std::vector<double>> walk_at(3);
  for (std::size_t i = 0; i < n; ++i) {
    Stream rng(34, Stage::Walk, i);
    const WalkPath p = simulate_conditioned_walk(walk, kc.x, 10, rng);
    walk_at[0].push_back(p.positions[1]);
    walk_at[1].push_back(p.positions[5]);
    walk_at[2].push_back(p.positions[10]);
  }
  const double crit = 1.628 * std::sqrt(2.0 / static_cast<double>(n));
  for (int k = 0; k < 3; ++k) {
    CHECK(two_sample_ks(spine_at[k], walk_at[k]) < crit);
  }

  // sibling displacements keep the original two-point law
  std::size_t up = 0;
  for (double v : sib) up += v > 0;
  const double freq = static_cast<double>(up) / sib.size();
  const double se = std::sqrt(lb.p * (1 - lb.p) / sib.size());
  CHECK(std::abs(freq - lb.p) < 3 * se);
}

TEST_CASE("importance-sampled tail with ESS bookkeeping") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  const ConditionedWalk walk(step_law(lb), t);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 8;
  SpineBatchOptions opt;
  opt.replicas = 30000;
  opt.seed = 35;
  const std::vector<double> ys = {0.0, 1e9};
  const TailEstimate est = is_tail_estimate(lb, t, walk, kc, ys, opt);
  REQUIRE(est.points.size() == 2);
  // all weights participate at y = 0; lattice weights are bounded
  CHECK(est.points[0].ess > 0.25 * static_cast<double>(opt.replicas));
  CHECK_FALSE(est.points[0].unreliable);
  // far beyond the support nothing hits
  CHECK(est.points[1].estimate == 0.0);
  CHECK(est.points[1].unreliable);
}

TEST_CASE("additive spine: exact n = 0 and unit total mass") {
  const ModelSpec ls = lattice_subcritical();
  const RenewalTable t = lattice_renewal_table(ls, 40.0);
  KillConfig kc;
  kc.x = ls.a;
  kc.n = 0;
  Stream rng(36, Stage::Spine, 0);
  const AdditiveSpineRealization r0 = simulate_additive_spine_replica(ls, t, kc, rng);
  CHECK(r0.W_value == doctest::Approx(std::exp(-ls.a)).epsilon(1e-14));
  CHECK(r0.weight == doctest::Approx(1.0).epsilon(1e-12));

  kc.n = 8;
  SpineBatchOptions opt;
  opt.replicas = 30000;
  opt.seed = 37;
  const std::vector<double> ys = {0.0};
  const TailEstimate est = additive_spine_estimate(ls, t, kc, ys, opt);
  // E*[e^{-x} / W_tilde] = P(W_tilde > 0) = 1 for deterministic binary trees
  CHECK(std::abs(est.mean_weight.mean - 1.0) < 3 * est.mean_weight.se);

  const ModelSpec lb = lattice_boundary();
  const RenewalTable tb = lattice_renewal_table(lb, 40.0);
  Stream rng2(38, Stage::Spine, 0);
  CHECK_THROWS_AS(simulate_additive_spine_replica(lb, tb, kc, rng2),
                  std::domain_error);
}

TEST_CASE("additive spine agrees with naive survival at moderate y") {
  const ModelSpec ls = lattice_subcritical();
  const RenewalTable t = lattice_renewal_table(ls, 40.0);
  KillConfig kc;
  kc.x = ls.a;
  kc.n = 8;
  EngineBatchOptions eopt;
  eopt.replicas = 50000;
  eopt.seed = 39;
  const EngineBatch naive = run_replicas(ls, t, kc, eopt);
  std::vector<double> w = naive.collect(&MartingaleSnapshot::W_trunc);
  std::sort(w.begin(), w.end());
  const std::vector<double> ys = {quantile_sorted(w, 0.9), quantile_sorted(w, 0.99)};

  SpineBatchOptions sopt;
  sopt.replicas = 50000;
  sopt.seed = 40;
  const TailEstimate est = additive_spine_estimate(ls, t, kc, ys, sopt);
  for (const TailPoint& p : est.points) {
    const double s = survival_sorted(w, p.y);
    const double nse = std::sqrt(s * (1 - s) / static_cast<double>(w.size()));
    CHECK(std::abs(p.estimate - s) < 3 * std::sqrt(p.se * p.se + nse * nse));
  }
}

TEST_CASE("default y grid spans median to 20x the 99.9th percentile") {
  std::vector<double> sorted(10000);
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    sorted[i] = static_cast<double>(i + 1) / 10000.0;
  }
  const std::vector<double> grid = default_y_grid(sorted, 8);
  REQUIRE(grid.size() == 8);
  CHECK(grid.front() == doctest::Approx(quantile_sorted(sorted, 0.5)));
  CHECK(grid.back() == doctest::Approx(20.0 * quantile_sorted(sorted, 0.999)));
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
}

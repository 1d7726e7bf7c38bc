#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "brw/engine.hpp"
#include "brw/stats.hpp"

using namespace brw;

namespace {

ModelSpec lattice_boundary() {
  CalibrationRequest r;
  r.family = Family::LatticeBinary;
  return calibrate(r);
}

ModelSpec gaussian_boundary() {
  CalibrationRequest r;
  r.family = Family::GaussianBinary;
  return calibrate(r);
}

RenewalTable gaussian_table() {
  RenewalEstimateOptions opt;
  opt.replicas = 100000;
  opt.seed = 101;
  return estimate_renewal_mc(step_law(gaussian_boundary()), opt);
}

bool snapshots_identical(const MartingaleSnapshot& a, const MartingaleSnapshot& b) {
  auto same = [](double x, double y) {
    return (std::isnan(x) && std::isnan(y)) || x == y;
  };
  return a.n == b.n && same(a.W, b.W) && same(a.D, b.D) &&
         same(a.W_trunc, b.W_trunc) && same(a.D_trunc, b.D_trunc) &&
         a.I_n == b.I_n && a.pruned_W_mass == b.pruned_W_mass &&
         a.pruned_D_mass == b.pruned_D_mass &&
         a.killed_W_mass == b.killed_W_mass && a.alive_count == b.alive_count &&
         a.pruned_count == b.pruned_count && a.killed_count == b.killed_count &&
         a.nodes_visited == b.nodes_visited;
}

// Materialized binary tree for oracle evaluations: displacements indexed
// heap-style, node k has children 2k+1, 2k+2.
struct StoredTree {
  std::size_t n;
  std::vector<double> disp;
  std::vector<double> pos;

  StoredTree(const ModelSpec& m, std::size_t gens, Stream& rng) : n(gens) {
    const std::size_t nodes = (std::size_t{2} << gens) - 1;
    disp.assign(nodes, 0.0);
    pos.assign(nodes, 0.0);
    for (std::size_t k = 1; k < nodes; ++k) {
      disp[k] = sample_child_displacement(m, rng);
      pos[k] = pos[(k - 1) / 2] + disp[k];
    }
  }

  // Killed additive sum at barrier offset x (absolute positions x + V).
  double w_trunc(double x) const {
    double sum = 0.0;
    walk(0, x, true, [&](std::size_t k) { sum += std::exp(-(x + pos[k])); });
    return sum;
  }

  double w_full() const {
    double sum = 0.0;
    walk(0, 0.0, false, [&](std::size_t k) { sum += std::exp(-pos[k]); });
    return sum;
  }

  template <typename Leaf>
  void walk(std::size_t k, double x, bool kill, Leaf&& leaf) const {
    if (kill && x + pos[k] < 0.0) return;
    if (depth(k) == n) {
      leaf(k);
      return;
    }
    walk(2 * k + 1, x, kill, leaf);
    walk(2 * k + 2, x, kill, leaf);
  }

  static std::size_t depth(std::size_t k) {
    std::size_t d = 0;
    while (k > 0) {
      k = (k - 1) / 2;
      ++d;
    }
    return d;
  }
};

}  // namespace

TEST_CASE("generation zero snapshots are exact") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 0;
  Stream rng(1, Stage::Engine, 0);
  const MartingaleSnapshot s = simulate_replica(lb, t, kc, rng);
  CHECK(s.W_trunc == doctest::Approx(std::exp(-lb.a)).epsilon(1e-15));
  CHECK(s.D_trunc == doctest::Approx(2.0 * std::exp(-lb.a)).epsilon(1e-12));
  CHECK(s.I_n == 0.0);
  CHECK(s.alive_count == 1);
  CHECK(std::isnan(s.W));
}

TEST_CASE("config validation") {
  KillConfig kc;
  kc.x = -1.0;
  CHECK_THROWS_AS(kc.validate(), std::domain_error);
  kc.x = 2.0;
  kc.v_cap = 1.5;
  CHECK_THROWS_AS(kc.validate(), std::domain_error);
  kc.x = std::numeric_limits<double>::infinity();
  kc.v_cap = -1.0;
  CHECK_THROWS_AS(kc.validate(), std::domain_error);
}

TEST_CASE("iterative engine equals the recursive reference bit for bit") {
  const ModelSpec lb = lattice_boundary();
  const ModelSpec gb = gaussian_boundary();
  const RenewalTable lt = lattice_renewal_table(lb, 40.0);
  const RenewalTable gt = gaussian_table();

  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    KillConfig kc;
    kc.x = lb.a;
    kc.n = 9;
    kc.v_cap = kc.x + 6.0;
    Stream r1(seed, Stage::Engine, 1);
    Stream r2(seed, Stage::Engine, 1);
    const MartingaleSnapshot a = simulate_replica(lb, lt, kc, r1);
    const MartingaleSnapshot b = simulate_replica_reference(lb, lt, kc, r2);
    CHECK(snapshots_identical(a, b));
  }
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    KillConfig kc;
    kc.x = 1.0;
    kc.n = 7;
    kc.v_cap = 7.0;
    Stream r1(seed, Stage::Engine, 2);
    Stream r2(seed, Stage::Engine, 2);
    const MartingaleSnapshot a = simulate_replica(gb, gt, kc, r1);
    const MartingaleSnapshot b = simulate_replica_reference(gb, gt, kc, r2);
    CHECK(snapshots_identical(a, b));
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    KillConfig kc;
    kc.x = std::numeric_limits<double>::infinity();
    kc.n = 8;
    kc.v_cap = 9.0;
    Stream r1(seed, Stage::Engine, 3);
    Stream r2(seed, Stage::Engine, 3);
    const MartingaleSnapshot a = simulate_replica(gb, gt, kc, r1);
    const MartingaleSnapshot b = simulate_replica_reference(gb, gt, kc, r2);
    CHECK(snapshots_identical(a, b));
  }
}

TEST_CASE("replica batches are thread-count invariant") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 10;
  EngineBatchOptions o1;
  o1.replicas = 400;
  o1.seed = 99;
  o1.threads = 1;
  EngineBatchOptions o4 = o1;
  o4.threads = 4;
  const EngineBatch b1 = run_replicas(lb, t, kc, o1);
  const EngineBatch b4 = run_replicas(lb, t, kc, o4);
  REQUIRE(b1.snapshots.size() == b4.snapshots.size());
  for (std::size_t i = 0; i < b1.snapshots.size(); ++i) {
    CHECK(snapshots_identical(b1.snapshots[i], b4.snapshots[i]));
  }
}

TEST_CASE("unkilled additive martingale has mean one") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  KillConfig kc;
  kc.x = std::numeric_limits<double>::infinity();
  kc.n = 10;
  EngineBatchOptions opt;
  opt.replicas = 20000;
  opt.seed = 7;
  const EngineBatch b = run_replicas(lb, t, kc, opt);
  const MeanSe w = mean_se(b.collect(&MartingaleSnapshot::W));
  CHECK(std::abs(w.mean - 1.0) < 3 * w.se);
}

TEST_CASE("killed derivative sum is a martingale; killed additive a supermartingale") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  KillConfig kc;
  kc.x = lb.a;
  kc.n = 10;
  EngineBatchOptions opt;
  opt.replicas = 40000;
  opt.seed = 11;
  const EngineBatch b = run_replicas(lb, t, kc, opt);
  const MeanSe d = mean_se(b.collect(&MartingaleSnapshot::D_trunc));
  const double target = renewal_eval(t, kc.x) * std::exp(-kc.x);
  CHECK(std::abs(d.mean - target) < 3 * d.se);

  const MeanSe w = mean_se(b.collect(&MartingaleSnapshot::W_trunc));
  const MeanSe pw = mean_se(b.collect(&MartingaleSnapshot::pruned_W_mass));
  CHECK(w.mean + pw.mean <= std::exp(-kc.x) + 3 * w.se);

  // killed mass completes the additive sum into a mean-e^{-x} martingale
  const auto ws = b.collect(&MartingaleSnapshot::W_trunc);
  const auto ks = b.collect(&MartingaleSnapshot::killed_W_mass);
  std::vector<double> tilde(ws.size());
  for (std::size_t i = 0; i < ws.size(); ++i) tilde[i] = ws[i] + ks[i];
  const MeanSe wt = mean_se(tilde);
  CHECK(std::abs(wt.mean - std::exp(-kc.x)) < 3 * wt.se);
}

TEST_CASE("stored trees: truncation is monotone in x and reaches W_n") {
  const ModelSpec gb = gaussian_boundary();
  Stream rng(13, Stage::Engine, 4);
  int full_matches = 0;
  const int trees = 50;
  for (int i = 0; i < trees; ++i) {
    const StoredTree tree(gb, 10, rng);
    const double wn = tree.w_full();
    double prev = 0.0;
    for (const double x : {1.0, 2.0, 4.0, 8.0}) {
      const double w = std::exp(x) * tree.w_trunc(x);
      CHECK(w >= prev * (1.0 - 1e-12));
      CHECK(w <= wn * (1.0 + 1e-12));
      prev = w;
    }
    if (std::abs(prev - wn) <= 1e-10 * wn) ++full_matches;
  }
  // by x = 8 the barrier almost never bites over 10 generations
  CHECK(full_matches >= trees - 5);
}

TEST_CASE("pruning compensation reproduces uncapped means") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  KillConfig capped;
  capped.x = lb.a;
  capped.n = 10;
  capped.v_cap = capped.x + 8.0;
  KillConfig uncapped = capped;
  uncapped.v_cap = std::numeric_limits<double>::infinity();
  EngineBatchOptions opt;
  opt.replicas = 60000;
  opt.seed = 17;
  const EngineBatch bc = run_replicas(lb, t, capped, opt);
  opt.seed = 18;
  const EngineBatch bu = run_replicas(lb, t, uncapped, opt);

  const MeanSe dc = mean_se(bc.collect(&MartingaleSnapshot::D_trunc));
  const MeanSe pd = mean_se(bc.collect(&MartingaleSnapshot::pruned_D_mass));
  const MeanSe du = mean_se(bu.collect(&MartingaleSnapshot::D_trunc));
  CHECK(std::abs(dc.mean + pd.mean - du.mean) < 4 * (dc.se + du.se));
  CHECK(pd.mean > 0.0);
}

TEST_CASE("node budget breaches are flagged and counted") {
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  KillConfig kc;
  kc.x = std::numeric_limits<double>::infinity();
  kc.n = 16;
  kc.node_budget = 100;
  Stream rng(19, Stage::Engine, 5);
  CHECK_THROWS_AS(simulate_replica(lb, t, kc, rng), ResourceError);

  EngineBatchOptions opt;
  opt.replicas = 10;
  opt.seed = 20;
  const EngineBatch b = run_replicas(lb, t, kc, opt);
  CHECK(b.discarded == 10);
  CHECK(b.collect(&MartingaleSnapshot::W).empty());
}

TEST_CASE("killed boundary mass dies even though the population may survive") {
  // Both built-in boundary families push a typical child upward, so particles
  // can escape the barrier for good and the population explodes; what decays
  // is the killed additive mass, whose mean is e^{-x} P(walk above 0 for n
  // steps) ~ c / sqrt(n).
  const ModelSpec lb = lattice_boundary();
  const RenewalTable t = lattice_renewal_table(lb, 40.0);
  double prev_fraction = -1.0;
  double first_mass = 0.0, last_mass = 0.0;
  double last_median = 0.0;
  for (const std::size_t n : {std::size_t{25}, std::size_t{50}, std::size_t{100},
                              std::size_t{200}}) {
    KillConfig kc;
    kc.x = 0.0;
    kc.n = n;
    kc.v_cap = 8.0;
    EngineBatchOptions opt;
    opt.replicas = 2000;
    opt.seed = 23;
    const EngineBatch b = run_replicas(lb, t, kc, opt);
    std::size_t extinct = 0;
    for (const auto& s : b.snapshots) {
      extinct += s.alive_count == 0 && s.pruned_count == 0;
    }
    const double fraction = static_cast<double>(extinct) / 2000.0;
    CHECK(fraction >= prev_fraction - 0.02);  // extinction only accumulates
    prev_fraction = fraction;

    // The pruned ledger carries the mass that escaped upward (a martingale,
    // so it does not decay); the mass still alive near the barrier vanishes.
    std::vector<double> w = b.collect(&MartingaleSnapshot::W_trunc);
    const MeanSe ms = mean_se(w);
    if (n == 25) first_mass = ms.mean;
    if (n == 200) {
      last_mass = ms.mean;
      std::sort(w.begin(), w.end());
      last_median = quantile_sorted(w, 0.5);
    }
  }
  CHECK(last_mass < 0.3 * first_mass);
  CHECK(last_median < 1e-4);
}

TEST_CASE("ancestral minimum experiment") {
  CalibrationRequest r;
  r.family = Family::GaussianBinary;
  r.regime = Regime::Subcritical;
  r.sigma2 = 1.0;
  const ModelSpec gs = calibrate(r);

  CHECK_THROWS_AS(minimum_tail_experiment(gs, 1.0, 2.0, 5, 10, 1, 1),
                  std::domain_error);
  const MinimumTailResult zero = minimum_tail_experiment(gs, 6.0, 1.0, 0, 1000, 3, 0);
  CHECK(zero.p_hat == 0.0);

  const MinimumTailResult m = minimum_tail_experiment(gs, 4.0, 1.0, 12, 20000, 5, 0);
  CHECK(m.within_bound);
  CHECK(m.p_hat <= m.bound + 3 * m.se);

  const ModelSpec gb = gaussian_boundary();
  CHECK_THROWS_AS(minimum_tail_experiment(gb, 4.0, 1.0, 5, 10, 1, 1),
                  std::domain_error);
}

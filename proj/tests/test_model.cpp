#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "brw/model.hpp"
#include "brw/stats.hpp"

using namespace brw;
using std::numbers::ln2;

namespace {

ModelSpec make(Family f, Regime r, std::optional<double> sigma2 = {},
               std::optional<double> a = {}) {
  CalibrationRequest req;
  req.family = f;
  req.regime = r;
  req.sigma2 = sigma2;
  req.a = a;
  return calibrate(req);
}

}  // namespace

TEST_CASE("boundary calibrations solve both constraints") {
  const ModelSpec gb = make(Family::GaussianBinary, Regime::Boundary);
  CHECK(gb.sigma2 == doctest::Approx(2 * ln2).epsilon(1e-15));
  CHECK(gb.mu == doctest::Approx(2 * ln2).epsilon(1e-15));
  CHECK(std::abs(biggins_transform(gb, 1.0)) <= 1e-12);
  CHECK(std::abs(biggins_derivative(gb, 1.0)) <= 1e-12);

  const ModelSpec lb = make(Family::LatticeBinary, Regime::Boundary);
  CHECK(lb.a == doctest::Approx(std::log(2.0 + std::sqrt(3.0))).epsilon(1e-15));
  CHECK(lb.p == doctest::Approx((2.0 + std::sqrt(3.0)) / 4.0).epsilon(1e-15));
  CHECK(std::abs(biggins_transform(lb, 1.0)) <= 1e-12);
  CHECK(std::abs(biggins_derivative(lb, 1.0)) <= 1e-12);
}

TEST_CASE("subcritical calibrations: second root and defaults") {
  const ModelSpec gs = make(Family::GaussianBinary, Regime::Subcritical, 1.0);
  CHECK(gs.mu == doctest::Approx(ln2 + 0.5).epsilon(1e-15));
  CHECK(gs.kappa == doctest::Approx(2 * ln2).epsilon(1e-12));
  CHECK(std::abs(biggins_transform(gs, gs.kappa)) <= 1e-10);
  CHECK(gs.gamma == doctest::Approx(0.5 * (1 + gs.kappa)));
  CHECK(gs.rho == doctest::Approx(std::min(gs.gamma, 2.0)));
  CHECK(biggins_derivative(gs, 1.0) < 0.0);

  const ModelSpec ls = make(Family::LatticeBinary, Regime::Subcritical, {}, 1.0);
  CHECK(std::abs(biggins_transform(ls, 1.0)) <= 1e-12);
  CHECK(std::abs(biggins_transform(ls, ls.kappa)) <= 1e-10);
  CHECK(ls.kappa > 1.0);
  CHECK(biggins_derivative(ls, 1.0) < 0.0);
}

TEST_CASE("phi values match the closed forms") {
  const ModelSpec gb = make(Family::GaussianBinary, Regime::Boundary);
  CHECK(biggins_transform(gb, 0.0) == doctest::Approx(ln2).epsilon(1e-15));
  const ModelSpec gs = make(Family::GaussianBinary, Regime::Subcritical, 1.0);
  CHECK(std::abs(biggins_transform(gs, 2 * ln2)) <= 1e-12);
  const ModelSpec lb = make(Family::LatticeBinary, Regime::Boundary);
  CHECK(biggins_transform(lb, 0.0) == doctest::Approx(ln2).epsilon(1e-15));
  CHECK_THROWS_AS(biggins_transform(gb, std::nan("")), std::domain_error);
}

TEST_CASE("infeasible calibration requests carry residuals") {
  CHECK_THROWS_AS(make(Family::GaussianBinary, Regime::Subcritical, 2.0),
                  CalibrationError);
  CHECK_THROWS_AS(make(Family::LatticeBinary, Regime::Subcritical, {}, 0.5),
                  CalibrationError);
  CHECK_THROWS_AS(make(Family::LatticeBinary, Regime::Subcritical, {}, 1.5),
                  CalibrationError);
  CHECK_THROWS_AS(make(Family::GaussianBinary, Regime::Boundary, 1.0),
                  CalibrationError);
}

TEST_CASE("phi is strictly convex on a grid") {
  for (const ModelSpec& m :
       {make(Family::GaussianBinary, Regime::Boundary),
        make(Family::LatticeBinary, Regime::Boundary),
        make(Family::LatticeBinary, Regime::Subcritical, {}, 1.0)}) {
    for (double t1 = -1.0; t1 < 2.0; t1 += 0.5) {
      const double t2 = t1 + 1.0;
      const double mid = biggins_transform(m, 0.5 * (t1 + t2));
      const double avg =
          0.5 * (biggins_transform(m, t1) + biggins_transform(m, t2));
      CHECK(mid < avg);
    }
  }
}

TEST_CASE("offspring samples: support and martingale means") {
  const ModelSpec lb = make(Family::LatticeBinary, Regime::Boundary);
  Stream rng(5, Stage::Diagnostics, 0);
  for (int i = 0; i < 1000; ++i) {
    const OffspringSample o = sample_offspring(lb, rng);
    for (double d : o.displacements) {
      CHECK(std::abs(std::abs(d) - lb.a) < 1e-15);
    }
  }

  // E[W_1] = 1 and, at the boundary, E[sum V e^{-V}] = 0.
  for (const ModelSpec& m : {lb, make(Family::GaussianBinary, Regime::Boundary)}) {
    Stream r2(6, Stage::Diagnostics, 1);
    const std::size_t n = 400000;
    double sw = 0, sww = 0, sd = 0, sdd = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const OffspringSample o = sample_offspring(m, r2);
      double w = 0, d = 0;
      for (double v : o.displacements) {
        w += std::exp(-v);
        d += v * std::exp(-v);
      }
      sw += w;
      sww += w * w;
      sd += d;
      sdd += d * d;
    }
    const double mw = sw / n, md = sd / n;
    const double sew = std::sqrt((sww / n - mw * mw) / n);
    const double sed = std::sqrt((sdd / n - md * md) / n);
    CHECK(std::abs(mw - 1.0) < 3 * sew);
    CHECK(std::abs(md) < 3 * sed);
  }
}

TEST_CASE("moment diagnostics") {
  const ModelSpec lb = make(Family::LatticeBinary, Regime::Boundary);
  Stream rng(9, Stage::Diagnostics, 2);
  const MomentDiagnostics d0 = moment_diagnostics(lb, 0.0, 20000, rng);
  CHECK(d0.exp_x.mean == doctest::Approx(1.0).epsilon(1e-12));

  Stream rng1(9, Stage::Diagnostics, 3);
  const MomentDiagnostics d1 = moment_diagnostics(lb, 0.1, 200000, rng1);
  // X <= 2 (1 + a) e^{a} deterministically for the lattice family.
  const double xmax = 2.0 * (1.0 + lb.a) * std::exp(lb.a);
  CHECK(d1.exp_x.mean > 1.0);
  CHECK(d1.exp_x.mean <= std::exp(0.1 * xmax));
  CHECK_FALSE(d1.exp_x_inconclusive);

  // Gaussian boundary, delta = 0.05: the running estimate looks stable even
  // though deep left-tail displacements make the true expectation blow up.
  const ModelSpec gb = make(Family::GaussianBinary, Regime::Boundary);
  Stream rng2(9, Stage::Diagnostics, 4);
  const MomentDiagnostics d2 = moment_diagnostics(gb, 0.05, 400000, rng2);
  CHECK(std::isfinite(d2.exp_x.mean));
  CHECK(d2.exp_x.mean > 1.0);

  // Exact cross-check of the iid factorization: truncate both children at
  // c = mu - 4 sd, so MC and the one-child quadrature target one quantity.
  const double delta = 0.05;
  const double sd = std::sqrt(gb.sigma2);
  const double c_lo = gb.mu - 4.0 * sd;
  Stream rng3(9, Stage::Diagnostics, 5);
  const std::size_t nmc = 400000;
  double s = 0, s2 = 0;
  for (std::size_t i = 0; i < nmc; ++i) {
    const OffspringSample o = sample_offspring(gb, rng3);
    double x = 0;
    bool keep = true;
    for (double v : o.displacements) {
      keep &= v >= c_lo;
      x += (1.0 + std::max(v, 0.0)) * std::exp(-v);
    }
    const double term = keep ? std::exp(delta * x) : 0.0;
    s += term;
    s2 += term * term;
  }
  const double mc = s / nmc;
  const double mc_se = std::sqrt((s2 / nmc - mc * mc) / nmc);
  const auto& q = gauss_legendre(512);
  double one_child = 0.0;
  const double half = 0.5 * (gb.mu + 8.0 * sd - c_lo);
  const double mid = 0.5 * (gb.mu + 8.0 * sd + c_lo);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) {
    const double z = mid + half * q.nodes[i];
    const double x1 = (1.0 + std::max(z, 0.0)) * std::exp(-z);
    const double t = (z - gb.mu) / sd;
    one_child += q.weights[i] * std::exp(delta * x1 - 0.5 * t * t);
  }
  one_child *= half / std::sqrt(2.0 * std::numbers::pi * gb.sigma2);
  CHECK(std::abs(mc - one_child * one_child) < 3.0 * mc_se + 1e-6);

  CHECK_THROWS_AS(moment_diagnostics(lb, -0.1, 10, rng), std::domain_error);
}

TEST_CASE("model hash distinguishes calibrations") {
  const ModelSpec a = make(Family::LatticeBinary, Regime::Boundary);
  const ModelSpec b = make(Family::LatticeBinary, Regime::Subcritical, {}, 1.0);
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == make(Family::LatticeBinary, Regime::Boundary).hash());
}

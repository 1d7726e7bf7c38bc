#include "brw/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "brw/rng.hpp"

namespace brw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Multinomial bootstrap weights over n samples, written into counts.
void resample_counts(std::size_t n, Stream& rng, std::vector<std::uint32_t>& counts) {
  std::fill(counts.begin(), counts.end(), 0u);
  for (std::size_t i = 0; i < n; ++i) {
    counts[rng.next_u64() % n] += 1;
  }
}

double hill_from_sorted(std::span<const double> sorted, std::size_t k) {
  // sorted ascending; top k excesses over the (k+1)-th largest.
  const std::size_t n = sorted.size();
  const double threshold = sorted[n - k - 1];
  if (!(threshold > 0.0)) {
    throw FitError("hill: nonpositive threshold order statistic");
  }
  double s = 0.0;
  for (std::size_t i = n - k; i < n; ++i) s += std::log(sorted[i] / threshold);
  if (!(s > 0.0)) throw FitError("hill: degenerate top order statistics");
  return static_cast<double>(k) / s;
}

double loglik_comparison(std::span<const double> sorted, double u) {
  // Excess-over-threshold likelihoods at their respective MLEs.
  std::vector<double> ex;
  for (auto it = std::upper_bound(sorted.begin(), sorted.end(), u);
       it != sorted.end(); ++it) {
    ex.push_back(*it);
  }
  const double m = static_cast<double>(ex.size());
  if (ex.size() < 20 || !(u > 0.0)) return kNaN;
  double mean_excess = 0.0, mean_log = 0.0;
  for (double v : ex) {
    mean_excess += v - u;
    mean_log += std::log(v / u);
  }
  mean_excess /= m;
  mean_log /= m;
  if (!(mean_excess > 0.0) || !(mean_log > 0.0)) return kNaN;
  const double ll_exp = m * (-std::log(mean_excess) - 1.0);
  const double alpha = 1.0 / mean_log;
  double ll_pow = 0.0;
  for (double v : ex) ll_pow += std::log(alpha / u) - (alpha + 1.0) * std::log(v / u);
  return ll_exp - ll_pow;
}

TailFit fit_exponential(std::span<const double> sorted, const TailFitOptions& opt) {
  TailFit f;
  f.kind = TailKind::Exponential;
  f.n_samples = sorted.size();
  f.y_lo = quantile_sorted(sorted, opt.q_lo);
  f.y_hi = quantile_sorted(sorted, opt.q_hi);
  if (!(f.y_hi > f.y_lo)) {
    throw FitError("fit_tail: degenerate quantile window");
  }
  const std::size_t in_range =
      static_cast<std::size_t>(std::upper_bound(sorted.begin(), sorted.end(), f.y_hi) -
                               std::upper_bound(sorted.begin(), sorted.end(), f.y_lo));
  f.n_fit = in_range;
  if (in_range < 100) {
    throw FitError("fit_tail: only " + std::to_string(in_range) +
                   " samples inside the fit range");
  }

  const int g = opt.grid_points;
  std::vector<double> ys(g), lns(g);
  const double n = static_cast<double>(sorted.size());
  for (int i = 0; i < g; ++i) {
    const double y = f.y_lo + (f.y_hi - f.y_lo) * i / (g - 1.0);
    ys[i] = y;
    lns[i] = std::log(survival_sorted(sorted, y));
  }
  const LineFit line = ols(ys, lns);
  f.rate_or_index = -line.slope;
  f.prefactor = std::exp(line.intercept);
  f.r_squared = line.r_squared;

  // Bootstrap over samples: multinomial weights on the sorted array, the
  // regression window kept fixed.
  if (opt.bootstrap > 0) {
    Stream rng(opt.seed, Stage::Bootstrap, 0x464954ULL);
    std::vector<std::uint32_t> counts(sorted.size());
    std::vector<double> rates;
    rates.reserve(opt.bootstrap);
    std::vector<double> bys, blns;
    for (int b = 0; b < opt.bootstrap; ++b) {
      resample_counts(sorted.size(), rng, counts);
      // survival of the weighted sample at the same grid
      bys.clear();
      blns.clear();
      std::size_t j = sorted.size();
      std::uint64_t tail = 0;
      int gi = g - 1;
      while (gi >= 0) {
        while (j > 0 && sorted[j - 1] > ys[gi]) {
          tail += counts[j - 1];
          --j;
        }
        if (tail > 0) {
          bys.push_back(ys[gi]);
          blns.push_back(std::log(static_cast<double>(tail) / n));
        }
        --gi;
      }
      if (bys.size() >= 10) {
        std::reverse(bys.begin(), bys.end());
        std::reverse(blns.begin(), blns.end());
        rates.push_back(-ols(bys, blns).slope);
      }
    }
    if (rates.size() >= 50) {
      std::sort(rates.begin(), rates.end());
      f.ci_lo = quantile_sorted(rates, 0.025);
      f.ci_hi = quantile_sorted(rates, 0.975);
    }
  }
  f.loglik_exp_minus_power = loglik_comparison(sorted, f.y_lo);
  return f;
}

TailFit fit_power(std::span<const double> sorted_all, const TailFitOptions& opt) {
  // Positive samples only; the index describes the upper tail.
  std::vector<double> sorted(
      std::upper_bound(sorted_all.begin(), sorted_all.end(), 0.0),
      sorted_all.end());
  TailFit f;
  f.kind = TailKind::Power;
  f.n_samples = sorted_all.size();
  if (sorted.size() < 1000) throw FitError("fit_tail: too few positive samples");
  std::size_t k = static_cast<std::size_t>(
      opt.hill_fraction * static_cast<double>(sorted.size()));
  k = std::max<std::size_t>(k, 100);
  if (k + 1 >= sorted.size()) throw FitError("fit_tail: hill k too large");
  f.n_fit = k;
  f.rate_or_index = hill_from_sorted(sorted, k);
  const double u = sorted[sorted.size() - k - 1];
  f.y_lo = u;
  f.y_hi = sorted.back();
  f.prefactor = (static_cast<double>(k) / static_cast<double>(sorted.size())) *
                std::pow(u, f.rate_or_index);

  // Log-log regression cross-check over the same top region.
  {
    const int g = 80;
    std::vector<double> lys, lns;
    const double n = static_cast<double>(sorted.size());
    for (int i = 0; i < g; ++i) {
      const double y = u * std::pow(sorted.back() * 0.5 / u,
                                    static_cast<double>(i) / (g - 1.0));
      const double s = survival_sorted(sorted, y);
      if (s > 0) {
        lys.push_back(std::log(y));
        lns.push_back(std::log(s));
      }
    }
    if (lys.size() >= 10) f.r_squared = ols(lys, lns).r_squared;
  }

  if (opt.bootstrap > 0) {
    Stream rng(opt.seed, Stage::Bootstrap, 0x48494cULL);
    std::vector<std::uint32_t> counts(sorted.size());
    std::vector<double> idx;
    for (int b = 0; b < opt.bootstrap; ++b) {
      resample_counts(sorted.size(), rng, counts);
      // walk down the sorted order statistics to the weighted k-th largest
      std::uint64_t acc = 0;
      double logsum = 0.0;
      double threshold = 0.0;
      for (std::size_t j = sorted.size(); j-- > 0;) {
        const std::uint64_t c = counts[j];
        if (acc + c >= k) {
          threshold = sorted[j];
          logsum += static_cast<double>(k - acc) * std::log(sorted[j]);
          acc = k;
          break;
        }
        acc += c;
        logsum += static_cast<double>(c) * std::log(sorted[j]);
      }
      if (acc == k && threshold > 0.0) {
        const double mean_log = logsum / static_cast<double>(k) - std::log(threshold);
        if (mean_log > 0) idx.push_back(1.0 / mean_log);
      }
    }
    if (idx.size() >= 50) {
      std::sort(idx.begin(), idx.end());
      f.ci_lo = quantile_sorted(idx, 0.025);
      f.ci_hi = quantile_sorted(idx, 0.975);
    }
  }
  f.loglik_exp_minus_power = loglik_comparison(sorted, u);
  return f;
}

}  // namespace

TailFit fit_tail(std::span<const double> samples, TailKind kind,
                 const TailFitOptions& opt) {
  if (samples.size() < 10000) {
    throw FitError("fit_tail: need at least 10^4 samples, got " +
                   std::to_string(samples.size()));
  }
  if (!(opt.q_lo > 0.5 && opt.q_hi < 1.0 && opt.q_lo < opt.q_hi)) {
    throw FitError("fit_tail: quantile range must sit inside (0.5, 1)");
  }
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  return kind == TailKind::Exponential ? fit_exponential(sorted, opt)
                                       : fit_power(sorted, opt);
}

XDependenceFit scan_x_dependence(std::span<const XDependencePoint> pts) {
  if (pts.size() < 4) {
    throw std::invalid_argument("scan_x_dependence: need >= 4 x-values");
  }
  std::vector<double> x, lnp, sig;
  double lo_max = -kInf, hi_min = kInf;
  for (const auto& p : pts) {
    if (!(p.p_hat > 0.0) || !(p.se > 0.0)) {
      throw std::invalid_argument("scan_x_dependence: nonpositive estimate or SE");
    }
    const double s = p.se / p.p_hat;  // delta method on ln p
    x.push_back(p.x);
    lnp.push_back(std::log(p.p_hat));
    sig.push_back(s);
    lo_max = std::max(lo_max, lnp.back() - 2.0 * s);
    hi_min = std::min(hi_min, lnp.back() + 2.0 * s);
  }
  XDependenceFit f;
  f.line = wls(x, lnp, sig);
  f.inconclusive = lo_max <= hi_min;  // one value inside every 2-sigma band
  return f;
}

MgfTable mgf_recursion(const ModelSpec& m, const MgfOptions& opt) {
  if (m.regime != Regime::Subcritical) {
    throw std::domain_error("mgf_recursion: subcritical models only");
  }
  if (opt.theta_grid.empty()) {
    throw std::invalid_argument("mgf_recursion: empty theta grid");
  }
  MgfTable t;
  t.theta_grid = opt.theta_grid;
  t.n_max = opt.n_max;
  const bool lattice = m.family == Family::LatticeBinary;
  if (lattice) {
    const int kx = static_cast<int>(std::ceil(opt.x_max / m.a));
    for (int k = 0; k <= kx; ++k) t.x_grid.push_back(k * m.a);
  } else {
    for (double x = 0.0; x <= opt.x_max + 1e-12; x += opt.x_step) {
      t.x_grid.push_back(x);
    }
  }
  const std::size_t nt = t.theta_grid.size(), nx = t.x_grid.size();
  t.psi.assign((opt.n_max + 1) * nt * nx, kNaN);
  t.diverged_at.assign(nt, -1);
  t.sup_increment.assign(opt.n_max + 1, 0.0);
  t.theta_frontier = kInf;

  auto at = [&](std::size_t n, std::size_t it, std::size_t ix) -> double& {
    return t.psi[(n * nt + it) * nx + ix];
  };
  for (std::size_t it = 0; it < nt; ++it) {
    for (std::size_t ix = 0; ix < nx; ++ix) {
      at(0, it, ix) = t.theta_grid[it] * std::exp(-t.x_grid[ix]);
    }
  }

  const double x_top = t.x_grid.back();
  const double grid_h = nx > 1 ? t.x_grid[1] - t.x_grid[0] : 1.0;
  // psi_{n-1}(u) for u >= 0: grid interpolation, asymptote above the grid.
  auto psi_prev = [&](std::size_t n, std::size_t it, double u, double theta) {
    if (u >= x_top) return theta * std::exp(-u);
    const std::size_t i =
        std::min(static_cast<std::size_t>(u / grid_h), nx - 2);
    const double frac = (u - t.x_grid[i]) / grid_h;
    return at(n - 1, it, i) * (1.0 - frac) + at(n - 1, it, i + 1) * frac;
  };

  const auto& quad = gauss_legendre(opt.quad_order);
  const double sd = std::sqrt(m.sigma2);
  for (std::size_t n = 1; n <= opt.n_max; ++n) {
    double sup_inc = 0.0;
    for (std::size_t it = 0; it < nt; ++it) {
      if (t.diverged_at[it] >= 0) continue;
      const double theta = t.theta_grid[it];
      bool diverged = false;
      for (std::size_t ix = 0; ix < nx; ++ix) {
        const double x = t.x_grid[ix];
        double ln_mean;
        if (lattice) {
          // Z = +a w.p. p, -a w.p. 1-p; particles landing below 0 contribute 1.
          const double t_up = std::log(m.p) + psi_prev(n, it, x + m.a, theta);
          const double t_dn =
              std::log(1.0 - m.p) +
              (x >= m.a - 1e-12 ? psi_prev(n, it, x - m.a, theta) : 0.0);
          const double hi = std::max(t_up, t_dn);
          ln_mean = hi + std::log(std::exp(t_up - hi) + std::exp(t_dn - hi));
        } else {
          // E over the child displacement Z ~ N(mu, sigma2) on [mu +- 8 sd].
          double shift = 0.0;
          for (std::size_t k = 0; k < quad.nodes.size(); ++k) {
            const double z = m.mu + 8.0 * sd * quad.nodes[k];
            const double u = x + z;
            shift = std::max(shift, u >= 0.0 ? psi_prev(n, it, u, theta) : 0.0);
          }
          double s = 0.0;
          const double norm = 8.0 * sd / std::sqrt(2.0 * std::numbers::pi * m.sigma2);
          for (std::size_t k = 0; k < quad.nodes.size(); ++k) {
            const double z = m.mu + 8.0 * sd * quad.nodes[k];
            const double u = x + z;
            const double g = u >= 0.0 ? psi_prev(n, it, u, theta) : 0.0;
            const double dz = (z - m.mu) / sd;
            s += quad.weights[k] * std::exp(g - shift - 0.5 * dz * dz);
          }
          ln_mean = shift + std::log(s * norm);
        }
        const double v = 2.0 * ln_mean;
        if (!std::isfinite(v) || v > t.divergence_sentinel) {
          diverged = true;
          break;
        }
        at(n, it, ix) = v;
        const double prev = at(n - 1, it, ix);
        sup_inc = std::max(sup_inc, std::abs(v - prev));
        t.max_decrease_in_n = std::max(t.max_decrease_in_n, prev - v);
      }
      if (diverged) {
        t.diverged_at[it] = static_cast<int>(n);
        t.theta_frontier = std::min(t.theta_frontier, theta);
        for (std::size_t ix = 0; ix < nx; ++ix) at(n, it, ix) = kNaN;
      }
    }
    t.sup_increment[n] = sup_inc;
  }
  return t;
}

LemmaCertificate certify_lemma21_bound(const MgfTable& table, double rho) {
  if (!(rho > 1.0 && rho <= 2.0)) {
    throw std::domain_error("certify_lemma21_bound: rho outside (1, 2]");
  }
  LemmaCertificate cert;
  cert.rho = rho;
  // Largest prefix of the theta grid untouched by divergence.
  double theta_bar = 0.0;
  std::size_t it_bar = 0;
  for (std::size_t it = 0; it < table.theta_grid.size(); ++it) {
    if (table.diverged_at[it] >= 0) break;
    theta_bar = table.theta_grid[it];
    it_bar = it + 1;
  }
  cert.theta_bar = theta_bar;
  if (it_bar == 0) return cert;

  // Excesses below the arithmetic resolution of the recursion are treated as
  // satisfying the bound: at large x the true excess underflows while the
  // denominator e^{-rho x} shrinks even faster, so noise would dominate K.
  const double tol = 1e-12;
  double K = 0.0;
  for (std::size_t n = 0; n <= table.n_max; ++n) {
    for (std::size_t it = 0; it < it_bar; ++it) {
      const double theta = table.theta_grid[it];
      for (std::size_t ix = 0; ix < table.x_grid.size(); ++ix) {
        const double x = table.x_grid[ix];
        const double excess =
            table.get(n, it, ix) - theta * std::exp(-x);
        if (excess > tol) {
          K = std::max(K, excess / (std::pow(theta, rho) * std::exp(-rho * x)));
        }
      }
    }
  }
  cert.K = K;
  cert.holds = std::isfinite(K) && theta_bar >= 0.01;
  return cert;
}

}  // namespace brw

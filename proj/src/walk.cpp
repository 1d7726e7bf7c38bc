#include "brw/walk.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "brw/parallel.hpp"

namespace brw {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t hash_doubles(std::uint64_t h, std::initializer_list<double> vs) {
  for (double v : vs) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    h = fnv1a64_mix(h, bits);
  }
  return h;
}

}  // namespace

StepLaw step_law(const ModelSpec& m) {
  StepLaw s;
  if (m.family == Family::GaussianBinary) {
    s.lattice = false;
    s.step_mean = m.mu - m.sigma2;
    s.step_var = m.sigma2;
  } else {
    s.lattice = true;
    s.a = m.a;
    // Tilted two-point law; phi(1) = 0 makes it a probability.
    s.p_up = 2.0 * m.p * std::exp(-m.a);
    s.step_mean = m.a * (2.0 * s.p_up - 1.0);
    s.step_var = m.a * m.a - s.step_mean * s.step_mean;
  }
  return s;
}

double renewal_eval(const RenewalTable& t, double u) {
  if (!(u >= 0.0)) throw std::domain_error("renewal_eval: u < 0");
  const double umax = t.grid.back();
  if (u >= umax) return t.values.back() + t.slope * (u - umax);
  const double h = t.grid[1] - t.grid[0];
  const std::size_t i =
      std::min(static_cast<std::size_t>(u / h), t.grid.size() - 2);
  const double frac = (u - t.grid[i]) / h;
  return t.values[i] * (1.0 - frac) + t.values[i + 1] * frac;
}

double hitting_probability(const RenewalTable& t, double x, double y) {
  if (!(y >= 0.0) || !(x >= y)) {
    throw std::domain_error("hitting_probability: need 0 <= y <= x");
  }
  if (y == 0.0) return 0.0;
  return 1.0 - renewal_eval(t, x - y) / renewal_eval(t, x);
}

RenewalTable lattice_renewal_table(const ModelSpec& m, double u_max) {
  if (m.family != Family::LatticeBinary) {
    throw std::invalid_argument("lattice_renewal_table: not a lattice model");
  }
  const StepLaw s = step_law(m);
  const int k_max = std::max(2, static_cast<int>(std::ceil(u_max / m.a)));
  RenewalTable t;
  t.exact = true;
  t.span = m.a;
  t.grid.resize(k_max + 1);
  t.values.resize(k_max + 1);
  if (m.boundary()) {
    // Symmetric walk: every descending ladder height is one down-step.
    for (int k = 0; k <= k_max; ++k) {
      t.grid[k] = k * m.a;
      t.values[k] = k + 1.0;
    }
    t.slope = 1.0 / m.a;
  } else {
    // Positive drift: ladder epochs are defective with failure probability
    // theta = P(ever one step down) = (1-q)/q.
    const double theta = (1.0 - s.p_up) / s.p_up;
    double pow_th = 1.0, sum = 0.0;
    for (int k = 0; k <= k_max; ++k) {
      sum += pow_th;
      t.grid[k] = k * m.a;
      t.values[k] = sum;
      pow_th *= theta;
    }
    t.slope = std::max((t.values[k_max] - t.values[k_max - 1]) / m.a, 1e-300);
  }
  t.source_hash = hash_doubles(fnv1a64("lattice_exact"), {m.a, m.p, u_max});
  return t;
}

RenewalTable estimate_renewal_mc(const StepLaw& step,
                                 const RenewalEstimateOptions& opt) {
  if (step.mean() < -1e-12) {
    throw EstimationError("estimate_renewal_mc: negative drift, tau+ may be infinite");
  }
  const double h = step.lattice ? step.a : opt.grid_step;
  const std::size_t m = static_cast<std::size_t>(std::ceil(opt.u_max / h));
  const std::size_t npts = m + 1;
  int threads = opt.threads == 0 ? hardware_threads() : opt.threads;
  const int blocks = opt.blocks;

  // hist[t][b * npts + i] counts steps whose lowest covering grid index is i.
  std::vector<std::vector<std::int64_t>> hist(
      threads, std::vector<std::int64_t>(blocks * npts, 0));
  std::vector<std::int64_t> capped(threads, 0);

  for_each_replica(opt.replicas, threads, [&](std::uint64_t rep) {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    auto* acc = hist[tid].data() +
                static_cast<std::size_t>(rep % blocks) * npts;
    Stream rng(opt.seed, Stage::Renewal, rep);
    acc[0] += 1;  // S_0 = 0 occupies every level
    if (step.lattice) {
      long long k = 0;
      for (std::uint64_t n = 0; n < opt.step_cap; ++n) {
        k += rng.bernoulli(step.p_up) ? 1 : -1;
        if (k >= 0) return;
        const std::size_t idx = static_cast<std::size_t>(-k);
        if (idx <= m) acc[idx] += 1;
      }
    } else {
      const double sd = std::sqrt(step.step_var);
      double s = 0.0;
      for (std::uint64_t n = 0; n < opt.step_cap; ++n) {
        s += step.step_mean + sd * rng.normal();
        if (s >= 0.0) return;
        const double r = -s / h;
        if (r <= static_cast<double>(m)) {
          acc[static_cast<std::size_t>(std::ceil(r - 1e-12))] += 1;
        }
      }
    }
    capped[tid] += 1;
  });

  // Merge threads into per-block tables (integer sums commute, so the result
  // is independent of scheduling).
  std::vector<std::int64_t> block_hist(blocks * npts, 0);
  std::int64_t total_capped = 0;
  for (int t = 0; t < threads; ++t) {
    for (std::size_t j = 0; j < block_hist.size(); ++j) block_hist[j] += hist[t][j];
    total_capped += capped[t];
  }
  const double capped_fraction =
      static_cast<double>(total_capped) / static_cast<double>(opt.replicas);
  if (capped_fraction > 1e-3) {
    throw EstimationError("estimate_renewal_mc: " +
                          std::to_string(capped_fraction * 100.0) +
                          "% of replicas hit the step cap");
  }

  // Prefix sums turn first-cover counts into occupation counts R(u_i).
  std::vector<double> block_count(blocks, 0.0);
  for (std::uint64_t rep = 0; rep < opt.replicas; ++rep) {
    block_count[rep % blocks] += 1.0;
  }
  std::vector<std::vector<double>> block_r(blocks, std::vector<double>(npts));
  for (int b = 0; b < blocks; ++b) {
    std::int64_t run = 0;
    for (std::size_t i = 0; i < npts; ++i) {
      run += block_hist[b * npts + i];
      block_r[b][i] = static_cast<double>(run) / block_count[b];
    }
  }

  RenewalTable t;
  t.exact = false;
  t.span = step.lattice ? step.a : 0.0;
  t.capped_fraction = capped_fraction;
  t.grid.resize(npts);
  t.values.resize(npts);
  t.se.resize(npts);
  for (std::size_t i = 0; i < npts; ++i) {
    t.grid[i] = static_cast<double>(i) * h;
    double s = 0.0;
    for (int b = 0; b < blocks; ++b) s += block_r[b][i] * block_count[b];
    t.values[i] = s / static_cast<double>(opt.replicas);
    double ss = 0.0;
    for (int b = 0; b < blocks; ++b) {
      const double d = block_r[b][i] - t.values[i];
      ss += d * d;
    }
    t.se[i] = std::sqrt(ss / (blocks - 1.0) / blocks);
  }

  // Asymptotic slope from the upper half of the table.
  const std::size_t lo = npts / 2;
  auto fit_slope = [&](const std::vector<double>& vals) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(npts - lo);
    for (std::size_t i = lo; i < npts; ++i) {
      sx += t.grid[i];
      sy += vals[i];
    }
    const double mx = sx / n, my = sy / n;
    for (std::size_t i = lo; i < npts; ++i) {
      sxx += (t.grid[i] - mx) * (t.grid[i] - mx);
      sxy += (t.grid[i] - mx) * (vals[i] - my);
    }
    return sxy / sxx;
  };
  t.slope = fit_slope(t.values);

  // Percentile bootstrap over replica blocks for the slope CI.
  if (opt.bootstrap > 0) {
    Stream boot(opt.seed, Stage::Bootstrap, 0x52454eULL);
    std::vector<double> slopes(opt.bootstrap);
    std::vector<double> resampled(npts);
    for (int rep = 0; rep < opt.bootstrap; ++rep) {
      std::fill(resampled.begin(), resampled.end(), 0.0);
      double wsum = 0.0;
      for (int b = 0; b < blocks; ++b) {
        const int pick =
            static_cast<int>(boot.next_u64() % static_cast<std::uint64_t>(blocks));
        for (std::size_t i = 0; i < npts; ++i) {
          resampled[i] += block_r[pick][i] * block_count[pick];
        }
        wsum += block_count[pick];
      }
      for (std::size_t i = 0; i < npts; ++i) resampled[i] /= wsum;
      slopes[rep] = fit_slope(resampled);
    }
    std::sort(slopes.begin(), slopes.end());
    t.slope_ci_lo = quantile_sorted(slopes, 0.025);
    t.slope_ci_hi = quantile_sorted(slopes, 0.975);
  }

  t.source_hash = hash_doubles(
      fnv1a64(step.lattice ? "renewal_mc_lattice" : "renewal_mc_gaussian"),
      {step.a, step.p_up, step.step_mean, step.step_var, opt.u_max, h,
       static_cast<double>(opt.replicas), static_cast<double>(opt.step_cap),
       static_cast<double>(opt.seed)});
  return t;
}

RenewalTable make_renewal_table(const ModelSpec& m,
                                const RenewalEstimateOptions& opt) {
  if (m.family == Family::LatticeBinary) {
    return lattice_renewal_table(m, opt.u_max);
  }
  return estimate_renewal_mc(step_law(m), opt);
}

std::vector<double> harmonicity_residuals(const RenewalTable& t,
                                          const StepLaw& step) {
  std::vector<double> out(t.grid.size());
  if (step.lattice) {
    for (std::size_t i = 0; i < t.grid.size(); ++i) {
      const double x = t.grid[i];
      double e = step.p_up * renewal_eval(t, x + step.a);
      if (x >= step.a - 1e-9) e += (1.0 - step.p_up) * renewal_eval(t, x - step.a);
      out[i] = std::abs(e - t.values[i]) / t.values[i];
    }
    return out;
  }
  const auto& q = gauss_legendre(512);
  const double sd = std::sqrt(step.step_var);
  const double zhi = step.step_mean + 10.0 * sd;
  const double norm = 1.0 / std::sqrt(kTwoPi * step.step_var);
  for (std::size_t i = 0; i < t.grid.size(); ++i) {
    const double x = t.grid[i];
    const double zlo = -x;
    const double half = 0.5 * (zhi - zlo), mid = 0.5 * (zhi + zlo);
    double e = 0.0;
    for (std::size_t k = 0; k < q.nodes.size(); ++k) {
      const double z = mid + half * q.nodes[k];
      const double d = (z - step.step_mean) / sd;
      e += q.weights[k] * renewal_eval(t, std::max(x + z, 0.0)) *
           std::exp(-0.5 * d * d);
    }
    e *= half * norm;
    out[i] = std::abs(e - t.values[i]) / t.values[i];
  }
  return out;
}

void save_renewal_csv(const RenewalTable& t, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "# slope=%.17g span=%.17g hash=%llu capped=%.17g\n",
                t.slope, t.span, static_cast<unsigned long long>(t.source_hash),
                t.capped_fraction);
  f << buf;
  f << "u,R,exact_flag\n";
  for (std::size_t i = 0; i < t.grid.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d\n", t.grid[i], t.values[i],
                  t.exact ? 1 : 0);
    f << buf;
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

RenewalTable load_renewal_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  RenewalTable t;
  std::string line;
  bool header_seen = false;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      unsigned long long hash = 0;
      std::sscanf(line.c_str(), "# slope=%lg span=%lg hash=%llu capped=%lg",
                  &t.slope, &t.span, &hash, &t.capped_fraction);
      t.source_hash = hash;
      continue;
    }
    if (!header_seen) {
      if (line.rfind("u,R,exact_flag", 0) != 0) {
        throw std::runtime_error("bad renewal CSV header in " + path);
      }
      header_seen = true;
      continue;
    }
    double u, r;
    int exact;
    if (std::sscanf(line.c_str(), "%lg,%lg,%d", &u, &r, &exact) != 3) {
      throw std::runtime_error("bad renewal CSV row: " + line);
    }
    t.grid.push_back(u);
    t.values.push_back(r);
    t.exact = exact != 0;
  }
  if (t.grid.size() < 2) throw std::runtime_error("renewal CSV too short: " + path);
  return t;
}

ConditionedWalk::ConditionedWalk(const StepLaw& step, const RenewalTable& table)
    : step_(step), table_(table) {
  if (!step_.lattice) {
    const double sd = std::sqrt(step_.step_var);
    z_hi_ = step_.step_mean + 12.0 * sd;
    far_field_ = table_.u_max() + 13.0 * sd + std::abs(step_.step_mean);
  }
}

double ConditionedWalk::lattice_up_probability(double x) const {
  const long k = std::lround(x / step_.a);
  return step_.p_up * renewal_eval(table_, (k + 1) * step_.a) /
         renewal_eval(table_, k * step_.a);
}

double ConditionedWalk::TargetCdf::eval(double z) const {
  if (z <= z0) return 0.0;
  const double r = (z - z0) / dz;
  const std::size_t i = static_cast<std::size_t>(r);
  if (i + 1 >= cdf.size()) return 1.0;
  const double frac = r - static_cast<double>(i);
  return cdf[i] * (1.0 - frac) + cdf[i + 1] * frac;
}

std::shared_ptr<const ConditionedWalk::TargetCdf>
ConditionedWalk::table_for_bucket(long bucket) const {
  {
    std::shared_lock lock(cache_mu_);
    auto it = cache_.find(bucket);
    if (it != cache_.end()) return it->second;
  }
  const double xb = static_cast<double>(bucket) * bucket_width_;
  auto t = std::make_shared<TargetCdf>();
  t->z0 = -xb;
  t->dz = (z_hi_ - t->z0) / (nodes_ - 1);
  t->cdf.resize(nodes_);
  const double sd = std::sqrt(step_.step_var);
  std::vector<double> f(nodes_);
  for (int i = 0; i < nodes_; ++i) {
    const double z = t->z0 + i * t->dz;
    const double d = (z - step_.step_mean) / sd;
    f[i] = renewal_eval(table_, std::max(xb + z, 0.0)) * std::exp(-0.5 * d * d);
  }
  t->cdf[0] = 0.0;
  for (int i = 1; i < nodes_; ++i) {
    t->cdf[i] = t->cdf[i - 1] + 0.5 * (f[i - 1] + f[i]) * t->dz;
  }
  const double total = t->cdf.back();
  if (!(total > 1e-12)) {
    throw SamplerError("conditioned step: target mass " + std::to_string(total) +
                       " at x-bucket " + std::to_string(xb));
  }
  for (double& c : t->cdf) c /= total;
  std::unique_lock lock(cache_mu_);
  if (cache_.size() >= cache_cap_) cache_.clear();
  auto [it, _] = cache_.emplace(bucket, std::move(t));
  return it->second;
}

double ConditionedWalk::sample_far_field(double x, Stream& rng) const {
  // R is exactly affine here: density prop. to (alpha + z) phi(z).
  const double alpha = x - table_.u_max() + table_.values.back() / table_.slope;
  const double sd = std::sqrt(step_.step_var);
  const double zcap = step_.step_mean + 12.0 * sd;
  const double denom = alpha + zcap;
  for (;;) {
    const double z = rng.normal(step_.step_mean, sd);
    if (std::abs(z - step_.step_mean) > 12.0 * sd) continue;
    if (rng.u01() * denom <= alpha + z) return x + z;
  }
}

double ConditionedWalk::step(double x, Stream& rng) const {
  if (!(x >= 0.0)) throw std::domain_error("conditioned step: x < 0");
  if (step_.lattice) {
    // Snap to the lattice: recomputing k a fresh every step keeps long paths
    // from drifting off the grid (and below zero) through rounding.
    const long k = std::lround(x / step_.a);
    const bool up = rng.bernoulli(lattice_up_probability(x));
    return static_cast<double>(up ? k + 1 : k - 1) * step_.a;
  }
  if (x >= far_field_) return sample_far_field(x, rng);
  const auto t = table_for_bucket(static_cast<long>(x / bucket_width_));
  const double u = rng.u01();
  const auto it = std::lower_bound(t->cdf.begin(), t->cdf.end(), u);
  std::size_t i = static_cast<std::size_t>(it - t->cdf.begin());
  if (i == 0) i = 1;
  if (i >= t->cdf.size()) i = t->cdf.size() - 1;
  const double c0 = t->cdf[i - 1], c1 = t->cdf[i];
  const double frac = c1 > c0 ? (u - c0) / (c1 - c0) : 0.0;
  const double z = t->z0 + (static_cast<double>(i - 1) + frac) * t->dz;
  return x + z;
}

std::shared_ptr<const ConditionedWalk::TargetCdf> ConditionedWalk::target_cdf(
    double x) const {
  if (step_.lattice) throw std::logic_error("target_cdf: lattice walk has no table");
  return table_for_bucket(static_cast<long>(x / bucket_width_));
}

WalkPath simulate_walk(const StepLaw& step, double start, std::size_t steps,
                       Stream& rng) {
  WalkPath p;
  p.positions.reserve(steps + 1);
  p.positions.push_back(start);
  double s = start;
  for (std::size_t i = 0; i < steps; ++i) {
    s += step.sample(rng);
    p.positions.push_back(s);
  }
  return p;
}

WalkPath simulate_conditioned_walk(const ConditionedWalk& walk, double start,
                                   std::size_t steps, Stream& rng) {
  if (!(start >= 0.0)) throw std::domain_error("conditioned walk: start < 0");
  WalkPath p;
  p.positions.reserve(steps + 1);
  p.positions.push_back(start);
  double s = start;
  for (std::size_t i = 0; i < steps; ++i) {
    s = walk.step(s, rng);
    p.positions.push_back(s);
  }
  return p;
}

}  // namespace brw

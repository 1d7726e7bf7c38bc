#include "brw/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <vector>

namespace brw {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
const double kLn2 = std::numbers::ln2;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void finish_exponents(ModelSpec& m, const CalibrationRequest& req) {
  if (m.regime == Regime::Boundary) {
    m.kappa = kNaN;
    m.gamma = kNaN;
    m.rho = kNaN;
    return;
  }
  m.gamma = req.gamma.value_or(0.5 * (1.0 + m.kappa));
  m.rho = req.rho.value_or(std::min(m.gamma, 2.0));
  if (!(m.gamma > 1.0 && m.gamma < m.kappa)) {
    throw CalibrationError("gamma = " + fmt(m.gamma) +
                           " outside (1, kappa) with kappa = " + fmt(m.kappa));
  }
  if (!(m.rho > 1.0 && m.rho <= std::min(m.gamma, 2.0))) {
    throw CalibrationError("rho = " + fmt(m.rho) +
                           " outside (1, min(gamma, 2)]");
  }
}

ModelSpec calibrate_gaussian(const CalibrationRequest& req) {
  ModelSpec m;
  m.family = Family::GaussianBinary;
  m.regime = req.regime;
  if (req.regime == Regime::Boundary) {
    // phi'(1) = 0 forces sigma2 = 2 ln 2, then phi(1) = 0 gives mu.
    const double s2 = 2.0 * kLn2;
    if (req.sigma2 && std::abs(*req.sigma2 - s2) > 1e-12) {
      throw CalibrationError(
          "gaussian boundary requires sigma2 = 2 ln 2 = " + fmt(s2) +
          ", got " + fmt(*req.sigma2) +
          " (residual phi'(1) = " + fmt(0.5 * (*req.sigma2) - kLn2) + ")");
    }
    m.sigma2 = s2;
    m.mu = 2.0 * kLn2;
  } else {
    m.sigma2 = req.sigma2.value_or(1.0);
    if (!(m.sigma2 > 0.0)) throw CalibrationError("sigma2 must be positive");
    m.mu = kLn2 + 0.5 * m.sigma2;
    // Subcritical needs phi'(1) = sigma2 - mu < 0, i.e. sigma2 < 2 ln 2.
    const double dphi1 = m.sigma2 - m.mu;
    if (!(dphi1 < 0.0)) {
      throw CalibrationError("gaussian subcritical infeasible: phi'(1) = " +
                             fmt(dphi1) + " >= 0 at sigma2 = " + fmt(m.sigma2));
    }
    m.kappa = 2.0 * kLn2 / m.sigma2;
  }
  finish_exponents(m, req);
  return m;
}

ModelSpec calibrate_lattice(const CalibrationRequest& req) {
  ModelSpec m;
  m.family = Family::LatticeBinary;
  m.regime = req.regime;
  if (req.regime == Regime::Boundary) {
    // phi(1) = phi'(1) = 0 solve jointly: cosh a = 2, p = e^a / 4.
    const double a = std::log(2.0 + std::sqrt(3.0));
    if (req.a && std::abs(*req.a - a) > 1e-12) {
      throw CalibrationError("lattice boundary requires a = arccosh(2) = " +
                             fmt(a) + ", got " + fmt(*req.a));
    }
    m.a = a;
    m.p = (2.0 + std::sqrt(3.0)) / 4.0;
  } else {
    m.a = req.a.value_or(1.0);
    const double t = std::exp(m.a);
    // phi(1) = 0 gives p; feasibility needs p in (0,1) and phi'(1) < 0.
    m.p = (t - 0.5) / (t - 1.0 / t);
    const double e_down = m.p / t;          // p e^{-a}
    const double e_up = (1.0 - m.p) * t;    // (1-p) e^{a}
    if (!(m.p > 0.0 && m.p < 1.0)) {
      throw CalibrationError("lattice subcritical infeasible at a = " +
                             fmt(m.a) + ": solved p = " + fmt(m.p) +
                             " outside (0,1); need a > ln 2");
    }
    if (!(e_up < e_down)) {
      throw CalibrationError(
          "lattice subcritical infeasible at a = " + fmt(m.a) +
          ": phi'(1) residual = " + fmt(m.a * (e_up - e_down) / (e_up + e_down)) +
          " >= 0; need a < arccosh(2)");
    }
    // Second root: e^{kappa a} = p / ((1-p) e^a).
    m.kappa = (std::log(m.p / (1.0 - m.p)) - m.a) / m.a;
  }
  finish_exponents(m, req);
  return m;
}

}  // namespace

std::string to_string(Family f) {
  return f == Family::GaussianBinary ? "gaussian" : "lattice";
}

std::string to_string(Regime r) {
  return r == Regime::Boundary ? "boundary" : "subcritical";
}

std::string ModelSpec::describe() const {
  std::ostringstream os;
  os << to_string(family) << "/" << to_string(regime);
  if (family == Family::GaussianBinary) {
    os << " mu=" << fmt(mu) << " sigma2=" << fmt(sigma2);
  } else {
    os << " a=" << fmt(a) << " p=" << fmt(p);
  }
  if (regime == Regime::Subcritical) {
    os << " kappa=" << fmt(kappa) << " gamma=" << fmt(gamma)
       << " rho=" << fmt(rho);
  }
  return os.str();
}

std::uint64_t ModelSpec::hash() const { return fnv1a64(describe()); }

ModelSpec calibrate(const CalibrationRequest& req) {
  ModelSpec m = req.family == Family::GaussianBinary ? calibrate_gaussian(req)
                                                     : calibrate_lattice(req);
  // Calibration must be exact to analytic precision.
  const double res = biggins_transform(m, 1.0);
  if (std::abs(res) > 1e-12) {
    throw CalibrationError("phi(1) residual " + fmt(res) + " after calibration");
  }
  return m;
}

double biggins_transform(const ModelSpec& m, double theta) {
  if (!std::isfinite(theta)) {
    throw std::domain_error("biggins_transform: theta must be finite");
  }
  if (m.family == Family::GaussianBinary) {
    return kLn2 + 0.5 * theta * theta * m.sigma2 - theta * m.mu;
  }
  return kLn2 + std::log(m.p * std::exp(-theta * m.a) +
                         (1.0 - m.p) * std::exp(theta * m.a));
}

double biggins_derivative(const ModelSpec& m, double theta) {
  if (!std::isfinite(theta)) {
    throw std::domain_error("biggins_derivative: theta must be finite");
  }
  if (m.family == Family::GaussianBinary) {
    return theta * m.sigma2 - m.mu;
  }
  const double down = m.p * std::exp(-theta * m.a);
  const double up = (1.0 - m.p) * std::exp(theta * m.a);
  return m.a * (up - down) / (up + down);
}

double sample_child_displacement(const ModelSpec& m, Stream& rng) {
  if (m.family == Family::GaussianBinary) {
    return rng.normal(m.mu, std::sqrt(m.sigma2));
  }
  return rng.bernoulli(m.p) ? m.a : -m.a;
}

OffspringSample sample_offspring(const ModelSpec& m, Stream& rng) {
  OffspringSample s;
  s.displacements[0] = sample_child_displacement(m, rng);
  s.displacements[1] = sample_child_displacement(m, rng);
  return s;
}

MomentDiagnostics moment_diagnostics(const ModelSpec& m, double delta,
                                     std::size_t samples, Stream& rng) {
  if (!(delta >= 0.0)) throw std::domain_error("moment_diagnostics: delta < 0");
  MomentDiagnostics out;
  out.delta = delta;
  const bool use_gamma = std::isfinite(m.gamma);
  out.w1gamma_available = use_gamma;

  std::vector<double> ex, xex, ewg;
  ex.reserve(samples);
  xex.reserve(samples);
  if (use_gamma) ewg.reserve(samples);
  double max_term = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const OffspringSample o = sample_offspring(m, rng);
    double x = 0.0, w_gamma = 0.0;
    for (double v : o.displacements) {
      x += (1.0 + std::max(v, 0.0)) * std::exp(-v);
      if (use_gamma) w_gamma += std::exp(-m.gamma * v);
    }
    const double e = std::exp(delta * x);
    ex.push_back(e);
    xex.push_back(x * e);
    if (use_gamma) ewg.push_back(std::exp(delta * w_gamma));
    max_term = std::max(max_term, e);
  }
  out.exp_x = mean_se(ex);
  out.x_exp_x = mean_se(xex);
  if (use_gamma) out.exp_w1gamma = mean_se(ewg);
  out.exp_x_max_term_share =
      max_term / (out.exp_x.mean * static_cast<double>(samples));

  // Cauchy-in-n check: compare the running mean at 90% and 100% of the run.
  auto drifts = [](const std::vector<double>& v) {
    if (v.size() < 100) return false;
    const std::size_t cut = v.size() - v.size() / 10;
    double s = 0.0;
    for (std::size_t i = 0; i < cut; ++i) s += v[i];
    const double m1 = s / static_cast<double>(cut);
    for (std::size_t i = cut; i < v.size(); ++i) s += v[i];
    const double m2 = s / static_cast<double>(v.size());
    return std::abs(m2 - m1) > 0.01 * std::abs(m2);
  };
  out.exp_x_inconclusive = drifts(ex) || out.exp_x_max_term_share > 0.5;
  out.x_exp_x_inconclusive = drifts(xex);
  return out;
}

}  // namespace brw

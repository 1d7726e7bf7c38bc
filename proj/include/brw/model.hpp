#ifndef BRW_MODEL_HPP
#define BRW_MODEL_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "brw/rng.hpp"
#include "brw/stats.hpp"

namespace brw {

enum class Family { GaussianBinary, LatticeBinary };
enum class Regime { Subcritical, Boundary };

std::string to_string(Family f);
std::string to_string(Regime r);

// A calibrated binary branching random walk: two children per particle,
// displacements iid within a family. Calibration pins the log-Laplace
// transform phi so that phi(1) = 0, with phi'(1) < 0 (Subcritical) or
// phi'(1) = 0 (Boundary).
struct ModelSpec {
  Family family = Family::GaussianBinary;
  Regime regime = Regime::Boundary;
  int offspring_count = 2;

  // GaussianBinary: child displacement ~ N(mu, sigma2).
  double mu = 0.0;
  double sigma2 = 0.0;
  // LatticeBinary: +a with probability p, -a with probability 1-p.
  double a = 0.0;
  double p = 0.0;

  // Second root of phi (Subcritical only; NaN in the Boundary regime).
  double kappa = 0.0;
  // Exponents for the subcritical tail experiments; NaN when Boundary.
  double gamma = 0.0;
  double rho = 0.0;

  bool boundary() const { return regime == Regime::Boundary; }
  double lattice_span() const { return a; }
  std::string describe() const;
  std::uint64_t hash() const;
};

struct OffspringSample {
  std::array<double, 2> displacements{};
};

class CalibrationError : public std::runtime_error {
 public:
  explicit CalibrationError(const std::string& what) : std::runtime_error(what) {}
};

struct CalibrationRequest {
  Family family = Family::GaussianBinary;
  Regime regime = Regime::Boundary;
  // Free parameters. Subcritical Gaussian: sigma2 (default 1). Subcritical
  // lattice: a (default 1). Boundary values are solved, not chosen; passing
  // one that conflicts with the solved value is a calibration error.
  std::optional<double> sigma2;
  std::optional<double> a;
  std::optional<double> gamma;  // default (1 + kappa) / 2
  std::optional<double> rho;    // default min(gamma, 2)
};

ModelSpec calibrate(const CalibrationRequest& req);

// Log-Laplace transform of the offspring point process,
// phi(theta) = ln E[sum_children e^{-theta * displacement}].
double biggins_transform(const ModelSpec& m, double theta);
double biggins_derivative(const ModelSpec& m, double theta);

// One child displacement, then one iid offspring draw (two children).
double sample_child_displacement(const ModelSpec& m, Stream& rng);
OffspringSample sample_offspring(const ModelSpec& m, Stream& rng);

struct MomentDiagnostics {
  double delta = 0.0;
  // X = sum_children [1 + (V)_+] e^{-V}.
  MeanSe exp_x;       // E[e^{delta X}]
  MeanSe x_exp_x;     // E[X e^{delta X}]
  MeanSe exp_w1gamma; // E[e^{delta W_1(gamma)}], subcritical models only
  bool w1gamma_available = false;
  // Heuristic stability flags: a running estimate that keeps drifting, or a
  // mean dominated by a single draw, is reported as inconclusive.
  bool exp_x_inconclusive = false;
  bool x_exp_x_inconclusive = false;
  double exp_x_max_term_share = 0.0;
};

MomentDiagnostics moment_diagnostics(const ModelSpec& m, double delta,
                                     std::size_t samples, Stream& rng);

}  // namespace brw

#endif  // BRW_MODEL_HPP

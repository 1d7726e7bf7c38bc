#ifndef BRW_CONFIG_HPP
#define BRW_CONFIG_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "brw/analysis.hpp"
#include "brw/model.hpp"
#include "brw/perpetuity.hpp"

namespace brw {

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Block-structured key=value experiment description. '#' starts a comment,
// [section] opens a block, and any key outside the schema is an error.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  int threads = 0;

  struct Model {
    Family family = Family::LatticeBinary;
    Regime regime = Regime::Boundary;
    std::optional<double> sigma2;
    std::optional<double> a;
    std::optional<double> gamma;
    std::optional<double> rho;
  } model;

  struct Walk {
    double u_max = 15.0;
    double grid_step = 0.05;
    std::uint64_t replicas = 1000000;
    std::uint64_t step_cap = 10000000;
  } walk;

  struct Engine {
    std::size_t n = 10;
    std::vector<double> x = {1.0};  // "inf" disables killing
    double v_cap = std::numeric_limits<double>::infinity();
    std::uint64_t replicas = 100000;
    bool write_csv = true;
  } engine;

  struct Spine {
    char target = 'd';  // 'd' or 'w'
    std::uint64_t replicas = 100000;
    std::size_t y_points = 12;
    std::vector<double> y_grid;  // overrides the default policy when set
  } spine;

  struct Perpetuity {
    QKind q_kind = QKind::ConstantOne;
    double c_r = 2.0;
    std::vector<double> start_x = {0.0, 1.0, 2.0, 5.0, 10.0};
    std::size_t horizon = 100000;
    std::uint64_t replicas = 20000;
    double epsilon = 0.05;
    std::size_t j_max = 5;
  } perpetuity;

  struct Fit {
    TailKind kind = TailKind::Exponential;
    double q_lo = 0.90;
    double q_hi = 0.999;
    std::string input;
    std::string column = "W_trunc";
  } fit;

  struct Minimum {
    double z = 1.0;
    std::size_t n = 20;
    std::uint64_t replicas = 100000;
  } minimum;

  ModelSpec calibrated() const;
  std::string canonical() const;      // normalized text form, hashed
  std::uint64_t hash() const;
  std::string resolved_output_dir() const;  // honors BRW_OUTPUT_ROOT
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

}  // namespace brw

#endif  // BRW_CONFIG_HPP

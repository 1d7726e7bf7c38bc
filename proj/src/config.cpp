#include "brw/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace brw {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& section, const std::string& key,
                    const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("[" + section + "] " + key + ": bad number '" + v + "'");
  }
  return d;
}

std::uint64_t parse_u64(const std::string& section, const std::string& key,
                        const std::string& v) {
  char* end = nullptr;
  const unsigned long long u = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0') {
    throw ConfigError("[" + section + "] " + key + ": bad integer '" + v + "'");
  }
  return u;
}

std::vector<double> parse_list(const std::string& section, const std::string& key,
                               const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double(section, key, item));
  }
  if (out.empty()) throw ConfigError("[" + section + "] " + key + ": empty list");
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      static const std::set<std::string> known = {
          "model", "walk", "engine", "spine", "perpetuity", "fit", "minimum"};
      if (!known.count(section)) {
        throw ConfigError("unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": empty key or value");
    }

    auto unknown = [&]() -> ConfigError {
      return ConfigError("unknown key '" + key + "' in section [" + section + "]");
    };
    if (section.empty()) {
      if (key == "seed") cfg.seed = parse_u64(section, key, val);
      else if (key == "output_dir") cfg.output_dir = val;
      else if (key == "threads") cfg.threads = static_cast<int>(parse_u64(section, key, val));
      else throw unknown();
    } else if (section == "model") {
      if (key == "family") {
        if (val == "gaussian") cfg.model.family = Family::GaussianBinary;
        else if (val == "lattice") cfg.model.family = Family::LatticeBinary;
        else throw ConfigError("model.family must be gaussian or lattice");
      } else if (key == "regime") {
        if (val == "boundary") cfg.model.regime = Regime::Boundary;
        else if (val == "subcritical") cfg.model.regime = Regime::Subcritical;
        else throw ConfigError("model.regime must be boundary or subcritical");
      } else if (key == "sigma2") cfg.model.sigma2 = parse_double(section, key, val);
      else if (key == "a") cfg.model.a = parse_double(section, key, val);
      else if (key == "gamma") cfg.model.gamma = parse_double(section, key, val);
      else if (key == "rho") cfg.model.rho = parse_double(section, key, val);
      else throw unknown();
    } else if (section == "walk") {
      if (key == "u_max") cfg.walk.u_max = parse_double(section, key, val);
      else if (key == "grid_step") cfg.walk.grid_step = parse_double(section, key, val);
      else if (key == "replicas") cfg.walk.replicas = parse_u64(section, key, val);
      else if (key == "step_cap") cfg.walk.step_cap = parse_u64(section, key, val);
      else throw unknown();
    } else if (section == "engine") {
      if (key == "n") cfg.engine.n = parse_u64(section, key, val);
      else if (key == "x") cfg.engine.x = parse_list(section, key, val);
      else if (key == "v_cap") cfg.engine.v_cap = parse_double(section, key, val);
      else if (key == "replicas") cfg.engine.replicas = parse_u64(section, key, val);
      else if (key == "write_csv") cfg.engine.write_csv = val == "true" || val == "1";
      else throw unknown();
    } else if (section == "spine") {
      if (key == "target") {
        if (val != "d" && val != "w") throw ConfigError("spine.target must be d or w");
        cfg.spine.target = val[0];
      } else if (key == "replicas") cfg.spine.replicas = parse_u64(section, key, val);
      else if (key == "y_points") cfg.spine.y_points = parse_u64(section, key, val);
      else if (key == "y_grid") cfg.spine.y_grid = parse_list(section, key, val);
      else throw unknown();
    } else if (section == "perpetuity") {
      if (key == "q") {
        if (val == "const") cfg.perpetuity.q_kind = QKind::ConstantOne;
        else if (val == "sibling") cfg.perpetuity.q_kind = QKind::SpineSiblingDelta;
        else throw ConfigError("perpetuity.q must be const or sibling");
      } else if (key == "c_r") cfg.perpetuity.c_r = parse_double(section, key, val);
      else if (key == "start_x") cfg.perpetuity.start_x = parse_list(section, key, val);
      else if (key == "horizon") cfg.perpetuity.horizon = parse_u64(section, key, val);
      else if (key == "replicas") cfg.perpetuity.replicas = parse_u64(section, key, val);
      else if (key == "epsilon") cfg.perpetuity.epsilon = parse_double(section, key, val);
      else if (key == "j_max") cfg.perpetuity.j_max = parse_u64(section, key, val);
      else throw unknown();
    } else if (section == "fit") {
      if (key == "kind") {
        if (val == "exponential") cfg.fit.kind = TailKind::Exponential;
        else if (val == "power") cfg.fit.kind = TailKind::Power;
        else throw ConfigError("fit.kind must be exponential or power");
      } else if (key == "q_lo") cfg.fit.q_lo = parse_double(section, key, val);
      else if (key == "q_hi") cfg.fit.q_hi = parse_double(section, key, val);
      else if (key == "input") cfg.fit.input = val;
      else if (key == "column") cfg.fit.column = val;
      else throw unknown();
    } else if (section == "minimum") {
      if (key == "z") cfg.minimum.z = parse_double(section, key, val);
      else if (key == "n") cfg.minimum.n = parse_u64(section, key, val);
      else if (key == "replicas") cfg.minimum.replicas = parse_u64(section, key, val);
      else throw unknown();
    }
  }

  // Cross-field validation mirrors the module preconditions so a bad config
  // fails before any compute starts.
  for (double x : cfg.engine.x) {
    if (std::isfinite(x)) {
      if (!(x >= 0.0)) throw ConfigError("engine.x must be >= 0 (or inf)");
      if (!(cfg.engine.v_cap > x)) throw ConfigError("engine.v_cap must exceed every x");
    } else if (!(cfg.engine.v_cap > 0.0)) {
      throw ConfigError("engine.v_cap must be positive");
    }
  }
  if (!(cfg.fit.q_lo > 0.5 && cfg.fit.q_hi < 1.0 && cfg.fit.q_lo < cfg.fit.q_hi)) {
    throw ConfigError("fit quantile range must sit inside (0.5, 1)");
  }
  for (double s : cfg.perpetuity.start_x) {
    if (!(s >= 0.0)) throw ConfigError("perpetuity.start_x must be >= 0");
  }
  if (!(cfg.perpetuity.epsilon > 0.0)) throw ConfigError("perpetuity.epsilon must be > 0");
  if (cfg.perpetuity.horizon < 1) throw ConfigError("perpetuity.horizon must be >= 1");
  if (!(cfg.walk.u_max > 0.0 && cfg.walk.grid_step > 0.0)) {
    throw ConfigError("walk.u_max and walk.grid_step must be positive");
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

ModelSpec ExperimentConfig::calibrated() const {
  CalibrationRequest req;
  req.family = model.family;
  req.regime = model.regime;
  req.sigma2 = model.sigma2;
  req.a = model.a;
  req.gamma = model.gamma;
  req.rho = model.rho;
  return calibrate(req);
}

std::string ExperimentConfig::canonical() const {
  char buf[4096];
  std::string xs, starts, ys;
  for (double v : engine.x) xs += std::to_string(v) + ",";
  for (double v : perpetuity.start_x) starts += std::to_string(v) + ",";
  for (double v : spine.y_grid) ys += std::to_string(v) + ",";
  std::snprintf(
      buf, sizeof(buf),
      "seed=%llu|model=%s/%s/%.17g/%.17g/%.17g/%.17g|walk=%.17g/%.17g/%llu/%llu|"
      "engine=%zu/%s/%.17g/%llu|spine=%c/%llu/%zu/%s|perp=%d/%.17g/%s/%zu/%llu/%.17g/%zu|"
      "fit=%d/%.17g/%.17g/%s/%s|min=%.17g/%zu/%llu",
      static_cast<unsigned long long>(seed), to_string(model.family).c_str(),
      to_string(model.regime).c_str(), model.sigma2.value_or(-1.0),
      model.a.value_or(-1.0), model.gamma.value_or(-1.0), model.rho.value_or(-1.0),
      walk.u_max, walk.grid_step, static_cast<unsigned long long>(walk.replicas),
      static_cast<unsigned long long>(walk.step_cap), engine.n, xs.c_str(),
      engine.v_cap, static_cast<unsigned long long>(engine.replicas), spine.target,
      static_cast<unsigned long long>(spine.replicas), spine.y_points, ys.c_str(),
      static_cast<int>(perpetuity.q_kind), perpetuity.c_r, starts.c_str(),
      perpetuity.horizon, static_cast<unsigned long long>(perpetuity.replicas),
      perpetuity.epsilon, perpetuity.j_max, static_cast<int>(fit.kind), fit.q_lo,
      fit.q_hi, fit.input.c_str(), fit.column.c_str(), minimum.z, minimum.n,
      static_cast<unsigned long long>(minimum.replicas));
  return buf;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(canonical()); }

std::string ExperimentConfig::resolved_output_dir() const {
  const char* root = std::getenv("BRW_OUTPUT_ROOT");
  if (root == nullptr || *root == '\0') return output_dir;
  return std::string(root) + "/" + output_dir;
}

}  // namespace brw

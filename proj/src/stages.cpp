#include "brw/stages.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "brw/analysis.hpp"
#include "brw/perpetuity.hpp"
#include "brw/spine.hpp"

namespace brw {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::string ensure_output_dir(const ExperimentConfig& cfg) {
  const std::string dir = cfg.resolved_output_dir();
  fs::create_directories(dir);
  return dir;
}

std::string cache_dir() {
  const char* root = std::getenv("BRW_OUTPUT_ROOT");
  const std::string base = root && *root ? std::string(root) : std::string(".");
  const std::string dir = base + "/cache";
  fs::create_directories(dir);
  return dir;
}

RunManifest base_manifest(const ExperimentConfig& cfg, const ModelSpec& model,
                          const std::string& stage) {
  RunManifest m;
  m.stage = stage;
  m.config_hash = cfg.hash();
  m.model_hash = model.hash();
  m.seed = cfg.seed;
  return m;
}

json summary_header(const ExperimentConfig& cfg, const ModelSpec& model) {
  json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["tool_version"] = kToolVersion;
  j["model"] = model.describe();
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

std::string RunManifest::to_json() const {
  json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["tool_version"] = kToolVersion;
  j["stage"] = stage;
  j["determinism_key"] = {
      {"config_hash", config_hash},
      {"model_hash", model_hash},
      {"renewal_hash", renewal_hash},
      {"seed", seed},
  };
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["pruning_certificates"] = pruning_certificates;
  j["outputs"] = outputs;
  return j.dump(2);
}

void RunManifest::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  f << to_json() << "\n";
}

RenewalTable obtain_renewal_table(const ExperimentConfig& cfg,
                                  const ModelSpec& model) {
  if (model.family == Family::LatticeBinary) {
    // Exact closed form; extend far enough for pruning-ledger lookups.
    return lattice_renewal_table(model, std::max(cfg.walk.u_max, 40.0));
  }
  RenewalEstimateOptions opt;
  opt.u_max = cfg.walk.u_max;
  opt.grid_step = cfg.walk.grid_step;
  opt.replicas = cfg.walk.replicas;
  opt.step_cap = cfg.walk.step_cap;
  opt.seed = cfg.seed;
  opt.threads = cfg.threads;

  const StepLaw s = step_law(model);
  const std::uint64_t key = fnv1a64_mix(
      fnv1a64_mix(model.hash(), fnv1a64(g(opt.u_max) + "/" + g(opt.grid_step))),
      opt.replicas ^ (opt.seed * 0x9E3779B97F4A7C15ULL));
  const std::string path =
      cache_dir() + "/renewal_" + std::to_string(key) + ".csv";
  if (fs::exists(path)) {
    RenewalTable t = load_renewal_csv(path);
    if (t.source_hash != 0) return t;
  }
  RenewalTable t = estimate_renewal_mc(s, opt);
  t.source_hash = key;
  save_renewal_csv(t, path);
  return t;
}

void write_snapshots_csv(const std::string& path, const EngineBatch& batch,
                         const KillConfig& cfg) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "replica,n,x,W,D,W_trunc,D_trunc,I_n,pruned_W,pruned_D,alive,pruned,killed\n";
  char buf[512];
  for (std::size_t i = 0; i < batch.snapshots.size(); ++i) {
    const MartingaleSnapshot& s = batch.snapshots[i];
    std::snprintf(buf, sizeof(buf),
                  "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%llu,%llu,%llu\n",
                  i, s.n, cfg.x, s.W, s.D, s.W_trunc, s.D_trunc, s.I_n,
                  s.pruned_W_mass, s.pruned_D_mass,
                  static_cast<unsigned long long>(s.alive_count),
                  static_cast<unsigned long long>(s.pruned_count),
                  static_cast<unsigned long long>(s.killed_count));
    f << buf;
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::vector<double> read_csv_column(const std::string& path,
                                    const std::string& column) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty CSV: " + path);
  while (!line.empty() && line[0] == '#') {
    if (!std::getline(f, line)) throw std::runtime_error("empty CSV: " + path);
  }
  int col = -1, idx = 0;
  {
    std::stringstream ss(line);
    std::string name;
    while (std::getline(ss, name, ',')) {
      if (name == column) col = idx;
      ++idx;
    }
  }
  if (col < 0) throw std::runtime_error("column '" + column + "' not in " + path);
  std::vector<double> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (int i = 0; i <= col; ++i) {
      if (!std::getline(ss, cell, ',')) {
        throw std::runtime_error("short row in " + path);
      }
    }
    const double v = std::strtod(cell.c_str(), nullptr);
    if (std::isfinite(v)) out.push_back(v);
  }
  return out;
}

StageResult stage_phi(const ExperimentConfig& cfg, std::ostream& out) {
  const ModelSpec model = cfg.calibrated();
  out << "model: " << model.describe() << "\n";
  out << "phi(1) residual: " << g(biggins_transform(model, 1.0)) << "\n";
  out << "phi'(1): " << g(biggins_derivative(model, 1.0)) << "\n";
  if (model.regime == Regime::Subcritical) {
    out << "kappa: " << g(model.kappa)
        << "  phi(kappa) residual: " << g(biggins_transform(model, model.kappa))
        << "\n";
  }
  out << "theta,phi\n";
  for (double theta = 0.0; theta <= 2.0 + 1e-9; theta += 0.25) {
    out << g(theta) << "," << g(biggins_transform(model, theta)) << "\n";
  }
  return {};
}

StageResult stage_renewal(const ExperimentConfig& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec model = cfg.calibrated();
  const RenewalTable table = obtain_renewal_table(cfg, model);
  const std::string dir = ensure_output_dir(cfg);
  const std::string csv = dir + "/renewal.csv";
  save_renewal_csv(table, csv);

  RunManifest m = base_manifest(cfg, model, "renewal");
  m.renewal_hash = table.source_hash;
  m.wall_clock_seconds["renewal"] = seconds_since(t0);
  m.outputs = {csv};
  m.save(dir + "/manifest.json");
  out << "renewal table: " << table.grid.size() << " points, R(0)=" << table.values[0]
      << ", slope=" << g(table.slope) << (table.exact ? " (exact)" : "")
      << ", capped=" << g(table.capped_fraction) << "\n";
  return {0, "", {csv, dir + "/manifest.json"}};
}

StageResult stage_simulate(const ExperimentConfig& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec model = cfg.calibrated();
  const RenewalTable table = obtain_renewal_table(cfg, model);
  const std::string dir = ensure_output_dir(cfg);

  RunManifest m = base_manifest(cfg, model, "simulate");
  m.renewal_hash = table.source_hash;
  json summary = summary_header(cfg, model);
  summary["runs"] = json::array();
  StageResult res;

  for (std::size_t i = 0; i < cfg.engine.x.size(); ++i) {
    KillConfig kc;
    kc.x = cfg.engine.x[i];
    kc.n = cfg.engine.n;
    kc.v_cap = cfg.engine.v_cap;
    EngineBatchOptions opt;
    opt.replicas = cfg.engine.replicas;
    opt.seed = cfg.seed;
    opt.threads = cfg.threads;
    const EngineBatch batch = run_replicas(model, table, kc, opt);

    json run;
    run["x"] = kc.x;
    run["n"] = kc.n;
    run["v_cap"] = kc.v_cap;
    run["replicas"] = cfg.engine.replicas;
    run["discarded"] = batch.discarded;
    auto add = [&](const char* name, double MartingaleSnapshot::*field) {
      const auto xs = batch.collect(field);
      const MeanSe ms = mean_se(xs);
      if (std::isfinite(ms.mean)) {
        run[name] = {{"mean", ms.mean}, {"se", ms.se}};
      }
    };
    if (kc.killing_enabled()) {
      add("W_trunc", &MartingaleSnapshot::W_trunc);
      add("D_trunc", &MartingaleSnapshot::D_trunc);
      const double ref = renewal_eval(table, kc.x) * std::exp(-kc.x);
      run["D_trunc_target"] = ref;
    } else {
      add("W", &MartingaleSnapshot::W);
      add("D", &MartingaleSnapshot::D);
    }
    add("pruned_W", &MartingaleSnapshot::pruned_W_mass);
    add("pruned_D", &MartingaleSnapshot::pruned_D_mass);
    const MeanSe pw = mean_se(batch.collect(&MartingaleSnapshot::pruned_W_mass));
    m.pruning_certificates["x=" + g(kc.x) + ":pruned_W_mean"] = pw.mean;

    if (cfg.engine.write_csv) {
      const std::string csv = dir + "/snapshots_x" + std::to_string(i) + ".csv";
      write_snapshots_csv(csv, batch, kc);
      m.outputs.push_back(csv);
      res.files.push_back(csv);
    }
    summary["runs"].push_back(run);
  }
  m.wall_clock_seconds["simulate"] = seconds_since(t0);
  std::ofstream sf(dir + "/summary.json");
  sf << summary.dump(2) << "\n";
  m.outputs.push_back(dir + "/summary.json");
  m.save(dir + "/manifest.json");
  out << "simulate: wrote " << m.outputs.size() << " files under " << dir << "\n";
  res.files.push_back(dir + "/summary.json");
  return res;
}

StageResult stage_minimum(const ExperimentConfig& cfg, std::ostream& out) {
  const ModelSpec model = cfg.calibrated();
  const double x = cfg.engine.x.empty() ? 6.0 : cfg.engine.x[0];
  const MinimumTailResult r =
      minimum_tail_experiment(model, x, cfg.minimum.z, cfg.minimum.n,
                              cfg.minimum.replicas, cfg.seed, cfg.threads);
  const std::string dir = ensure_output_dir(cfg);
  json j = summary_header(cfg, model);
  j["x"] = r.x;
  j["z"] = r.z;
  j["n"] = r.n;
  j["replicas"] = r.replicas;
  j["hits"] = r.hits;
  j["p_hat"] = r.p_hat;
  j["se"] = r.se;
  j["bound"] = r.bound;
  j["within_bound"] = r.within_bound;
  std::ofstream f(dir + "/minimum.json");
  f << j.dump(2) << "\n";
  out << "P(x + I_n <= z) = " << g(r.p_hat) << " +- " << g(r.se)
      << ", bound e^{-kappa(x-z)} = " << g(r.bound)
      << (r.within_bound ? "  [within bound]" : "  [EXCEEDS bound]") << "\n";
  return {r.within_bound ? 0 : 1, "", {dir + "/minimum.json"}};
}

StageResult stage_spine_tail(const ExperimentConfig& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec model = cfg.calibrated();
  const RenewalTable table = obtain_renewal_table(cfg, model);
  const std::string dir = ensure_output_dir(cfg);

  KillConfig kc;
  kc.x = cfg.engine.x[0];
  kc.n = cfg.engine.n;
  kc.v_cap = cfg.engine.v_cap;
  if (!kc.killing_enabled()) {
    throw ConfigError("spine-tail: engine.x must be finite");
  }
  const bool derivative = cfg.spine.target == 'd';
  if (!derivative && model.regime != Regime::Subcritical) {
    throw ConfigError("spine-tail: target w needs a subcritical model");
  }

  EngineBatchOptions eopt;
  eopt.replicas = cfg.engine.replicas;
  eopt.seed = cfg.seed;
  eopt.threads = cfg.threads;
  const EngineBatch naive = run_replicas(model, table, kc, eopt);
  std::vector<double> samples = naive.collect(
      derivative ? &MartingaleSnapshot::D_trunc : &MartingaleSnapshot::W_trunc);
  std::sort(samples.begin(), samples.end());

  std::vector<double> y_grid = cfg.spine.y_grid;
  if (y_grid.empty()) y_grid = default_y_grid(samples, cfg.spine.y_points);

  SpineBatchOptions sopt;
  sopt.replicas = cfg.spine.replicas;
  sopt.seed = cfg.seed + 1;
  sopt.threads = cfg.threads;
  TailEstimate est;
  if (derivative) {
    const ConditionedWalk walk(step_law(model), table);
    est = is_tail_estimate(model, table, walk, kc, y_grid, sopt);
  } else {
    est = additive_spine_estimate(model, table, kc, y_grid, sopt);
  }

  const std::string csv = dir + "/spine_tail.csv";
  std::ofstream f(csv);
  f << "y,estimate,SE,ESS,naive_estimate,naive_SE\n";
  const double n_naive = static_cast<double>(samples.size());
  for (const TailPoint& p : est.points) {
    const double s = survival_sorted(samples, p.y);
    const double nse = std::sqrt(std::max(s * (1.0 - s), 0.0) / n_naive);
    f << g(p.y) << "," << g(p.estimate) << "," << g(p.se) << "," << g(p.ess)
      << "," << g(s) << "," << g(nse) << "\n";
  }
  f.close();

  RunManifest m = base_manifest(cfg, model, "spine-tail");
  m.renewal_hash = table.source_hash;
  m.wall_clock_seconds["spine-tail"] = seconds_since(t0);
  m.outputs = {csv};
  m.save(dir + "/manifest.json");
  out << "spine-tail: mean weight " << g(est.mean_weight.mean) << " +- "
      << g(est.mean_weight.se) << ", " << est.points.size() << " grid points\n";
  return {0, "", {csv}};
}

StageResult stage_perpetuity(const ExperimentConfig& cfg, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelSpec model = cfg.calibrated();
  const RenewalTable table = obtain_renewal_table(cfg, model);
  const std::string dir = ensure_output_dir(cfg);

  PerpetuityConfig pc;
  pc.q_kind = cfg.perpetuity.q_kind;
  pc.c_r = cfg.perpetuity.c_r;
  pc.horizon = cfg.perpetuity.horizon;
  pc.epsilon = cfg.perpetuity.epsilon;
  pc.start_x = cfg.perpetuity.start_x[0];

  std::unique_ptr<ConditionedWalk> walk;
  if (model.boundary()) {
    walk = std::make_unique<ConditionedWalk>(step_law(model), table);
  }

  const PerpetuityBatch batch =
      run_perpetuity_batch(model, table, walk.get(), pc, cfg.perpetuity.replicas,
                           cfg.seed, cfg.threads);
  const std::string finals_csv = dir + "/perpetuity_finals.csv";
  {
    std::ofstream f(finals_csv);
    f << "final\n";
    for (double v : batch.finals) f << g(v) << "\n";
  }

  const MgfProbeResult probe = probe_exponential_moment(
      model, table, walk.get(), pc, cfg.perpetuity.start_x,
      cfg.perpetuity.replicas, cfg.seed + 1, cfg.threads);
  json pj = summary_header(cfg, model);
  pj["epsilon_star"] = probe.epsilon_star;
  pj["found"] = probe.found;
  pj["rows"] = json::array();
  for (const auto& r : probe.at_star) {
    pj["rows"].push_back({{"start_x", r.start_x},
                          {"mgf", r.mgf},
                          {"se", r.se},
                          {"max_term_share", r.max_term_share},
                          {"unstable", r.unstable}});
  }
  std::ofstream(dir + "/mgf_probe.json") << pj.dump(2) << "\n";

  std::string levels_csv;
  if (model.boundary()) {
    const ExcursionStats stats = excursion_anatomy(
        model, table, *walk, pc.start_x, cfg.perpetuity.j_max, pc.horizon,
        std::min<std::uint64_t>(cfg.perpetuity.replicas, 20000), pc,
        cfg.seed + 2, cfg.threads);
    levels_csv = dir + "/excursion_levels.csv";
    std::ofstream f(levels_csv);
    f << "j,mean_zeta,geom_slope_L,geom_r2,q1_mean,q1_se,q1_lag1_autocorr\n";
    for (std::size_t j = 0; j < stats.levels.size(); ++j) {
      const auto& lv = stats.levels[j];
      f << j << "," << g(lv.mean_zeta) << "," << g(lv.geom_slope) << ","
        << g(lv.geom_r2) << "," << g(lv.q1.mean) << "," << g(lv.q1.se) << ","
        << g(lv.q1_lag1_autocorr) << "\n";
    }
  }

  RunManifest m = base_manifest(cfg, model, "perpetuity");
  m.renewal_hash = table.source_hash;
  m.wall_clock_seconds["perpetuity"] = seconds_since(t0);
  m.outputs = {finals_csv, dir + "/mgf_probe.json"};
  if (!levels_csv.empty()) m.outputs.push_back(levels_csv);
  m.save(dir + "/manifest.json");
  out << "perpetuity: epsilon* = " << g(probe.epsilon_star) << ", nonconverged "
      << batch.nonconverged << "/" << cfg.perpetuity.replicas << "\n";
  return {0, "", m.outputs};
}

StageResult stage_fit(const ExperimentConfig& cfg, std::ostream& out) {
  const std::vector<double> samples = read_csv_column(cfg.fit.input, cfg.fit.column);
  TailFitOptions opt;
  opt.q_lo = cfg.fit.q_lo;
  opt.q_hi = cfg.fit.q_hi;
  opt.seed = cfg.seed;
  const TailFit fit = fit_tail(samples, cfg.fit.kind, opt);

  const std::string dir = ensure_output_dir(cfg);
  json j;
  j["schema_version"] = kSummarySchemaVersion;
  j["kind"] = fit.kind == TailKind::Exponential ? "exponential" : "power";
  j["rate_or_index"] = fit.rate_or_index;
  j["prefactor"] = fit.prefactor;
  j["fit_range"] = {fit.y_lo, fit.y_hi};
  j["r_squared"] = fit.r_squared;
  j["bootstrap_ci"] = {fit.ci_lo, fit.ci_hi};
  j["loglik_exp_minus_power"] = fit.loglik_exp_minus_power;
  j["n_samples"] = fit.n_samples;
  j["n_fit"] = fit.n_fit;
  const std::string path = dir + "/tailfit.json";
  std::ofstream f(path);
  f << j.dump(2) << "\n";
  out << "fit: " << j["kind"].get<std::string>() << " rate_or_index="
      << g(fit.rate_or_index) << " r2=" << g(fit.r_squared) << "\n";
  return {0, "", {path}};
}

}  // namespace brw

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "brw/acceptance.hpp"
#include "brw/config.hpp"
#include "brw/stages.hpp"

namespace {

// Flags override whatever the optional config file set.
struct CommonArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> replicas;  // engine replicas

  brw::ExperimentConfig load() const {
    brw::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = brw::load_config_file(config_path);
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    if (output_dir) cfg.output_dir = *output_dir;
    if (replicas) cfg.engine.replicas = *replicas;
    return cfg;
  }

  void attach(CLI::App* cmd) {
    cmd->add_option("config", config_path, "experiment config file")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--threads", threads, "worker count (0 = all cores)");
    cmd->add_option("--output", output_dir, "output directory");
    cmd->add_option("--replicas", replicas, "engine replica count");
  }
};

int guarded(const std::string& stage, const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << stage << ": error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo toolkit for barrier-killed branching random walks"};
  app.require_subcommand(1);

  // phi: calibration table, no config file needed
  auto* phi = app.add_subcommand("phi", "calibrate a model and print its transform");
  std::string family = "lattice", regime = "boundary";
  std::optional<double> sigma2, lattice_a, theta;
  phi->add_option("--family", family, "gaussian | lattice");
  phi->add_option("--regime", regime, "boundary | subcritical");
  phi->add_option("--sigma2", sigma2, "gaussian displacement variance");
  phi->add_option("--a", lattice_a, "lattice step magnitude");
  phi->add_option("--theta", theta, "print phi at a single theta");

  CommonArgs renewal_args, simulate_args, spine_args, perp_args, fit_args;
  auto* renewal = app.add_subcommand("renewal", "build or load the renewal table");
  renewal_args.attach(renewal);
  auto* simulate = app.add_subcommand("simulate", "run engine replicas, write CSV");
  simulate_args.attach(simulate);
  std::optional<double> minimum_z;
  simulate->add_option("--minimum-z", minimum_z,
                       "run the ancestral-minimum experiment at this z instead");
  auto* spine = app.add_subcommand("spine-tail", "naive + importance-sampled tails");
  spine_args.attach(spine);
  auto* perp = app.add_subcommand("perpetuity", "perpetuity, MGF probe, excursions");
  perp_args.attach(perp);
  auto* fit = app.add_subcommand("fit", "fit a tail model to a CSV column");
  fit_args.attach(fit);
  std::optional<std::string> fit_input, fit_column, fit_kind;
  fit->add_option("--input", fit_input, "input CSV path");
  fit->add_option("--column", fit_column, "column name");
  fit->add_option("--kind", fit_kind, "exponential | power");

  auto* verify = app.add_subcommand("verify", "run one acceptance criterion");
  std::string criterion = "all";
  int verify_threads = 0;
  verify->add_option("criterion", criterion, "AC1..AC14 or all");
  verify->add_option("--threads", verify_threads, "worker count");

  CLI11_PARSE(app, argc, argv);

  if (phi->parsed()) {
    return guarded("phi", [&]() {
      brw::ExperimentConfig cfg;
      cfg.model.family =
          family == "gaussian" ? brw::Family::GaussianBinary : brw::Family::LatticeBinary;
      cfg.model.regime =
          regime == "subcritical" ? brw::Regime::Subcritical : brw::Regime::Boundary;
      cfg.model.sigma2 = sigma2;
      cfg.model.a = lattice_a;
      if (theta) {
        const brw::ModelSpec m = cfg.calibrated();
        std::printf("phi(%.17g) = %.17g\n", *theta,
                    brw::biggins_transform(m, *theta));
        return 0;
      }
      brw::stage_phi(cfg, std::cout);
      return 0;
    });
  }
  if (renewal->parsed()) {
    return guarded("renewal", [&]() {
      return brw::stage_renewal(renewal_args.load(), std::cout).exit_code;
    });
  }
  if (simulate->parsed()) {
    return guarded("simulate", [&]() {
      brw::ExperimentConfig cfg = simulate_args.load();
      if (minimum_z) {
        cfg.minimum.z = *minimum_z;
        return brw::stage_minimum(cfg, std::cout).exit_code;
      }
      return brw::stage_simulate(cfg, std::cout).exit_code;
    });
  }
  if (spine->parsed()) {
    return guarded("spine-tail", [&]() {
      return brw::stage_spine_tail(spine_args.load(), std::cout).exit_code;
    });
  }
  if (perp->parsed()) {
    return guarded("perpetuity", [&]() {
      return brw::stage_perpetuity(perp_args.load(), std::cout).exit_code;
    });
  }
  if (fit->parsed()) {
    return guarded("fit", [&]() {
      brw::ExperimentConfig cfg = fit_args.load();
      if (fit_input) cfg.fit.input = *fit_input;
      if (fit_column) cfg.fit.column = *fit_column;
      if (fit_kind) {
        cfg.fit.kind = *fit_kind == "power" ? brw::TailKind::Power
                                            : brw::TailKind::Exponential;
      }
      if (cfg.fit.input.empty()) throw std::runtime_error("fit: --input required");
      return brw::stage_fit(cfg, std::cout).exit_code;
    });
  }
  if (verify->parsed()) {
    return guarded("verify", [&]() {
      std::vector<std::string> ids;
      if (criterion == "all") {
        ids = brw::acceptance_ids();
      } else {
        ids.push_back(criterion);
      }
      bool all_pass = true;
      for (const std::string& id : ids) {
        std::ostringstream detail;
        const brw::CriterionResult r = brw::run_acceptance(id, verify_threads, detail);
        std::printf("%-5s %s  %s (%.1fs)\n", r.id.c_str(),
                    r.pass ? "PASS" : "FAIL", r.detail.c_str(), r.seconds);
        if (!r.pass) {
          std::fputs(detail.str().c_str(), stdout);
          all_pass = false;
        }
      }
      return all_pass ? 0 : 1;
    });
  }
  return 0;
}

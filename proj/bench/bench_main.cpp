// Serial-reference vs OpenMP benchmark over the replica-parallel kernels.
// Also cross-checks that both paths produce identical aggregates, which is
// the point of the counter-keyed stream design.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>

#include "brw/engine.hpp"
#include "brw/model.hpp"
#include "brw/parallel.hpp"
#include "brw/perpetuity.hpp"
#include "brw/spine.hpp"
#include "brw/walk.hpp"

namespace {

double now_run(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct Workload {
  std::string name;
  std::uint64_t replicas;
  std::function<double(int threads)> run;  // returns a checksum
};

}  // namespace

int main(int argc, char** argv) {
  double scale = 1.0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--scale") == 0 && i + 1 < argc) {
      scale = std::atof(argv[++i]);
    }
  }

  brw::CalibrationRequest lb_req;
  lb_req.family = brw::Family::LatticeBinary;
  const brw::ModelSpec lb = brw::calibrate(lb_req);
  brw::CalibrationRequest gb_req;
  gb_req.family = brw::Family::GaussianBinary;
  const brw::ModelSpec gb = brw::calibrate(gb_req);
  const brw::RenewalTable lt = brw::lattice_renewal_table(lb, 40.0);
  brw::RenewalEstimateOptions ropt;
  ropt.replicas = 50000;
  ropt.seed = 7;
  const brw::RenewalTable gt = brw::estimate_renewal_mc(brw::step_law(gb), ropt);

  std::vector<Workload> loads;
  {
    const auto replicas = static_cast<std::uint64_t>(20000 * scale);
    loads.push_back({"engine lattice n=12", replicas, [&, replicas](int threads) {
                       brw::KillConfig kc;
                       kc.x = lb.a;
                       kc.n = 12;
                       brw::EngineBatchOptions opt;
                       opt.replicas = replicas;
                       opt.seed = 11;
                       opt.threads = threads;
                       const auto b = brw::run_replicas(lb, lt, kc, opt);
                       double sum = 0;
                       for (const auto& s : b.snapshots) sum += s.D_trunc;
                       return sum;
                     }});
  }
  {
    const auto replicas = static_cast<std::uint64_t>(4000 * scale);
    loads.push_back({"engine gaussian n=14", replicas, [&, replicas](int threads) {
                       brw::KillConfig kc;
                       kc.x = std::numeric_limits<double>::infinity();
                       kc.n = 14;
                       kc.v_cap = 16.0;
                       brw::EngineBatchOptions opt;
                       opt.replicas = replicas;
                       opt.seed = 13;
                       opt.threads = threads;
                       const auto b = brw::run_replicas(gb, gt, kc, opt);
                       double sum = 0;
                       for (const auto& s : b.snapshots) sum += s.W;
                       return sum;
                     }});
  }
  {
    const auto replicas = static_cast<std::uint64_t>(20000 * scale);
    loads.push_back({"spine lattice n=10", replicas, [&, replicas](int threads) {
                       brw::KillConfig kc;
                       kc.x = lb.a;
                       kc.n = 10;
                       const brw::ConditionedWalk walk(brw::step_law(lb), lt);
                       brw::SpineBatchOptions opt;
                       opt.replicas = replicas;
                       opt.seed = 17;
                       opt.threads = threads;
                       const std::vector<double> ys = {1.0};
                       const auto est = brw::is_tail_estimate(lb, lt, walk, kc, ys, opt);
                       return est.mean_weight.mean;
                     }});
  }
  {
    const auto replicas = static_cast<std::uint64_t>(2000 * scale);
    loads.push_back({"perpetuity lattice", replicas, [&, replicas](int threads) {
                       const brw::ConditionedWalk walk(brw::step_law(lb), lt);
                       brw::PerpetuityConfig pc;
                       pc.horizon = 20000;
                       const auto b = brw::run_perpetuity_batch(
                           lb, lt, &walk, pc, replicas, 19, threads);
                       double sum = 0;
                       for (double v : b.finals) sum += v;
                       return sum;
                     }});
  }

  const int hw = brw::hardware_threads();
  std::printf("threads available: %d\n", hw);
  std::printf("%-24s %10s %12s %12s %9s  %s\n", "workload", "replicas",
              "serial s", "parallel s", "speedup", "checksums");
  for (auto& w : loads) {
    double sum1 = 0, sum2 = 0;
    const double t1 = now_run([&] { sum1 = w.run(1); });
    const double t2 = now_run([&] { sum2 = w.run(hw); });
    std::printf("%-24s %10llu %12.3f %12.3f %8.2fx  %s\n", w.name.c_str(),
                static_cast<unsigned long long>(w.replicas), t1, t2, t1 / t2,
                sum1 == sum2 ? "identical" : "MISMATCH");
  }
  return 0;
}

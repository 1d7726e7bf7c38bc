#ifndef BRW_STAGES_HPP
#define BRW_STAGES_HPP

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "brw/config.hpp"
#include "brw/engine.hpp"
#include "brw/walk.hpp"

namespace brw {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr int kSummarySchemaVersion = 1;

// Everything that pins a run's outputs; two runs with equal determinism keys
// produce byte-identical CSVs regardless of worker count.
struct RunManifest {
  std::string stage;
  std::uint64_t config_hash = 0;
  std::uint64_t model_hash = 0;
  std::uint64_t renewal_hash = 0;
  std::uint64_t seed = 0;
  std::map<std::string, double> wall_clock_seconds;  // informational
  std::map<std::string, double> pruning_certificates;
  std::vector<std::string> outputs;

  std::string to_json() const;
  void save(const std::string& path) const;
};

struct StageResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> files;
};

// Content-addressed renewal table: computed once per (model, walk-params)
// key and reloaded from <root>/cache afterwards.
RenewalTable obtain_renewal_table(const ExperimentConfig& cfg,
                                  const ModelSpec& model);

StageResult stage_phi(const ExperimentConfig& cfg, std::ostream& out);
StageResult stage_renewal(const ExperimentConfig& cfg, std::ostream& out);
StageResult stage_simulate(const ExperimentConfig& cfg, std::ostream& out);
StageResult stage_minimum(const ExperimentConfig& cfg, std::ostream& out);
StageResult stage_spine_tail(const ExperimentConfig& cfg, std::ostream& out);
StageResult stage_perpetuity(const ExperimentConfig& cfg, std::ostream& out);
StageResult stage_fit(const ExperimentConfig& cfg, std::ostream& out);

void write_snapshots_csv(const std::string& path, const EngineBatch& batch,
                         const KillConfig& cfg);
std::vector<double> read_csv_column(const std::string& path,
                                    const std::string& column);

}  // namespace brw

#endif  // BRW_STAGES_HPP

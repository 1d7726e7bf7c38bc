#ifndef BRW_ACCEPTANCE_HPP
#define BRW_ACCEPTANCE_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace brw {

struct CriterionResult {
  std::string id;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

// AC1..AC14; every tolerance is pinned here, none is configurable.
std::vector<std::string> acceptance_ids();

// Runs one criterion end to end (its own models, tables and seeds) and logs
// supporting numbers to `log`.
CriterionResult run_acceptance(const std::string& id, int threads,
                               std::ostream& log);

}  // namespace brw

#endif  // BRW_ACCEPTANCE_HPP

#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mpfio/atom.hpp"
#include "mpfio/cli/config.hpp"
#include "mpfio/evaluator.hpp"
#include "mpfio/verify.hpp"

namespace mpfio::cli {

struct ExperimentInfo {
  std::string name;
  std::string description;
};

/// Every experiment kind the runner knows, in a fixed order.
const std::vector<ExperimentInfo>& list_experiments();

struct RunOptions {
  std::string out_dir;  // empty: run.out from the config
  int workers = 0;      // 0: MPFIO_WORKERS, then hardware concurrency
  std::optional<std::uint64_t> seed;
  std::string filter;   // glob on experiment ids; empty matches all
};

struct Job {
  std::string id;    // instance name, e.g. "h1l1_sweep@super"
  std::string kind;  // entry of list_experiments()
  std::function<ExperimentReport()> run;
};

struct Plan {
  std::vector<Job> jobs;
  std::string out_dir;
};

/// Validates the whole config and binds every listed experiment. Throws
/// ConfigError on the first bad field, including fields nothing reads.
Plan make_plan(const Config& config, const RunOptions& options = {});

OperatorSpec build_operator(const View& view);
RectangleAtom build_atom(const View& view, const LatticeGrid& grid, std::uint64_t seed);
LatticeGrid build_grid(const View& view);
PhaseSpec build_phase(const View& view, const ProductSpace& space);

struct RunSummary {
  std::vector<ExperimentReport> reports;
  std::vector<std::string> errors;  // "id: message" for experiments that threw
  int exit_code = 0;
};

/// Runs the plan in order, writes reports under plan.out_dir and prints one
/// line per experiment to log.
RunSummary execute(const Plan& plan, std::ostream& log);

/// Config path to exit code: 0 all PASS, 2 any FAIL, 1 config or runtime error.
int run(const std::string& config_path, const RunOptions& options, std::ostream& out, std::ostream& err);

/// Resolves a config path, also trying the ".conf" suffix.
std::string resolve_config_path(const std::string& path);

int resolve_workers(int requested);
bool glob_match(std::string_view pattern, std::string_view text);

}  // namespace mpfio::cli

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "dgcw_cli/run_config.hpp"

namespace dgcw::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2 };

// Creates <out>/<UTC yyyymmdd-hhmmss>-<command>, adding -2, -3, ... when the
// name is taken.
std::filesystem::path make_run_dir(const std::filesystem::path& out, std::string_view command);

// Each command writes its artifacts into `run_dir` (which already holds
// config.resolved) and reports progress on `log`. They throw ConfigError for
// usage problems and return kExitNumerical on numerical failure.
int cmd_gen_data(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);
int cmd_train(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);
int cmd_eval(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);
int cmd_gradcheck(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);
int cmd_bench(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);
int cmd_variance(const RunConfig& cfg, const std::filesystem::path& run_dir, std::ostream& log);

struct GradcheckCase {
  std::string target;
  std::string name;
  double error = 0;
  double threshold = 0;
  bool pass = false;
};

// target is ops, dgcw or net; all checks run at 64 bits.
std::vector<GradcheckCase> run_gradcheck_suite(std::string_view target);

// Parses argv, builds the run directory and dispatches. Returns the exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace dgcw::cli

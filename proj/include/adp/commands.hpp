#pragma once

// Command-line front end: gen-data, train, eval, decompose and bench. Every
// command writes its outputs and a manifest.json under --out; passing that
// manifest back through --config reproduces the run.

#include "adp/hvts.hpp"
#include "adp/remote.hpp"
#include "adp/rollout.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace adp::cli {

class CliError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dependencies a command may reach outside the process.
struct Context {
  Transport* transport = nullptr;  // nullptr: HttpTransport
  std::ostream* out = nullptr;     // nullptr: std::cout
  std::ostream* err = nullptr;     // nullptr: std::cerr
};

/// Parses argv (argv[0] is the program name) and runs the chosen command.
/// Returns the process exit status.
int run(const std::vector<std::string>& args, const Context& ctx = {});
int run(int argc, const char* const* argv, const Context& ctx = {});

/// Budget descriptor accepted by eval and bench:
///   fixed:<N_a>,<N_d> | table:<path> | oracle-hvts
struct BudgetSpec {
  enum class Kind { kFixed, kTable, kOracleHvts } kind = Kind::kFixed;
  FixedBudget fixed;
  std::filesystem::path table_path;
};
BudgetSpec parse_budget_spec(std::string_view s);

/// Stage templates of the push task, in Stage order.
std::vector<StageTemplate> push_stage_templates();
/// One (8, 40) stage for approach and (16, 20) elsewhere.
ScheduleTable default_push_schedule();
/// Reorders entries into Stage order; throws CliError on a missing stage.
ScheduleTable align_to_push_stages(const ScheduleTable& table);

/// Reads a JSON schedule file as written by schedule_to_json.
ScheduleTable load_schedule_file(const std::filesystem::path& path,
                                 const ScheduleRanges& ranges);
/// Reads a JSON stage-template file as written by stage_templates_to_json.
std::vector<StageTemplate> load_stage_file(const std::filesystem::path& path);

}  // namespace adp::cli

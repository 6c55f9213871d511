#pragma once

// Stage-conditioned inference budgets: prompt construction and response
// parsing for the decomposition/scheduling/classification exchanges with a
// vision-language model, the per-stage (N_a, N_d) table, and the scheduler
// that picks the active stage during a rollout.

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace adp {

class HvtsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageTemplate {
  std::string name;         // underscore-joined identifier
  std::string description;  // "Action features: ..."
  bool operator==(const StageTemplate&) const = default;
};

struct ScheduleRanges {
  int a_min = 8;
  int a_max = 16;
  int i_min = 20;
  int i_max = 40;
};

struct ScheduleEntry {
  std::string name;
  int n_action_steps = 0;       // N_a
  int num_inference_steps = 0;  // N_d
  bool operator==(const ScheduleEntry&) const = default;
};

struct ScheduleTable {
  std::vector<ScheduleEntry> entries;
  ScheduleRanges ranges;

  /// Index of the entry named `name`, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
};

struct StageProb {
  std::size_t stage = 0;
  double prob = 0.0;
  bool operator==(const StageProb&) const = default;
};

/// Ranked candidates, probabilities nonincreasing.
using StageBelief = std::vector<StageProb>;

// --- prompts ---------------------------------------------------------------

std::string build_decomposition_prompt(std::string_view task_desc,
                                       int num_images, int num_stages);
std::string build_schedule_prompt(std::span<const StageTemplate> stages,
                                  const ScheduleRanges& ranges);
std::string build_classification_prompt(std::span<const StageTemplate> stages,
                                        int top_k);

// --- response handling -----------------------------------------------------

struct SanitizeResult {
  std::string json;
  std::string error;  // nonempty on failure
  explicit operator bool() const { return error.empty(); }
};

/// Strips code fences and prose around the outermost [...] and removes
/// trailing commas before ']' or '}' (outside string literals).
SanitizeResult sanitize_json(std::string_view raw);

/// Spaces in names become underscores.
std::string normalize_stage_name(std::string_view name);

std::vector<StageTemplate> parse_stage_templates(std::string_view text,
                                                 int expected_n);

/// Values are clamped into range. If no entry has (a_min, i_max), the entry
/// with the largest N_d (ties: smallest N_a, then earliest) is promoted to
/// (a_min, i_max).
ScheduleTable parse_schedule(std::string_view text,
                             std::span<const StageTemplate> stages,
                             const ScheduleRanges& ranges);

/// True when the table holds at least one (a_min, i_max) entry.
bool has_hardest_entry(const ScheduleTable& table);

/// Parses "name: probability" lines. Unknown names are dropped (reported via
/// `warnings` when given); the result is sorted by probability descending,
/// truncated to top_k and rescaled only if the probabilities sum above 1.
StageBelief parse_stage_probs(std::string_view text,
                              std::span<const StageTemplate> stages, int top_k,
                              std::vector<std::string>* warnings = nullptr);

/// JSON serialisation matching the response schemas (4-space indent, fixed
/// key order, trailing newline).
std::string stage_templates_to_json(std::span<const StageTemplate> stages);
std::string schedule_to_json(const ScheduleTable& table);

// --- stage selection and scheduling ----------------------------------------

/// argmax when the gap between the top two is >= gap (or there is a single
/// candidate); otherwise a draw proportional to the candidates' probabilities.
std::size_t select_stage(const StageBelief& belief, double gap,
                         std::mt19937_64& rng);

/// Everything a classifier may look at for one decision.
struct ClassifierInput {
  int true_stage = -1;  // ground truth, used only by the oracle
  std::span<const std::vector<std::uint8_t>> frames_ppm;  // chronological
};

class StageClassifier {
 public:
  virtual ~StageClassifier() = default;
  /// Throws ClassifierError (see remote.hpp) or HvtsError on failure.
  virtual StageBelief classify(const ClassifierInput& input) = 0;
};

/// One-hot belief on the ground-truth stage.
class OracleClassifier final : public StageClassifier {
 public:
  StageBelief classify(const ClassifierInput& input) override;
};

StageBelief classify_oracle(int true_stage);

struct SchedulerConfig {
  double gap = 0.2;
  std::optional<int> period;  // unset: classify every N_a of the active stage
  int initial_stage = 0;
};

struct SchedulerState {
  SchedulerConfig cfg;
  std::size_t active_stage = 0;
  int steps_since = 0;
  bool has_belief = false;
  StageBelief cached_belief;
  bool degraded = false;       // last classification failed
  int classifier_calls = 0;
  int classifier_failures = 0;
  std::mt19937_64 rng;

  static SchedulerState make(const SchedulerConfig& cfg, std::uint64_t seed);
  int period(const ScheduleTable& table) const;
};

struct TickResult {
  int n_action_steps = 0;
  int num_inference_steps = 0;
  std::size_t stage = 0;
  bool classified = false;
};

/// Called once per control step. Re-classifies when no belief is cached or
/// `period` steps have elapsed since the last classification; otherwise
/// returns the cached stage's budget. Classifier failures keep the cached
/// stage and set `degraded`.
TickResult scheduler_tick(SchedulerState& st, const ClassifierInput& input,
                          StageClassifier& classifier,
                          const ScheduleTable& table);

}  // namespace adp

#pragma once

// Receding-horizon control of the push task with a chunked action policy,
// optional stage-conditioned budgets, and the evaluation harness.

#include "adp/denoiser.hpp"
#include "adp/env.hpp"
#include "adp/hvts.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

namespace adp {

enum class SamplerKind { kDdpm, kDdim };

const char* to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view s);

class RolloutError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Produces an action chunk for the current state. `calls` is incremented by
/// the number of denoiser evaluations spent.
class ChunkPolicy {
 public:
  virtual ~ChunkPolicy() = default;
  virtual int horizon() const = 0;
  virtual ActionSeq plan(const PushEnv& env, int num_inference_steps,
                         SamplerKind kind, std::mt19937_64& rng,
                         std::int64_t& calls) const = 0;
};

class DiffusionPolicy final : public ChunkPolicy {
 public:
  DiffusionPolicy(DenoiserParams params, NoiseSchedule schedule,
                  double ddim_eta = 0.0);
  explicit DiffusionPolicy(const PolicyCheckpoint& ckpt, double ddim_eta = 0.0);

  int horizon() const override { return params_.dims.horizon; }
  ActionSeq plan(const PushEnv& env, int num_inference_steps, SamplerKind kind,
                 std::mt19937_64& rng, std::int64_t& calls) const override;
  /// Denoises from pure noise conditioned on obs.
  ActionSeq sample(const Observation& obs, int num_inference_steps,
                   SamplerKind kind, std::mt19937_64& rng,
                   std::int64_t& calls) const;

  const DenoiserParams& params() const { return params_; }
  const NoiseSchedule& schedule() const { return schedule_; }

 private:
  DenoiserParams params_;
  NoiseSchedule schedule_;
  double eta_;
};

/// Plans by simulating the scripted expert on a copy of the environment.
class ExpertPolicy final : public ChunkPolicy {
 public:
  explicit ExpertPolicy(int horizon = 16) : horizon_(horizon) {}
  int horizon() const override { return horizon_; }
  ActionSeq plan(const PushEnv& env, int num_inference_steps, SamplerKind kind,
                 std::mt19937_64& rng, std::int64_t& calls) const override;

 private:
  int horizon_;
};

/// Uniform actions in [-1, 1]^2.
class RandomPolicy final : public ChunkPolicy {
 public:
  explicit RandomPolicy(int horizon = 16) : horizon_(horizon) {}
  int horizon() const override { return horizon_; }
  ActionSeq plan(const PushEnv& env, int num_inference_steps, SamplerKind kind,
                 std::mt19937_64& rng, std::int64_t& calls) const override;

 private:
  int horizon_;
};

struct FixedBudget {
  int n_action_steps = 8;
  int num_inference_steps = 100;
};

struct HvtsBudget {
  ScheduleTable table;
  SchedulerConfig scheduler;
  StageClassifier* classifier = nullptr;  // not owned
  int frame_history = 0;  // frames passed to the classifier (0: none rendered)
};

using BudgetSource = std::variant<FixedBudget, HvtsBudget>;

struct RolloutOptions {
  SamplerKind sampler = SamplerKind::kDdpm;
  PushEnvConfig env;
  double early_fraction = 0.6;
};

struct TraceEntry {
  int step = 0;
  int true_stage = 0;
  int scheduled_stage = -1;  // -1 under a fixed budget
  int n_action_steps = 0;
  int num_inference_steps = 0;
};

struct EpisodeResult {
  std::uint64_t env_seed = 0;
  bool success = false;
  std::optional<int> success_step;
  bool early_success = false;
  int control_steps = 0;
  int replans = 0;
  std::int64_t denoiser_calls = 0;
  int classifier_calls = 0;
  int classifier_failures = 0;
  double wall_time = 0.0;  // seconds, not part of any deterministic output
  std::vector<TraceEntry> trace;
};

/// Runs one episode from PushEnv::reset(env_seed). All sampling noise comes
/// from `seed`.
EpisodeResult rollout(const ChunkPolicy& policy, std::uint64_t env_seed,
                      const BudgetSource& budget, const RolloutOptions& opts,
                      std::uint64_t seed);

struct Metrics {
  std::string label;
  std::vector<std::uint64_t> seeds;
  int episodes_per_seed = 0;
  int episodes = 0;
  double success_rate = 0.0;
  double success_std = 0.0;  // across seeds
  double early_success_rate = 0.0;
  double early_success_std = 0.0;
  double calls_per_step = 0.0;  // total denoiser calls / total control steps
  double calls_per_replan = 0.0;
  double mean_steps = 0.0;
  std::int64_t total_calls = 0;
  std::int64_t total_steps = 0;
  int classifier_calls = 0;
  int classifier_failures = 0;
  double wall_time = 0.0;  // seconds over all episodes
  std::vector<double> per_seed_success;
};

/// Environment seed of episode i under evaluation seed s.
std::uint64_t episode_env_seed(std::uint64_t s, int i);

/// n_episodes per seed; per-episode noise is seeded from (seed, episode).
Metrics evaluate(const ChunkPolicy& policy, int n_episodes,
                 const BudgetSource& budget, const RolloutOptions& opts,
                 const std::vector<std::uint64_t>& seeds,
                 std::vector<EpisodeResult>* episodes = nullptr);

struct SpeedupReport {
  std::string baseline;
  std::string candidate;
  double nfe_speedup = 1.0;      // baseline calls/step over candidate's
  double latency_speedup = 1.0;  // wall-time ratio per control step
  double success_delta = 0.0;    // candidate - baseline
};

/// Throws std::invalid_argument unless both ran identical seeds/episodes.
SpeedupReport compare_speedup(const Metrics& baseline, const Metrics& candidate);

/// Deterministic columns only (no wall time).
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<Metrics>& rows,
                       const std::vector<SpeedupReport>& speedups);
void write_episodes_csv(const std::filesystem::path& path,
                        const std::vector<EpisodeResult>& episodes);
/// Fixed-width table with NFE and wall-clock columns.
std::string format_speedup_table(const std::vector<Metrics>& rows,
                                 const std::vector<SpeedupReport>& speedups);

}  // namespace adp

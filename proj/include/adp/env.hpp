#pragma once

// Planar push task: a point-mass agent pushes a disk-shaped block onto a
// target. The task passes through five geometric stages (approach, align,
// push, reach, complete) that the inference scheduler keys its budgets on.

#include "adp/dataset.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace adp {

enum class Stage : int { kApproach = 0, kAlign, kPush, kReach, kComplete };
inline constexpr int kNumStages = 5;
inline constexpr std::array<std::string_view, kNumStages> kStageNames = {
    "approach", "align", "push", "reach", "complete"};

class EnvError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct PushEnvConfig {
  double contact_radius = 0.05;    // agent/block centre distance at contact
  double target_tolerance = 0.05;  // success when |block - target| < this
  double max_speed = 0.015;        // agent displacement per unit action
  int max_steps = 200;
  Eigen::Vector2d target{0.0, 0.45};  // fixed goal position
  // Stage thresholds.
  double align_radius = 0.1;      // distance to the pre-push pose
  double align_cos = 0.95;        // cos of the push-direction misalignment
  double reach_radius = 0.12;     // block distance to target for "reach"
  double contact_slack = 0.01;
};

struct PushEnv {
  PushEnvConfig cfg;
  Eigen::Vector2d agent = Eigen::Vector2d::Zero();
  Eigen::Vector2d block = Eigen::Vector2d::Zero();
  Eigen::Vector2d target = Eigen::Vector2d::Zero();
  Stage stage = Stage::kApproach;
  int steps = 0;
  bool done = false;
  bool success = false;

  static constexpr int kObsDim = 6;
  static constexpr int kActionDim = 2;

  /// Random initial condition: block in [-0.3, 0.3] x [-0.3, 0.05], target at
  /// cfg.target, agent 0.2-0.4 behind the block along the push axis.
  static PushEnv reset(std::uint64_t seed, const PushEnvConfig& cfg = {});
  static PushEnv from_positions(const Eigen::Vector2d& agent,
                                const Eigen::Vector2d& block,
                                const Eigen::Vector2d& target,
                                const PushEnvConfig& cfg = {});

  /// (s * (block - agent), s * (target - block), push_direction()) with
  /// s = kRelScale. The goal is fixed, so absolute positions are recoverable.
  static constexpr double kRelScale = 8.0;
  Observation observation() const;
  /// Unit push direction from block to target.
  Eigen::Vector2d push_direction() const;
  /// Agent pose directly behind the block along the push direction.
  Eigen::Vector2d pre_push_pose() const;
};

/// Deterministic stage classification from geometry:
///   complete  block within target_tolerance of target;
///   reach     in pushing contact and block within reach_radius of target;
///   push      in pushing contact;
///   align     within align_radius of the pre-push pose;
///   approach  otherwise.
/// "In pushing contact" means |agent - block| <= contact_radius +
/// contact_slack and the agent->block direction has cosine >= align_cos with
/// the push direction.
Stage classify_stage(const PushEnv& env);

struct StepResult {
  Observation obs;
  bool done = false;
};

/// Moves the agent by max_speed * clip(action) (norm clipped to 1). On
/// overlap the block slides along the agent's direction of motion until the
/// centres are contact_radius apart (a flat pusher); then the stage is
/// recomputed. Throws EnvError when called after done.
StepResult env_step(PushEnv& env, const Eigen::Vector2d& action);

/// Stage-wise proportional controller. Output components lie in [-1, 1].
Eigen::Vector2d scripted_expert(const PushEnv& env);

struct ExpertEpisode {
  Trajectory traj;
  bool success = false;
};

/// Which action a demonstration stores for each visited state.
enum class DemoLabels {
  kExpert,    // the expert's intended action (noise only perturbs the rollout)
  kExecuted,  // the perturbed action that was actually applied
};

/// Runs the expert with additive Gaussian action noise (std noise_level,
/// clipped to [-1, 1]) from PushEnv::reset(seed).
ExpertEpisode run_expert_episode(std::uint64_t seed, double noise_level,
                                 const PushEnvConfig& cfg = {},
                                 DemoLabels labels = DemoLabels::kExpert);

class DemoGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// n successful expert episodes; failed episodes are skipped and replaced by
/// new seeds until `max_attempts` episodes have been tried.
DemoDataset generate_demos(int n, std::uint64_t seed, double noise_level,
                           int horizon = 16, const PushEnvConfig& cfg = {},
                           int max_attempts = 0,
                           DemoLabels labels = DemoLabels::kExpert);

/// Top-down RGB rendering used when frames are sent to a remote classifier.
struct Frame {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};
Frame render_frame(const PushEnv& env, int size = 96);

}  // namespace adp

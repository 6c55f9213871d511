#pragma once

// Adaptive training: a learnable categorical sampler over diffusion steps
// trained with REINFORCE plus an entropy bonus, per-trajectory sampling
// weights that drift toward high-loss demonstrations, and the training loop
// that ties both to the noise-prediction network.

#include "adp/dataset.hpp"
#include "adp/denoiser.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace adp {

class AlnError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------
// Timestep sampler

struct SamplerConfig {
  int T = 100;
  int embed_dim = 128;
  std::vector<int> hidden = {256, 256};
  double entropy_coef = 10.0;
  int warmup_steps = 500;
  double lr = 1e-3;
};

enum class SamplerPhase { kWarmup, kAdaptive };

/// pi_phi(k) = softmax_k(MLP(sinusoidal(k))) over k = 1..T.
class TimestepSampler {
 public:
  TimestepSampler(const SamplerConfig& cfg, std::uint64_t seed);

  const SamplerConfig& config() const { return cfg_; }
  int T() const { return cfg_.T; }
  SamplerPhase phase() const { return phase_; }
  /// Switches to the adaptive phase once step_count reaches warmup_steps.
  void set_phase_for_step(std::int64_t step_count);

  const MlpShape& shape() const { return shape_; }
  const Eigen::VectorXd& params() const { return params_; }
  /// Replaces the parameters and refreshes the cached logits.
  void set_params(Eigen::VectorXd params);

  /// Cached per-step logits (index k-1).
  const Eigen::VectorXd& logits() const { return logits_; }
  const std::vector<double>& probs() const { return probs_; }
  std::discrete_distribution<int>& draw_dist() { return dist_; }

  AdamState& optimizer() { return opt_; }
  const Eigen::MatrixXd& embeddings() const { return embed_; }

 private:
  void refresh();

  SamplerConfig cfg_;
  MlpShape shape_;
  Eigen::VectorXd params_;
  Eigen::MatrixXd embed_;
  Eigen::VectorXd logits_;
  std::vector<double> probs_;
  std::discrete_distribution<int> dist_;
  AdamState opt_;
  SamplerPhase phase_ = SamplerPhase::kWarmup;
};

/// Normalised probabilities over k = 1..T (index k-1).
std::vector<double> sampler_distribution(const TimestepSampler& ts);

/// Softmax with max subtraction; entries are floored at the smallest normal
/// double so the result stays strictly positive.
std::vector<double> softmax(const Eigen::VectorXd& logits);

double entropy(std::span<const double> p);

/// Uniform over {1..T} while step_count < warmup_steps, otherwise an
/// inverse-CDF draw from pi_phi.
int sample_timestep(TimestepSampler& ts, std::mt19937_64& rng,
                    std::int64_t step_count);

enum class RewardSign { kPositive, kNegative };

/// (l - mean) / (population std + eps), negated for kNegative.
std::vector<double> normalize_rewards(std::span<const double> losses,
                                      double eps = 1e-8,
                                      RewardSign sign = RewardSign::kPositive);

/// Sampler objective sum_b -r_b log pi(k_b) - lambda H(pi).
double sampler_objective(const TimestepSampler& ts, std::span<const int> ks,
                         std::span<const double> rewards);
double sampler_objective(const TimestepSampler& ts, const Eigen::VectorXd& params,
                         std::span<const int> ks,
                         std::span<const double> rewards);
/// Exact gradient of sampler_objective with respect to the parameters.
Eigen::VectorXd sampler_objective_grad(const TimestepSampler& ts,
                                       std::span<const int> ks,
                                       std::span<const double> rewards);

/// One optimizer step on sampler_objective. Throws AlnError during warmup.
void sampler_update(TimestepSampler& ts, std::span<const int> ks,
                    std::span<const double> rewards, double lr);
void sampler_update(TimestepSampler& ts, int k, double reward, double lr);

// ---------------------------------------------------------------------------
// Trajectory re-weighting

struct AlphaSchedule {
  double alpha_max = 0.1;
  double alpha_min = 0.01;
  std::int64_t total_steps = 1;
};

/// Cosine decay from alpha_max at step 0 to alpha_min at step == total.
double anneal_alpha(std::int64_t step, std::int64_t total, double alpha_max,
                    double alpha_min);

struct TrajectoryWeights {
  static constexpr double kFloor = 1e-4;

  std::vector<double> w;
  AlphaSchedule alpha_schedule;
  double floor = kFloor;

  static TrajectoryWeights uniform(std::size_t n, AlphaSchedule sched = {});
};

/// max(floor, (1 - alpha) w + alpha (r + 1)).
double ema_weight(double w, double r, double alpha,
                  double floor = TrajectoryWeights::kFloor);

/// Rescales to mean 1 while keeping every entry >= floor (entries that would
/// fall below the floor are pinned to it and the rest share the remainder).
void renormalize_weights(std::vector<double>& w, double floor);

/// EMA update of entry i, floor, then global renormalisation to mean 1.
void update_traj_weight(TrajectoryWeights& tw, std::size_t i, double r,
                        double alpha);

/// Draw with replacement, P(i) = w_i / sum(w).
std::size_t weighted_sample_index(const TrajectoryWeights& tw,
                                  std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Adaptive draw/feedback cycle shared by the trainer and synthetic checks

enum class TrainMode { kUniformBaseline, kAln };

struct Draw {
  std::size_t traj = 0;
  int k = 1;
};

class AdaptiveSampling {
 public:
  AdaptiveSampling(const SamplerConfig& sampler_cfg, std::size_t num_traj,
                   AlphaSchedule alpha, TrainMode mode, RewardSign sign,
                   double reward_eps, std::uint64_t seed);

  /// Draws a batch of (trajectory, step) pairs for iteration `step`.
  std::vector<Draw> draw(std::mt19937_64& rng, std::int64_t step,
                         int batch_size);

  /// Feeds per-element losses back. A no-op in the baseline mode and before
  /// the warmup ends; otherwise normalises rewards over the batch, takes one
  /// sampler step and applies one weight update per drawn trajectory.
  /// Returns true when adaptive updates were applied.
  bool feedback(std::span<const Draw> draws, std::span<const double> losses,
                std::int64_t step);

  const TimestepSampler& sampler() const { return sampler_; }
  TimestepSampler& sampler() { return sampler_; }
  const TrajectoryWeights& weights() const { return weights_; }
  std::int64_t sampler_updates() const { return sampler_updates_; }
  std::int64_t weight_updates() const { return weight_updates_; }

 private:
  TimestepSampler sampler_;
  TrajectoryWeights weights_;
  TrainMode mode_;
  RewardSign sign_;
  double reward_eps_;
  std::int64_t sampler_updates_ = 0;
  std::int64_t weight_updates_ = 0;
};

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
  std::int64_t total_steps = 40000;
  int batch_size = 32;
  int T = 100;
  int warmup_steps = 500;
  double entropy_coef = 10.0;
  double reward_eps = 1e-8;
  RewardSign reward_sign = RewardSign::kPositive;
  double beta_start = 1e-3;
  double beta_end = 0.2;
  double denoiser_lr = 1e-3;
  double sampler_lr = 1e-3;
  double alpha_max = 0.1;
  double alpha_min = 0.01;
  std::vector<int> sampler_hidden = {256, 256};
  int sampler_embed_dim = 128;
  DenoiserDims dims;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 0;       // 0 disables periodic evaluation
  std::int64_t snapshot_every = 1000;

  /// Throws AlnError on invariant violations.
  void validate() const;
  SamplerConfig sampler_config() const;
};

struct TrainReport {
  std::vector<std::int64_t> step;
  std::vector<double> loss;
  std::vector<std::optional<double>> eval_success;
  std::vector<double> sampler_entropy;
  std::vector<std::pair<std::int64_t, std::vector<double>>> sampler_snapshots;
  std::vector<std::pair<std::int64_t, std::vector<double>>> weight_snapshots;
  std::int64_t gradient_steps = 0;
};

/// Success-rate probe called every eval_every steps and after the last step.
using EvalFn = std::function<double(const DenoiserParams&, std::int64_t step)>;

struct TrainResult {
  DenoiserParams params;
  TrainReport report;
  std::vector<double> sampler_probs;
  std::vector<double> traj_weights;
};

TrainResult train(const TrainConfig& config, const DemoDataset& dataset,
                  TrainMode mode, const EvalFn& eval = {});

/// step,loss,eval_success,sampler_entropy
void write_report_csv(const std::filesystem::path& path, const TrainReport& r);
/// step,p_1,...,p_T
void write_snapshots_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::int64_t, std::vector<double>>>& snaps,
    const char* prefix);

}  // namespace adp

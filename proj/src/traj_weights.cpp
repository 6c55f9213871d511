#include "adp/aln.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace adp {

double anneal_alpha(std::int64_t step, std::int64_t total, double alpha_max,
                    double alpha_min) {
  if (step < 0 || step > total) {
    throw AlnError("anneal_alpha: step outside [0, total]");
  }
  if (total == 0) return alpha_max;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return alpha_min +
         0.5 * (alpha_max - alpha_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

TrajectoryWeights TrajectoryWeights::uniform(std::size_t n, AlphaSchedule sched) {
  if (n == 0) throw AlnError("trajectory weights need at least one entry");
  TrajectoryWeights tw;
  tw.w.assign(n, 1.0);
  tw.alpha_schedule = sched;
  return tw;
}

double ema_weight(double w, double r, double alpha, double floor) {
  return std::max(floor, (1.0 - alpha) * w + alpha * (r + 1.0));
}

void renormalize_weights(std::vector<double>& w, double floor) {
  const std::size_t n = w.size();
  if (n == 0) return;
  std::vector<bool> pinned(n, false);
  std::size_t n_pinned = 0;
  double scale = 1.0;
  for (;;) {
    double free_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pinned[i]) free_sum += w[i];
    }
    scale = (static_cast<double>(n) - floor * static_cast<double>(n_pinned)) /
            free_sum;
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      if (!pinned[i] && scale * w[i] < floor) {
        pinned[i] = true;
        ++n_pinned;
        changed = true;
      }
    }
    if (!changed) break;
  }
  for (std::size_t i = 0; i < n; ++i) w[i] = pinned[i] ? floor : scale * w[i];
}

void update_traj_weight(TrajectoryWeights& tw, std::size_t i, double r,
                        double alpha) {
  if (i >= tw.w.size()) throw AlnError("trajectory index out of range");
  if (!(alpha > 0.0 && alpha <= 1.0)) throw AlnError("alpha must lie in (0, 1]");
  tw.w[i] = ema_weight(tw.w[i], r, alpha, tw.floor);
  renormalize_weights(tw.w, tw.floor);
}

std::size_t weighted_sample_index(const TrajectoryWeights& tw,
                                  std::mt19937_64& rng) {
  std::discrete_distribution<std::size_t> dist(tw.w.begin(), tw.w.end());
  return dist(rng);
}

AdaptiveSampling::AdaptiveSampling(const SamplerConfig& sampler_cfg,
                                   std::size_t num_traj, AlphaSchedule alpha,
                                   TrainMode mode, RewardSign sign,
                                   double reward_eps, std::uint64_t seed)
    : sampler_(sampler_cfg, seed),
      weights_(TrajectoryWeights::uniform(num_traj, alpha)),
      mode_(mode),
      sign_(sign),
      reward_eps_(reward_eps) {}

std::vector<Draw> AdaptiveSampling::draw(std::mt19937_64& rng,
                                         std::int64_t step, int batch_size) {
  const bool adaptive =
      mode_ == TrainMode::kAln && step >= sampler_.config().warmup_steps;
  if (adaptive) sampler_.set_phase_for_step(step);
  std::discrete_distribution<std::size_t> traj_dist(weights_.w.begin(),
                                                    weights_.w.end());
  std::uniform_int_distribution<int> uniform_k(1, sampler_.T());
  std::vector<Draw> out(static_cast<std::size_t>(batch_size));
  for (auto& d : out) {
    d.traj = traj_dist(rng);
    d.k = adaptive ? sample_timestep(sampler_, rng, step) : uniform_k(rng);
  }
  return out;
}

bool AdaptiveSampling::feedback(std::span<const Draw> draws,
                                std::span<const double> losses,
                                std::int64_t step) {
  if (draws.size() != losses.size()) {
    throw AlnError("feedback: draw and loss counts differ");
  }
  if (mode_ != TrainMode::kAln || step < sampler_.config().warmup_steps) {
    return false;
  }
  sampler_.set_phase_for_step(step);
  const auto rewards = normalize_rewards(losses, reward_eps_, sign_);

  std::vector<int> ks(draws.size());
  for (std::size_t b = 0; b < draws.size(); ++b) ks[b] = draws[b].k;
  sampler_update(sampler_, ks, rewards, sampler_.config().lr);
  ++sampler_updates_;

  const auto& sched = weights_.alpha_schedule;
  const double alpha = anneal_alpha(std::min(step, sched.total_steps),
                                    sched.total_steps, sched.alpha_max,
                                    sched.alpha_min);
  for (std::size_t b = 0; b < draws.size(); ++b) {
    update_traj_weight(weights_, draws[b].traj, rewards[b], alpha);
    ++weight_updates_;
  }
  return true;
}

}  // namespace adp

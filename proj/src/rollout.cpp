#include "adp/rollout.hpp"

#include "adp/remote.hpp"

#include <algorithm>
#include <chrono>
#include <deque>

namespace adp {
namespace {

ActionSeq gaussian_like(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ActionSeq z(rows, cols);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = n(rng);
  return z;
}

}  // namespace

const char* to_string(SamplerKind kind) {
  return kind == SamplerKind::kDdpm ? "ddpm" : "ddim";
}

SamplerKind parse_sampler_kind(std::string_view s) {
  if (s == "ddpm") return SamplerKind::kDdpm;
  if (s == "ddim") return SamplerKind::kDdim;
  throw RolloutError("unknown sampler '" + std::string(s) + "'");
}

DiffusionPolicy::DiffusionPolicy(DenoiserParams params, NoiseSchedule schedule,
                                 double ddim_eta)
    : params_(std::move(params)), schedule_(std::move(schedule)), eta_(ddim_eta) {
  if (schedule_.T != params_.dims.T) {
    throw RolloutError("schedule length differs from the network's T");
  }
}

DiffusionPolicy::DiffusionPolicy(const PolicyCheckpoint& ckpt, double ddim_eta)
    : DiffusionPolicy(ckpt.params, ckpt.schedule(), ddim_eta) {}

ActionSeq DiffusionPolicy::sample(const Observation& obs, int num_inference_steps,
                                  SamplerKind kind, std::mt19937_64& rng,
                                  std::int64_t& calls) const {
  const int T = schedule_.T;
  if (num_inference_steps < 1 || num_inference_steps > T) {
    throw RolloutError("num_inference_steps must lie in [1, " +
                       std::to_string(T) + "]");
  }
  const int rows = params_.dims.horizon, cols = params_.dims.action_dim;
  const auto tau = strided_timesteps(T, num_inference_steps);
  ActionSeq a = gaussian_like(rows, cols, rng);
  const ActionSeq zero = ActionSeq::Zero(rows, cols);
  if (kind == SamplerKind::kDdpm) {
    const NoiseSchedule sub = num_inference_steps == T
                                  ? schedule_
                                  : strided_schedule(schedule_, num_inference_steps);
    for (int i = num_inference_steps; i >= 1; --i) {
      const ActionSeq eps_hat =
          denoiser_forward(params_, obs, a, tau[static_cast<std::size_t>(i - 1)]);
      ++calls;
      a = ddpm_reverse_step(sub, eps_hat, a, i,
                            i > 1 ? gaussian_like(rows, cols, rng) : zero);
    }
  } else {
    for (int i = num_inference_steps; i >= 1; --i) {
      const int k = tau[static_cast<std::size_t>(i - 1)];
      const int k_prev = i > 1 ? tau[static_cast<std::size_t>(i - 2)] : 0;
      const ActionSeq eps_hat = denoiser_forward(params_, obs, a, k);
      ++calls;
      const bool noisy = eta_ > 0.0 && k_prev > 0;
      a = ddim_reverse_step(schedule_, eps_hat, a, k, k_prev, eta_,
                            noisy ? gaussian_like(rows, cols, rng) : zero);
    }
  }
  return a.cwiseMax(-1.0).cwiseMin(1.0);
}

ActionSeq DiffusionPolicy::plan(const PushEnv& env, int num_inference_steps,
                                SamplerKind kind, std::mt19937_64& rng,
                                std::int64_t& calls) const {
  return sample(env.observation(), num_inference_steps, kind, rng, calls);
}

ActionSeq ExpertPolicy::plan(const PushEnv& env, int, SamplerKind,
                             std::mt19937_64&, std::int64_t&) const {
  PushEnv sim = env;
  ActionSeq out = ActionSeq::Zero(horizon_, PushEnv::kActionDim);
  for (int t = 0; t < horizon_ && !sim.done; ++t) {
    const Eigen::Vector2d a = scripted_expert(sim);
    out.row(t) = a.transpose();
    env_step(sim, a);
  }
  return out;
}

ActionSeq RandomPolicy::plan(const PushEnv&, int, SamplerKind,
                             std::mt19937_64& rng, std::int64_t&) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ActionSeq out(horizon_, PushEnv::kActionDim);
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = u(rng);
  return out;
}

EpisodeResult rollout(const ChunkPolicy& policy, std::uint64_t env_seed,
                      const BudgetSource& budget, const RolloutOptions& opts,
                      std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  EpisodeResult res;
  res.env_seed = env_seed;
  PushEnv env = PushEnv::reset(env_seed, opts.env);
  std::mt19937_64 rng(seed);

  const auto* fixed = std::get_if<FixedBudget>(&budget);
  const auto* hvts = std::get_if<HvtsBudget>(&budget);
  std::optional<SchedulerState> sched;
  if (hvts) {
    if (hvts->classifier == nullptr) throw RolloutError("HVTS budget needs a classifier");
    if (hvts->table.entries.empty()) throw RolloutError("empty schedule table");
    sched = SchedulerState::make(hvts->scheduler, seed ^ 0x2545F4914F6CDD1DULL);
  } else if (fixed->n_action_steps < 1 || fixed->num_inference_steps < 1) {
    throw RolloutError("fixed budget must be positive");
  }

  std::deque<std::vector<std::uint8_t>> frames;
  ActionSeq chunk;
  int chunk_len = 0, chunk_pos = 0;
  while (!env.done) {
    int n_a = 0, n_d = 0, scheduled = -1;
    if (hvts) {
      if (hvts->frame_history > 0) {
        frames.push_back(encode_ppm(letterbox(render_frame(env))));
        while (static_cast<int>(frames.size()) > hvts->frame_history) frames.pop_front();
      }
      const std::vector<std::vector<std::uint8_t>> window(frames.begin(), frames.end());
      ClassifierInput in{static_cast<int>(env.stage), window};
      const TickResult tick = scheduler_tick(*sched, in, *hvts->classifier, hvts->table);
      n_a = tick.n_action_steps;
      n_d = tick.num_inference_steps;
      scheduled = static_cast<int>(tick.stage);
    } else {
      n_a = fixed->n_action_steps;
      n_d = fixed->num_inference_steps;
    }
    if (chunk_pos >= chunk_len) {
      chunk = policy.plan(env, n_d, opts.sampler, rng, res.denoiser_calls);
      chunk_len = std::min<int>(n_a, static_cast<int>(chunk.rows()));
      chunk_pos = 0;
      ++res.replans;
      res.trace.push_back({env.steps, static_cast<int>(env.stage), scheduled, n_a, n_d});
    }
    env_step(env, chunk.row(chunk_pos++).transpose());
  }
  res.control_steps = env.steps;
  res.success = env.success;
  if (env.success) {
    res.success_step = env.steps;
    res.early_success = env.steps <= opts.early_fraction * opts.env.max_steps;
  }
  if (sched) {
    res.classifier_calls = sched->classifier_calls;
    res.classifier_failures = sched->classifier_failures;
  }
  res.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace adp

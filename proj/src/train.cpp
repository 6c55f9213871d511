#include "adp/aln.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace adp {

void TrainConfig::validate() const {
  if (total_steps < 0) throw AlnError("total_steps must be >= 0");
  if (batch_size < 1) throw AlnError("batch_size must be >= 1");
  if (T < 1) throw AlnError("T must be >= 1");
  if (warmup_steps < 0) throw AlnError("warmup_steps must be >= 0");
  if (total_steps > 0 && warmup_steps >= total_steps) {
    throw AlnError("warmup_steps must be smaller than total_steps");
  }
  if (dims.T != T) throw AlnError("denoiser embedding T differs from T");
  if (!(alpha_max > 0 && alpha_max <= 1 && alpha_min > 0 &&
        alpha_min <= alpha_max)) {
    throw AlnError("need 0 < alpha_min <= alpha_max <= 1");
  }
}

SamplerConfig TrainConfig::sampler_config() const {
  SamplerConfig sc;
  sc.T = T;
  sc.embed_dim = sampler_embed_dim;
  sc.hidden = sampler_hidden;
  sc.entropy_coef = entropy_coef;
  sc.warmup_steps = warmup_steps;
  sc.lr = sampler_lr;
  return sc;
}

TrainResult train(const TrainConfig& config, const DemoDataset& dataset,
                  TrainMode mode, const EvalFn& eval) {
  config.validate();
  dataset.validate();
  const auto& dims = config.dims;
  if (dataset.obs_dim != dims.obs_dim || dataset.action_dim != dims.action_dim ||
      dataset.horizon != dims.horizon) {
    throw AlnError("dataset dimensions do not match the denoiser");
  }

  const NoiseSchedule schedule =
      make_noise_schedule(config.T, config.beta_start, config.beta_end);
  TrainResult result;
  result.params = init_params(config.seed, dims);
  AdamState opt = make_optimizer(result.params, config.denoiser_lr);

  AdaptiveSampling adaptive(
      config.sampler_config(), dataset.size(),
      AlphaSchedule{config.alpha_max, config.alpha_min, config.total_steps}, mode,
      config.reward_sign, config.reward_eps, config.seed ^ 0x5851F42D4C957F2DULL);

  std::mt19937_64 rng(config.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto& report = result.report;
  const double uniform_entropy = std::log(static_cast<double>(config.T));

  std::vector<DenoiseSample> batch(static_cast<std::size_t>(config.batch_size));
  for (std::int64_t step = 0; step < config.total_steps; ++step) {
    const auto draws = adaptive.draw(rng, step, config.batch_size);
    for (std::size_t b = 0; b < draws.size(); ++b) {
      const std::size_t i = draws[b].traj;
      std::uniform_int_distribution<int> start_dist(0, dataset.num_windows(i) - 1);
      const int start = start_dist(rng);
      const ActionSeq a0 = dataset.window(i, start);
      ActionSeq eps(a0.rows(), a0.cols());
      for (Eigen::Index e = 0; e < eps.size(); ++e) eps.data()[e] = normal(rng);
      batch[b].obs = &dataset.window_obs(i, start);
      batch[b].noisy = forward_noise(schedule, a0, draws[b].k, eps);
      batch[b].k = draws[b].k;
      batch[b].eps = std::move(eps);
    }
    const auto lg = denoiser_batch_backward(result.params, batch);
    optimizer_step(result.params, lg.grads, opt);
    ++report.gradient_steps;

    const bool adapted = adaptive.feedback(draws, lg.per_sample, step);
    const std::int64_t done = step + 1;
    report.step.push_back(done);
    report.loss.push_back(lg.mean_loss);
    report.sampler_entropy.push_back(
        adapted ? entropy(adaptive.sampler().probs()) : uniform_entropy);
    const bool eval_now =
        eval && ((config.eval_every > 0 && done % config.eval_every == 0) ||
                 done == config.total_steps);
    report.eval_success.push_back(
        eval_now ? std::optional<double>(eval(result.params, done))
                 : std::nullopt);
    if (config.snapshot_every > 0 && done % config.snapshot_every == 0) {
      report.sampler_snapshots.emplace_back(
          done, mode == TrainMode::kAln && adapted
                    ? adaptive.sampler().probs()
                    : std::vector<double>(static_cast<std::size_t>(config.T),
                                          1.0 / config.T));
      report.weight_snapshots.emplace_back(done, adaptive.weights().w);
    }
  }
  result.sampler_probs = adaptive.sampler().probs();
  result.traj_weights = adaptive.weights().w;
  return result;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

void write_report_csv(const std::filesystem::path& path, const TrainReport& r) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "step,loss,eval_success,sampler_entropy\n";
  for (std::size_t i = 0; i < r.step.size(); ++i) {
    os << r.step[i] << ',' << fmt_double(r.loss[i]) << ',';
    if (r.eval_success[i]) os << fmt_double(*r.eval_success[i]);
    os << ',' << fmt_double(r.sampler_entropy[i]) << '\n';
  }
}

void write_snapshots_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::int64_t, std::vector<double>>>& snaps,
    const char* prefix) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << "step";
  const std::size_t n = snaps.empty() ? 0 : snaps.front().second.size();
  for (std::size_t j = 0; j < n; ++j) os << ',' << prefix << (j + 1);
  os << '\n';
  for (const auto& [step, values] : snaps) {
    os << step;
    for (double v : values) os << ',' << fmt_double(v);
    os << '\n';
  }
}

}  // namespace adp

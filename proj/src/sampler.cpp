#include "adp/aln.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace adp {
namespace {

Eigen::VectorXd log_softmax(const Eigen::VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

Eigen::VectorXd compute_logits(const TimestepSampler& ts,
                               const Eigen::VectorXd& params) {
  return Mlp(ts.shape(), params).forward(ts.embeddings()).row(0).transpose();
}

void check_batch(const TimestepSampler& ts, std::span<const int> ks,
                 std::span<const double> rewards) {
  if (ks.size() != rewards.size()) {
    throw AlnError("sampler objective: step and reward counts differ");
  }
  for (int k : ks) {
    if (k < 1 || k > ts.T()) throw AlnError("sampled step outside [1, T]");
  }
}

}  // namespace

TimestepSampler::TimestepSampler(const SamplerConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.T < 1) throw AlnError("sampler needs T >= 1");
  if (cfg.entropy_coef < 0) throw AlnError("entropy coefficient must be >= 0");
  std::vector<Eigen::Index> widths{cfg.embed_dim};
  for (int h : cfg.hidden) widths.push_back(h);
  widths.push_back(1);
  shape_ = MlpShape(std::move(widths));
  embed_ = sinusoidal_table(cfg.embed_dim, cfg.T);
  params_ = init_mlp_params(shape_, seed);
  opt_ = AdamState::for_size(shape_.num_params(), cfg.lr);
  refresh();
}

void TimestepSampler::set_phase_for_step(std::int64_t step_count) {
  phase_ = step_count >= cfg_.warmup_steps ? SamplerPhase::kAdaptive
                                           : SamplerPhase::kWarmup;
}

void TimestepSampler::set_params(Eigen::VectorXd params) {
  if (params.size() != shape_.num_params()) {
    throw AlnError("sampler parameter vector has the wrong size");
  }
  params_ = std::move(params);
  refresh();
}

void TimestepSampler::refresh() {
  logits_ = compute_logits(*this, params_);
  probs_ = softmax(logits_);
  dist_ = std::discrete_distribution<int>(probs_.begin(), probs_.end());
}

std::vector<double> softmax(const Eigen::VectorXd& logits) {
  const Eigen::VectorXd lp = log_softmax(logits);
  std::vector<double> p(static_cast<std::size_t>(lp.size()));
  for (Eigen::Index i = 0; i < lp.size(); ++i) {
    p[static_cast<std::size_t>(i)] =
        std::max(std::exp(lp[i]), std::numeric_limits<double>::min());
  }
  return p;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0) h -= v * std::log(v);
  }
  return h;
}

std::vector<double> sampler_distribution(const TimestepSampler& ts) {
  return ts.probs();
}

int sample_timestep(TimestepSampler& ts, std::mt19937_64& rng,
                    std::int64_t step_count) {
  if (step_count < 0) throw AlnError("step count must be >= 0");
  if (step_count < ts.config().warmup_steps) {
    std::uniform_int_distribution<int> uni(1, ts.T());
    return uni(rng);
  }
  return ts.draw_dist()(rng) + 1;
}

std::vector<double> normalize_rewards(std::span<const double> losses,
                                      double eps, RewardSign sign) {
  std::vector<double> r(losses.size(), 0.0);
  if (losses.empty()) return r;
  const double n = static_cast<double>(losses.size());
  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) / n;
  double var = 0.0;
  for (double l : losses) var += (l - mean) * (l - mean);
  const double sd = std::sqrt(var / n);
  const double s = sign == RewardSign::kPositive ? 1.0 : -1.0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    r[i] = s * (losses[i] - mean) / (sd + eps);
  }
  return r;
}

double sampler_objective(const TimestepSampler& ts, const Eigen::VectorXd& params,
                         std::span<const int> ks,
                         std::span<const double> rewards) {
  check_batch(ts, ks, rewards);
  const Eigen::VectorXd lp = log_softmax(compute_logits(ts, params));
  double j = 0.0;
  for (std::size_t b = 0; b < ks.size(); ++b) j -= rewards[b] * lp[ks[b] - 1];
  const double h = -(lp.array().exp() * lp.array()).sum();
  return j - ts.config().entropy_coef * h;
}

double sampler_objective(const TimestepSampler& ts, std::span<const int> ks,
                         std::span<const double> rewards) {
  return sampler_objective(ts, ts.params(), ks, rewards);
}

Eigen::VectorXd sampler_objective_grad(const TimestepSampler& ts,
                                       std::span<const int> ks,
                                       std::span<const double> rewards) {
  check_batch(ts, ks, rewards);
  const Mlp net(ts.shape(), ts.params());
  MlpTape tape;
  const Eigen::VectorXd z = net.forward(ts.embeddings(), tape).row(0).transpose();
  const Eigen::VectorXd lp = log_softmax(z);
  const Eigen::VectorXd p = lp.array().exp();
  const double h = -(p.array() * lp.array()).sum();
  const double r_sum = std::accumulate(rewards.begin(), rewards.end(), 0.0);
  const double lambda = ts.config().entropy_coef;

  // dJ/dz_j = -sum_b r_b [j == k_b] + p_j sum_b r_b + lambda p_j (log p_j + H)
  Eigen::VectorXd dz =
      p.array() * r_sum + lambda * p.array() * (lp.array() + h);
  for (std::size_t b = 0; b < ks.size(); ++b) dz[ks[b] - 1] -= rewards[b];

  Eigen::VectorXd grad = Eigen::VectorXd::Zero(ts.shape().num_params());
  net.backward(tape, dz.transpose(), grad);
  return grad;
}

void sampler_update(TimestepSampler& ts, std::span<const int> ks,
                    std::span<const double> rewards, double lr) {
  if (ts.phase() != SamplerPhase::kAdaptive) {
    throw AlnError("sampler_update called during warmup");
  }
  const Eigen::VectorXd grad = sampler_objective_grad(ts, ks, rewards);
  Eigen::VectorXd params = ts.params();
  ts.optimizer().lr = lr;
  adam_step(params, grad, ts.optimizer());
  ts.set_params(std::move(params));
}

void sampler_update(TimestepSampler& ts, int k, double reward, double lr) {
  sampler_update(ts, std::span<const int>(&k, 1),
                 std::span<const double>(&reward, 1), lr);
}

}  // namespace adp

#include "adp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace adp {
namespace {

void require_same_shape(const ActionSeq& a, const ActionSeq& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DiffusionError(std::string(what) + ": shape mismatch (" +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()) + ")");
  }
}

}  // namespace

std::size_t NoiseSchedule::index(int k) const {
  if (k < 1 || k > T) {
    throw DiffusionError("step index " + std::to_string(k) +
                         " outside [1, " + std::to_string(T) + "]");
  }
  return static_cast<std::size_t>(k - 1);
}

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) throw DiffusionError("schedule needs T >= 1");
  NoiseSchedule s;
  s.T = static_cast<int>(betas.size());
  s.alpha.resize(betas.size());
  s.alpha_bar.resize(betas.size());
  s.sigma.resize(betas.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < betas.size(); ++i) {
    const double b = betas[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw DiffusionError("beta must lie in (0, 1), got " + std::to_string(b));
    }
    s.alpha[i] = 1.0 - b;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
    s.sigma[i] = std::sqrt(b);
  }
  s.beta = std::move(betas);
  return s;
}

NoiseSchedule make_noise_schedule(int T, double beta_start, double beta_end,
                                  ScheduleKind kind) {
  if (T < 1) throw DiffusionError("schedule needs T >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw DiffusionError("need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(T));
  switch (kind) {
    case ScheduleKind::kLinear:
      for (int i = 0; i < T; ++i) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(i) / (T - 1);
        betas[static_cast<std::size_t>(i)] =
            beta_start + frac * (beta_end - beta_start);
      }
      break;
  }
  return schedule_from_betas(std::move(betas));
}

std::vector<int> strided_timesteps(int T, int num_steps) {
  if (num_steps < 1 || num_steps > T) {
    throw DiffusionError("number of sampling steps " +
                         std::to_string(num_steps) + " outside [1, " +
                         std::to_string(T) + "]");
  }
  std::vector<int> tau(static_cast<std::size_t>(num_steps));
  for (int i = 1; i <= num_steps; ++i) {
    tau[static_cast<std::size_t>(i - 1)] =
        static_cast<int>((static_cast<long long>(i) * T) / num_steps);
  }
  return tau;
}

NoiseSchedule strided_schedule(const NoiseSchedule& s, int num_steps) {
  const auto tau = strided_timesteps(s.T, num_steps);
  std::vector<double> betas(tau.size());
  int prev = 0;
  for (std::size_t i = 0; i < tau.size(); ++i) {
    betas[i] = 1.0 - s.alpha_bar_at(tau[i]) / s.alpha_bar_at(prev);
    prev = tau[i];
  }
  return schedule_from_betas(std::move(betas));
}

ActionSeq forward_noise(const NoiseSchedule& s, const ActionSeq& a0, int k,
                        const ActionSeq& eps) {
  require_same_shape(a0, eps, "forward_noise");
  const double ab = s.alpha_bar[s.index(k)];
  return std::sqrt(ab) * a0 + std::sqrt(1.0 - ab) * eps;
}

ScaledUpdate scaled_update_coefficients(const NoiseSchedule& s, int k) {
  const auto i = s.index(k);
  return {1.0 / std::sqrt(s.alpha[i]),
          (1.0 - s.alpha[i]) / std::sqrt(1.0 - s.alpha_bar[i]), s.sigma[i]};
}

ActionSeq ddpm_reverse_step(const NoiseSchedule& s, const ActionSeq& eps_hat,
                            const ActionSeq& ak, int k, const ActionSeq& z) {
  require_same_shape(ak, eps_hat, "ddpm_reverse_step");
  require_same_shape(ak, z, "ddpm_reverse_step");
  const auto c = scaled_update_coefficients(s, k);
  if (k == 1 && !z.isZero(0.0)) {
    throw DiffusionError("ddpm_reverse_step: noise must be zero at k = 1");
  }
  return c.outer * (ak - c.gamma * eps_hat) + c.sigma * z;
}

ActionSeq predict_clean(const NoiseSchedule& s, const ActionSeq& eps_hat,
                        const ActionSeq& ak, int k) {
  require_same_shape(ak, eps_hat, "predict_clean");
  const double ab = s.alpha_bar[s.index(k)];
  return (ak - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

double ddim_sigma(const NoiseSchedule& s, int k, int k_prev, double eta) {
  if (k_prev >= k || k_prev < 0) {
    throw DiffusionError("ddim step needs 0 <= k_prev < k");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw DiffusionError("eta must lie in [0, 1]");
  }
  const double ab = s.alpha_bar[s.index(k)];
  const double ab_prev = s.alpha_bar_at(k_prev);
  return eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) *
         std::sqrt(1.0 - ab / ab_prev);
}

ActionSeq ddim_reverse_step(const NoiseSchedule& s, const ActionSeq& eps_hat,
                            const ActionSeq& ak, int k, int k_prev, double eta,
                            const ActionSeq& z) {
  require_same_shape(ak, z, "ddim_reverse_step");
  const double sig = ddim_sigma(s, k, k_prev, eta);
  const ActionSeq x0 = predict_clean(s, eps_hat, ak, k);
  const double ab_prev = s.alpha_bar_at(k_prev);
  // Clamp guards against a tiny negative from rounding when eta = 1.
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sig * sig));
  return std::sqrt(ab_prev) * x0 + dir * eps_hat + sig * z;
}

double mse_loss(const ActionSeq& eps, const ActionSeq& eps_hat) {
  require_same_shape(eps, eps_hat, "mse_loss");
  if (eps.size() == 0) return 0.0;
  return (eps - eps_hat).squaredNorm() / static_cast<double>(eps.size());
}

TimestepWeights theoretical_weights(const NoiseSchedule& s) {
  TimestepWeights out;
  out.w.resize(static_cast<std::size_t>(s.T));
  for (std::size_t i = 0; i < out.w.size(); ++i) {
    out.w[i] = s.beta[i] * s.beta[i] /
               (2.0 * s.alpha[i] * (1.0 - s.alpha_bar[i]));
  }
  const double total = std::accumulate(out.w.begin(), out.w.end(), 0.0);
  out.q.resize(out.w.size());
  for (std::size_t i = 0; i < out.w.size(); ++i) out.q[i] = out.w[i] / total;
  return out;
}

double weighted_loss(const NoiseSchedule& s, const ActionSeq& eps,
                     const ActionSeq& eps_hat, int k) {
  const auto i = s.index(k);
  const double w =
      s.beta[i] * s.beta[i] / (2.0 * s.alpha[i] * (1.0 - s.alpha_bar[i]));
  return w * mse_loss(eps, eps_hat);
}

}  // namespace adp

#pragma once

// Discrete-time diffusion mathematics shared by training and sampling.
//
// Step indices are 1-based (k = 1..T) everywhere in the public API; the
// coefficient tables are stored 0-based, so alpha_bar[0] is the product up to
// step 1. Everything here is a pure function of its arguments and all
// randomness is supplied by the caller.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace adp {

/// Action chunk of shape (prediction horizon x action dim). Row-major so that
/// the flattened view is time-major.
using ActionSeq =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Low-dimensional observation features.
using Observation = Eigen::VectorXd;

class DiffusionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class ScheduleKind { kLinear };

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;

  double beta_at(int k) const { return beta[index(k)]; }
  double alpha_at(int k) const { return alpha[index(k)]; }
  // alpha_bar_at(0) is 1 by convention (clean data).
  double alpha_bar_at(int k) const {
    return k == 0 ? 1.0 : alpha_bar[index(k)];
  }
  double sigma_at(int k) const { return sigma[index(k)]; }

  // Throws DiffusionError unless 1 <= k <= T.
  std::size_t index(int k) const;
};

NoiseSchedule make_noise_schedule(int T, double beta_start, double beta_end,
                                  ScheduleKind kind = ScheduleKind::kLinear);

/// Builds a schedule from explicit betas (each in (0, 1)).
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// Evenly spaced subsequence tau_1 < ... < tau_S = T with tau_i = floor(i*T/S).
std::vector<int> strided_timesteps(int T, int num_steps);

/// Re-derives a num_steps-long schedule over the timesteps returned by
/// strided_timesteps: beta'_i = 1 - alpha_bar(tau_i) / alpha_bar(tau_{i-1}),
/// so the cumulative products agree with the parent at every retained step.
NoiseSchedule strided_schedule(const NoiseSchedule& s, int num_steps);

/// sqrt(alpha_bar_k) * a0 + sqrt(1 - alpha_bar_k) * eps.
ActionSeq forward_noise(const NoiseSchedule& s, const ActionSeq& a0, int k,
                        const ActionSeq& eps);

/// One ancestral step from level k to k - 1:
///   (a_k - (1 - alpha_k) / sqrt(1 - alpha_bar_k) * eps_hat) / sqrt(alpha_k)
///     + sigma_k * z
/// z must be all zeros at k = 1.
ActionSeq ddpm_reverse_step(const NoiseSchedule& s, const ActionSeq& eps_hat,
                            const ActionSeq& ak, int k, const ActionSeq& z);

/// Coefficients of the "scaled update plus Gaussian" form of the same step:
/// a_{k-1} = outer * (a_k - gamma * eps_hat) + N(0, sigma^2 I).
struct ScaledUpdate {
  double outer;
  double gamma;
  double sigma;
};
ScaledUpdate scaled_update_coefficients(const NoiseSchedule& s, int k);

/// Non-Markovian step from level k to k_prev < k (k_prev = 0 is the clean
/// level). eta = 0 is deterministic; eta = 1 at k_prev = k - 1 reproduces the
/// ancestral posterior.
ActionSeq ddim_reverse_step(const NoiseSchedule& s, const ActionSeq& eps_hat,
                            const ActionSeq& ak, int k, int k_prev, double eta,
                            const ActionSeq& z);

/// Clean-sample estimate implied by a noise prediction at level k.
ActionSeq predict_clean(const NoiseSchedule& s, const ActionSeq& eps_hat,
                        const ActionSeq& ak, int k);

/// Standard deviation of the DDIM re-noising term.
double ddim_sigma(const NoiseSchedule& s, int k, int k_prev, double eta);

/// Mean of squared differences over all T_p * d_a entries.
double mse_loss(const ActionSeq& eps, const ActionSeq& eps_hat);

struct TimestepWeights {
  std::vector<double> w;  // beta_k^2 / (2 alpha_k (1 - alpha_bar_k))
  std::vector<double> q;  // w / sum(w)
};
TimestepWeights theoretical_weights(const NoiseSchedule& s);

/// w_k * mse_loss(eps, eps_hat). The mean reduction of mse_loss carries over,
/// so this equals the squared-norm form divided by the entry count.
double weighted_loss(const NoiseSchedule& s, const ActionSeq& eps,
                     const ActionSeq& eps_hat, int k);

}  // namespace adp

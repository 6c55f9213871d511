#pragma once

// Noise-prediction network eps_theta(obs, a_k, k): a fully connected network
// over concat(obs, flattened a_k, sinusoidal(k)) that outputs a T_p x d_a
// noise estimate.

#include "adp/diffusion.hpp"
#include "adp/mlp.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace adp {

/// Interleaved (sin, cos) pairs at geometrically spaced frequencies
/// f_j = 10000^(-j / (dim/2)). Requires an even dim and 0 <= k <= T.
Eigen::VectorXd sinusoidal_embed(int k, int dim, int T);

/// Embeddings of k = 1..T stacked as columns (dim x T).
Eigen::MatrixXd sinusoidal_table(int dim, int T);

struct DenoiserDims {
  int obs_dim = 6;
  int horizon = 16;     // T_p
  int action_dim = 2;   // d_a
  int embed_dim = 128;
  int T = 100;          // diffusion steps the embedding covers
  std::vector<int> hidden = {256, 256, 256};

  int action_size() const { return horizon * action_dim; }
  int input_dim() const { return obs_dim + action_size() + embed_dim; }
  MlpShape shape() const;
  bool operator==(const DenoiserDims&) const = default;
};

struct DenoiserParams {
  DenoiserDims dims;
  MlpShape shape;
  Eigen::VectorXd flat;
};

using DenoiserGrads = Eigen::VectorXd;

DenoiserParams init_params(std::uint64_t seed, const DenoiserDims& dims);

/// All-zero parameters (useful as a degenerate reference network).
DenoiserParams zero_params(const DenoiserDims& dims);

ActionSeq denoiser_forward(const DenoiserParams& p, const Observation& obs,
                           const ActionSeq& ak, int k);

struct LossAndGrad {
  double loss = 0.0;
  DenoiserGrads grads;
};

/// loss = mse_loss(eps, forward(obs, ak, k)) and its exact gradient.
LossAndGrad denoiser_backward(const DenoiserParams& p, const Observation& obs,
                              const ActionSeq& ak, int k, const ActionSeq& eps);

/// One training example for the batched path.
struct DenoiseSample {
  const Observation* obs;
  ActionSeq noisy;
  int k;
  ActionSeq eps;
};

struct BatchLossAndGrad {
  std::vector<double> per_sample;  // mse per element
  double mean_loss = 0.0;
  DenoiserGrads grads;             // gradient of mean_loss
};

BatchLossAndGrad denoiser_batch_backward(const DenoiserParams& p,
                                         std::span<const DenoiseSample> batch);

/// Adaptive-moment update of the network parameters in place.
void optimizer_step(DenoiserParams& p, const DenoiserGrads& grads,
                    AdamState& st);

AdamState make_optimizer(const DenoiserParams& p, double lr = 1e-3);

/// Trained policy on disk: network plus the linear beta schedule it was
/// trained with.
struct PolicyCheckpoint {
  DenoiserParams params;
  double beta_start = 1e-3;
  double beta_end = 0.2;

  NoiseSchedule schedule() const;
};

void save_checkpoint(const std::filesystem::path& path,
                     const PolicyCheckpoint& ckpt);
PolicyCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace adp

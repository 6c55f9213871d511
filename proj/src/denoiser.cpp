#include "adp/denoiser.hpp"

#include "adp/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace adp {
namespace {

constexpr std::string_view kCheckpointMagic = "ADPCKPT1";
constexpr std::uint32_t kCheckpointVersion = 1;

void check_inputs(const DenoiserDims& d, const Observation& obs,
                  const ActionSeq& ak) {
  if (obs.size() != d.obs_dim) {
    throw std::invalid_argument("observation has " + std::to_string(obs.size()) +
                                " entries, expected " +
                                std::to_string(d.obs_dim));
  }
  if (ak.rows() != d.horizon || ak.cols() != d.action_dim) {
    throw std::invalid_argument("action sequence shape mismatch");
  }
}

void fill_input(const DenoiserDims& d, const Observation& obs,
                const ActionSeq& ak, int k, Eigen::Ref<Eigen::VectorXd> col) {
  col.head(d.obs_dim) = obs;
  col.segment(d.obs_dim, d.action_size()) =
      Eigen::Map<const Eigen::VectorXd>(ak.data(), d.action_size());
  col.tail(d.embed_dim) = sinusoidal_embed(k, d.embed_dim, d.T);
}

ActionSeq to_action_seq(const DenoiserDims& d, const Eigen::VectorXd& v) {
  return Eigen::Map<const ActionSeq>(v.data(), d.horizon, d.action_dim);
}

}  // namespace

Eigen::VectorXd sinusoidal_embed(int k, int dim, int T) {
  if (dim <= 0 || dim % 2 != 0) {
    throw std::invalid_argument("embedding dim must be even and positive");
  }
  if (k < 0 || k > T) {
    throw std::invalid_argument("step index outside [0, T]");
  }
  const int half = dim / 2;
  Eigen::VectorXd e(dim);
  for (int j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * j / half);
    e[2 * j] = std::sin(k * freq);
    e[2 * j + 1] = std::cos(k * freq);
  }
  return e;
}

Eigen::MatrixXd sinusoidal_table(int dim, int T) {
  Eigen::MatrixXd table(dim, T);
  for (int k = 1; k <= T; ++k) table.col(k - 1) = sinusoidal_embed(k, dim, T);
  return table;
}

MlpShape DenoiserDims::shape() const {
  if (obs_dim <= 0 || horizon <= 0 || action_dim <= 0 || embed_dim <= 0 ||
      T <= 0) {
    throw std::invalid_argument("denoiser dimensions must be positive");
  }
  std::vector<Eigen::Index> widths{input_dim()};
  for (int h : hidden) widths.push_back(h);
  widths.push_back(action_size());
  return MlpShape(std::move(widths));
}

DenoiserParams init_params(std::uint64_t seed, const DenoiserDims& dims) {
  DenoiserParams p{dims, dims.shape(), {}};
  p.flat = init_mlp_params(p.shape, seed);
  return p;
}

DenoiserParams zero_params(const DenoiserDims& dims) {
  DenoiserParams p{dims, dims.shape(), {}};
  p.flat = Eigen::VectorXd::Zero(p.shape.num_params());
  return p;
}

ActionSeq denoiser_forward(const DenoiserParams& p, const Observation& obs,
                           const ActionSeq& ak, int k) {
  check_inputs(p.dims, obs, ak);
  Eigen::MatrixXd x(p.dims.input_dim(), 1);
  fill_input(p.dims, obs, ak, k, x.col(0));
  const Eigen::VectorXd out = Mlp(p.shape, p.flat).forward(x).col(0);
  return to_action_seq(p.dims, out);
}

LossAndGrad denoiser_backward(const DenoiserParams& p, const Observation& obs,
                              const ActionSeq& ak, int k,
                              const ActionSeq& eps) {
  check_inputs(p.dims, obs, ak);
  if (eps.rows() != ak.rows() || eps.cols() != ak.cols()) {
    throw std::invalid_argument("target noise shape mismatch");
  }
  DenoiseSample s{&obs, ak, k, eps};
  auto b = denoiser_batch_backward(p, std::span<const DenoiseSample>(&s, 1));
  return {b.mean_loss, std::move(b.grads)};
}

BatchLossAndGrad denoiser_batch_backward(const DenoiserParams& p,
                                         std::span<const DenoiseSample> batch) {
  const auto& d = p.dims;
  const Eigen::Index n = static_cast<Eigen::Index>(batch.size());
  BatchLossAndGrad out;
  out.grads = Eigen::VectorXd::Zero(p.shape.num_params());
  if (n == 0) return out;

  Eigen::MatrixXd x(d.input_dim(), n);
  Eigen::MatrixXd target(d.action_size(), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto& s = batch[static_cast<std::size_t>(j)];
    check_inputs(d, *s.obs, s.noisy);
    if (s.eps.rows() != d.horizon || s.eps.cols() != d.action_dim) {
      throw std::invalid_argument("target noise shape mismatch");
    }
    fill_input(d, *s.obs, s.noisy, s.k, x.col(j));
    target.col(j) = Eigen::Map<const Eigen::VectorXd>(s.eps.data(),
                                                      d.action_size());
  }

  const Mlp net(p.shape, p.flat);
  MlpTape tape;
  const Eigen::MatrixXd pred = net.forward(x, tape);
  const Eigen::MatrixXd diff = pred - target;
  const double m = static_cast<double>(d.action_size());
  out.per_sample.resize(batch.size());
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double l = diff.col(j).squaredNorm() / m;
    out.per_sample[static_cast<std::size_t>(j)] = l;
    total += l;
  }
  out.mean_loss = total / static_cast<double>(n);
  // d(mean over batch of mean over entries)/d(pred) = 2 diff / (m n)
  const Eigen::MatrixXd grad_out = (2.0 / (m * static_cast<double>(n))) * diff;
  net.backward(tape, grad_out, out.grads);
  return out;
}

void optimizer_step(DenoiserParams& p, const DenoiserGrads& grads,
                    AdamState& st) {
  adam_step(p.flat, grads, st);
}

AdamState make_optimizer(const DenoiserParams& p, double lr) {
  return AdamState::for_size(p.flat.size(), lr);
}

NoiseSchedule PolicyCheckpoint::schedule() const {
  return make_noise_schedule(params.dims.T, beta_start, beta_end);
}

void save_checkpoint(const std::filesystem::path& path,
                     const PolicyCheckpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  const auto& d = ckpt.params.dims;
  binio::write_magic(os, kCheckpointMagic);
  binio::write_u32(os, kCheckpointVersion);
  binio::write_u32(os, static_cast<std::uint32_t>(d.obs_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(d.horizon));
  binio::write_u32(os, static_cast<std::uint32_t>(d.action_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(d.embed_dim));
  binio::write_u32(os, static_cast<std::uint32_t>(d.T));
  binio::write_u32(os, static_cast<std::uint32_t>(d.hidden.size()));
  for (int h : d.hidden) binio::write_u32(os, static_cast<std::uint32_t>(h));
  binio::write_f64(os, ckpt.beta_start);
  binio::write_f64(os, ckpt.beta_end);
  binio::write_u64(os, static_cast<std::uint64_t>(ckpt.params.flat.size()));
  for (Eigen::Index i = 0; i < ckpt.params.flat.size(); ++i) {
    binio::write_f64(os, ckpt.params.flat[i]);
  }
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

PolicyCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  binio::expect_magic(is, kCheckpointMagic);
  if (binio::read_u32(is) != kCheckpointVersion) {
    throw binio::FormatError("unsupported checkpoint version");
  }
  DenoiserDims d;
  d.obs_dim = static_cast<int>(binio::read_u32(is));
  d.horizon = static_cast<int>(binio::read_u32(is));
  d.action_dim = static_cast<int>(binio::read_u32(is));
  d.embed_dim = static_cast<int>(binio::read_u32(is));
  d.T = static_cast<int>(binio::read_u32(is));
  const std::uint32_t n_hidden = binio::read_u32(is);
  if (n_hidden > 64) throw binio::FormatError("implausible layer count");
  d.hidden.resize(n_hidden);
  for (auto& h : d.hidden) h = static_cast<int>(binio::read_u32(is));
  PolicyCheckpoint ckpt;
  ckpt.beta_start = binio::read_f64(is);
  ckpt.beta_end = binio::read_f64(is);
  ckpt.params = zero_params(d);
  const std::uint64_t n = binio::read_u64(is);
  if (n != static_cast<std::uint64_t>(ckpt.params.flat.size())) {
    throw binio::FormatError("parameter count does not match header dims");
  }
  for (Eigen::Index i = 0; i < ckpt.params.flat.size(); ++i) {
    ckpt.params.flat[i] = binio::read_f64(is);
  }
  return ckpt;
}

}  // namespace adp

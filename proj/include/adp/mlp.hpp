#pragma once

// Fully connected network with SiLU hidden activations and a linear output.
// Parameters live in one flat vector (per layer: weight matrix in column-major
// order, then bias) so optimizers, checkpoints and finite-difference probes can
// treat them uniformly. Activations are laid out one sample per column.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace adp {

class MlpShape {
 public:
  MlpShape() = default;
  /// widths = {input, hidden..., output}; every width must be positive.
  explicit MlpShape(std::vector<Eigen::Index> widths);

  const std::vector<Eigen::Index>& widths() const { return widths_; }
  Eigen::Index input_dim() const { return widths_.front(); }
  Eigen::Index output_dim() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }
  Eigen::Index num_params() const { return num_params_; }
  // Offset of layer l's weight block inside the flat vector; its bias follows.
  Eigen::Index weight_offset(std::size_t l) const { return offsets_[l]; }

  bool operator==(const MlpShape&) const = default;

 private:
  std::vector<Eigen::Index> widths_;
  std::vector<Eigen::Index> offsets_;
  Eigen::Index num_params_ = 0;
};

/// Intermediate values kept by a forward pass for the backward pass.
struct MlpTape {
  std::vector<Eigen::MatrixXd> inputs;  // input to each layer
  std::vector<Eigen::MatrixXd> pre;     // pre-activation of each hidden layer
};

double silu(double x);
double silu_grad(double x);

/// Stateless evaluation helpers over (shape, flat params).
class Mlp {
 public:
  Mlp(const MlpShape& shape, const Eigen::VectorXd& params);

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, MlpTape& tape) const;

  /// Accumulates d(loss)/d(params) into grad (which must be sized
  /// num_params) given d(loss)/d(output). Returns d(loss)/d(input).
  Eigen::MatrixXd backward(const MlpTape& tape, const Eigen::MatrixXd& grad_out,
                           Eigen::VectorXd& grad) const;

 private:
  using ConstMap = Eigen::Map<const Eigen::MatrixXd>;
  using ConstVecMap = Eigen::Map<const Eigen::VectorXd>;
  ConstMap weight(std::size_t l) const;
  ConstVecMap bias(std::size_t l) const;

  const MlpShape& shape_;
  const Eigen::VectorXd& params_;
};

/// Fan-in scaled uniform initialisation: weights ~ U(-g/sqrt(fan_in),
/// g/sqrt(fan_in)) with g = sqrt(3) (unit-variance preactivations for unit
/// inputs), biases zero.
Eigen::VectorXd init_mlp_params(const MlpShape& shape, std::uint64_t seed);

/// Bias-corrected adaptive-moment optimizer state.
struct AdamState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_size(Eigen::Index n, double lr = 1e-3);
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& st);

}  // namespace adp

#include "adp/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace adp {

MlpShape::MlpShape(std::vector<Eigen::Index> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2) {
    throw std::invalid_argument("an MLP needs at least input and output widths");
  }
  for (auto w : widths_) {
    if (w <= 0) throw std::invalid_argument("MLP layer widths must be positive");
  }
  offsets_.reserve(widths_.size() - 1);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    offsets_.push_back(off);
    off += widths_[l] * widths_[l + 1] + widths_[l + 1];
  }
  num_params_ = off;
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

double silu_grad(double x) {
  const double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}

Mlp::Mlp(const MlpShape& shape, const Eigen::VectorXd& params)
    : shape_(shape), params_(params) {
  if (params.size() != shape.num_params()) {
    throw std::invalid_argument("parameter vector has " +
                                std::to_string(params.size()) +
                                " entries, shape expects " +
                                std::to_string(shape.num_params()));
  }
}

Mlp::ConstMap Mlp::weight(std::size_t l) const {
  const auto& w = shape_.widths();
  return ConstMap(params_.data() + shape_.weight_offset(l), w[l + 1], w[l]);
}

Mlp::ConstVecMap Mlp::bias(std::size_t l) const {
  const auto& w = shape_.widths();
  return ConstVecMap(
      params_.data() + shape_.weight_offset(l) + w[l] * w[l + 1], w[l + 1]);
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (x.rows() != shape_.input_dim()) {
    throw std::invalid_argument("MLP input has " + std::to_string(x.rows()) +
                                " rows, expected " +
                                std::to_string(shape_.input_dim()));
  }
  Eigen::MatrixXd h = x;
  const std::size_t n = shape_.num_layers();
  for (std::size_t l = 0; l < n; ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (l + 1 < n) z = z.unaryExpr(&silu);
    h = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, MlpTape& tape) const {
  if (x.rows() != shape_.input_dim()) {
    throw std::invalid_argument("MLP input has " + std::to_string(x.rows()) +
                                " rows, expected " +
                                std::to_string(shape_.input_dim()));
  }
  const std::size_t n = shape_.num_layers();
  tape.inputs.resize(n);
  tape.pre.resize(n - 1);
  tape.inputs[0] = x;
  Eigen::MatrixXd out;
  for (std::size_t l = 0; l < n; ++l) {
    Eigen::MatrixXd z = weight(l) * tape.inputs[l];
    z.colwise() += bias(l);
    if (l + 1 < n) {
      tape.inputs[l + 1] = z.unaryExpr(&silu);
      tape.pre[l] = std::move(z);
    } else {
      out = std::move(z);
    }
  }
  return out;
}

Eigen::MatrixXd Mlp::backward(const MlpTape& tape,
                              const Eigen::MatrixXd& grad_out,
                              Eigen::VectorXd& grad) const {
  if (grad.size() != shape_.num_params()) {
    throw std::invalid_argument("gradient buffer has the wrong size");
  }
  const auto& w = shape_.widths();
  Eigen::MatrixXd g = grad_out;
  for (std::size_t l = shape_.num_layers(); l-- > 0;) {
    const Eigen::Index off = shape_.weight_offset(l);
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + off, w[l + 1], w[l]);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + off + w[l] * w[l + 1],
                                   w[l + 1]);
    gw.noalias() += g * tape.inputs[l].transpose();
    gb += g.rowwise().sum();
    Eigen::MatrixXd g_in = weight(l).transpose() * g;
    if (l > 0) {
      g_in.array() *= tape.pre[l - 1].unaryExpr(&silu_grad).array();
    }
    g = std::move(g_in);
  }
  return g;
}

Eigen::VectorXd init_mlp_params(const MlpShape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(shape.num_params());
  const auto& w = shape.widths();
  for (std::size_t l = 0; l < shape.num_layers(); ++l) {
    const double bound = std::sqrt(3.0 / static_cast<double>(w[l]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Eigen::Index off = shape.weight_offset(l);
    for (Eigen::Index i = 0; i < w[l] * w[l + 1]; ++i) p[off + i] = dist(rng);
  }
  return p;
}

AdamState AdamState::for_size(Eigen::Index n, double lr) {
  AdamState st;
  st.m = Eigen::VectorXd::Zero(n);
  st.v = Eigen::VectorXd::Zero(n);
  st.lr = lr;
  return st;
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad,
               AdamState& st) {
  if (grad.size() != params.size() || st.m.size() != params.size() ||
      st.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: mismatched sizes");
  }
  ++st.step;
  st.m = st.beta1 * st.m + (1.0 - st.beta1) * grad;
  st.v = st.beta2 * st.v + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  params.array() -= st.lr * (st.m.array() / c1) /
                    ((st.v.array() / c2).sqrt() + st.eps);
}

}  // namespace adp

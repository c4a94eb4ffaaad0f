#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "rlpp/core.hpp"

namespace rlpp::sac {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Fully connected ReLU network. All weights and biases live in one flat
/// vector (per layer: W column-major, then b) so optimizers, soft updates and
/// checkpoints work on a single buffer. Batches are column-major: one sample
/// per column.
template <typename Scalar>
class Mlp {
 public:
  using MatrixMap = Eigen::Map<Matrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const Matrix<Scalar>>;
  using VectorMap = Eigen::Map<Vector<Scalar>>;
  using ConstVectorMap = Eigen::Map<const Vector<Scalar>>;

  struct Cache {
    std::vector<Matrix<Scalar>> activations;  // input, then each layer output
  };

  Mlp() = default;
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ValidationError("an MLP needs at least an input and output size");
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw ValidationError("MLP layer sizes must be >= 1");
      offsets_.push_back(n);
      n += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = Vector<Scalar>::Zero(n);
  }

  const std::vector<int>& sizes() const { return sizes_; }
  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  int layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index parameter_count() const { return params_.size(); }

  Vector<Scalar>& params() { return params_; }
  const Vector<Scalar>& params() const { return params_; }

  MatrixMap weight(int l) { return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]}; }
  ConstMatrixMap weight(int l) const {
    return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
  }
  VectorMap bias(int l) { return {params_.data() + bias_offset(l), sizes_[l + 1]}; }
  ConstVectorMap bias(int l) const { return {params_.data() + bias_offset(l), sizes_[l + 1]}; }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases; the last
  /// layer is additionally multiplied by `last_layer_scale`.
  template <typename Rng>
  void initialize(Rng& rng, Scalar last_layer_scale = Scalar(1)) {
    for (int l = 0; l < layers(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
      std::uniform_real_distribution<double> u(-bound, bound);
      const Scalar scale = (l + 1 == layers()) ? last_layer_scale : Scalar(1);
      auto w = weight(l);
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = Scalar(u(rng)) * scale;
      auto b = bias(l);
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = Scalar(u(rng)) * scale;
    }
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x) const {
    check_input(x);
    Matrix<Scalar> a = x;
    for (int l = 0; l < layers(); ++l) {
      Matrix<Scalar> z = weight(l) * a;
      z.colwise() += bias(l);
      if (l + 1 < layers()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  Matrix<Scalar> forward(const Matrix<Scalar>& x, Cache& cache) const {
    check_input(x);
    cache.activations.resize(layers() + 1);
    cache.activations[0] = x;
    for (int l = 0; l < layers(); ++l) {
      Matrix<Scalar>& z = cache.activations[l + 1];
      z.noalias() = weight(l) * cache.activations[l];
      z.colwise() += bias(l);
      if (l + 1 < layers()) z = z.cwiseMax(Scalar(0));
    }
    return cache.activations.back();
  }

  /// Back-propagates dL/d(output) through a cached forward pass. Parameter
  /// gradients are added into `grad` (same layout as params()) when non-null;
  /// the input gradient is written to `grad_input` when non-null.
  void backward(const Cache& cache, const Matrix<Scalar>& grad_out, Vector<Scalar>* grad,
                Matrix<Scalar>* grad_input = nullptr) const {
    if (grad && grad->size() != params_.size()) {
      throw ValidationError("gradient buffer has the wrong size");
    }
    Matrix<Scalar> g = grad_out;
    for (int l = layers() - 1; l >= 0; --l) {
      if (grad) {
        MatrixMap gw(grad->data() + offsets_[l], sizes_[l + 1], sizes_[l]);
        VectorMap gb(grad->data() + bias_offset(l), sizes_[l + 1]);
        gw.noalias() += g * cache.activations[l].transpose();
        gb += g.rowwise().sum();
      }
      if (l == 0 && grad_input == nullptr) break;
      Matrix<Scalar> prev = weight(l).transpose() * g;
      if (l > 0) prev = (cache.activations[l].array() > Scalar(0)).select(prev, Scalar(0));
      g = std::move(prev);
    }
    if (grad_input) *grad_input = std::move(g);
  }

 private:
  Eigen::Index bias_offset(int l) const {
    return offsets_[l] + static_cast<Eigen::Index>(sizes_[l + 1]) * sizes_[l];
  }
  void check_input(const Matrix<Scalar>& x) const {
    if (x.rows() != input_dim()) throw ValidationError("MLP input has the wrong dimension");
  }

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Vector<Scalar> params_;
};

/// PyTorch-style Adam with bias correction.
template <typename Scalar>
struct Adam {
  Vector<Scalar> m;
  Vector<Scalar> v;
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  Adam() = default;
  explicit Adam(Eigen::Index n) : m(Vector<Scalar>::Zero(n)), v(Vector<Scalar>::Zero(n)) {}

  void step(Vector<Scalar>& params, const Vector<Scalar>& grad, double lr) {
    if (params.size() != m.size() || grad.size() != m.size()) {
      throw ValidationError("Adam: parameter, gradient and moment shapes differ");
    }
    if (!grad.allFinite()) throw SimulationError("Adam: non-finite gradient");
    ++t;
    const Scalar b1 = Scalar(beta1), b2 = Scalar(beta2);
    m = b1 * m + (Scalar(1) - b1) * grad;
    v = b2 * v + (Scalar(1) - b2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1.0 - std::pow(beta1, static_cast<double>(t)));
    const Scalar c2 = Scalar(1.0 - std::pow(beta2, static_cast<double>(t)));
    params.array() -= Scalar(lr) * (m.array() / c1) / ((v.array() / c2).sqrt() + Scalar(eps));
  }
};

/// target <- (1 - tau) * target + tau * online.
template <typename Scalar>
void soft_update(Vector<Scalar>& target, const Vector<Scalar>& online, double tau) {
  if (target.size() != online.size()) throw ValidationError("soft_update: shape mismatch");
  target = (Scalar(1) - Scalar(tau)) * target + Scalar(tau) * online;
}

}  // namespace rlpp::sac

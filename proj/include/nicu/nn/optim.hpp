#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "nicu/nn/network.hpp"

namespace nicu::nn {

template <typename Scalar>
struct LossResult {
  Scalar loss = 0;
  Tensor<Scalar> grad;  // dLoss/dpred
};

// Mean binary cross-entropy. Predictions are clamped to [eps, 1 - eps] before
// the logs; the gradient is evaluated at the clamped value.
template <typename Scalar>
LossResult<Scalar> bce_loss(const Tensor<Scalar>& pred, const Tensor<Scalar>& target,
                            Scalar eps = Scalar(1e-7)) {
  if (pred.shape != target.shape) {
    throw std::invalid_argument("bce: shape " + shape_str(pred.shape) + " vs " +
                                shape_str(target.shape));
  }
  const auto n = static_cast<Scalar>(pred.size());
  const auto p = pred.data.array().cwiseMax(eps).cwiseMin(Scalar(1) - eps);
  const auto t = target.data.array();
  LossResult<Scalar> r;
  r.loss = -(t * p.log() + (Scalar(1) - t) * (Scalar(1) - p).log()).sum() / n;
  r.grad = Tensor<Scalar>(pred.shape, ((p - t) / (p * (Scalar(1) - p)) / n).matrix());
  return r;
}

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  kernels::Vec<Scalar> m;
  kernels::Vec<Scalar> v;
  long step = 0;
};

// One bias-corrected Adam update of theta in place.
template <typename Scalar>
void adam_step(Eigen::Ref<kernels::Vec<Scalar>> theta,
               const Eigen::Ref<const kernels::Vec<Scalar>>& grad, AdamState<Scalar>& state,
               const AdamConfig& cfg = {}) {
  if (state.m.size() == 0) {
    state.m = kernels::Vec<Scalar>::Zero(theta.size());
    state.v = kernels::Vec<Scalar>::Zero(theta.size());
  }
  if (grad.size() != theta.size() || state.m.size() != theta.size()) {
    throw std::invalid_argument("adam: size mismatch");
  }
  ++state.step;
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  state.m = b1 * state.m + (Scalar(1) - b1) * grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * grad.cwiseAbs2();
  const auto c1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta1, state.step));
  const auto c2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.beta2, state.step));
  theta.array() -= static_cast<Scalar>(cfg.lr) * (state.m.array() / c1) /
                   ((state.v.array() / c2).sqrt() + static_cast<Scalar>(cfg.eps));
}

// Adam over a Network's trainable parameters. Frozen parameters are never
// written.
template <typename Scalar>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(Network<Scalar>& net, const Gradients<Scalar>& grads) {
    auto& params = net.params();
    if (grads.grads.size() != params.size()) throw std::invalid_argument("adam: gradient count");
    states_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].trainable || grads.grads[i].size() == 0) continue;
      adam_step<Scalar>(params[i].tensor.data, grads.grads[i], states_[i], cfg_);
    }
  }

  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::vector<AdamState<Scalar>> states_;
};

}  // namespace nicu::nn

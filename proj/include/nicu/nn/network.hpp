#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "nicu/nn/layers.hpp"
#include "nicu/nn/tensor.hpp"

namespace nicu::nn {

template <typename Scalar>
struct Parameter {
  std::string name;
  Tensor<Scalar> tensor;
  bool trainable = true;
};

// Activations retained by a forward pass for the matching backward pass.
template <typename Scalar>
struct Tape {
  std::vector<Tensor<Scalar>> inputs;  // input to each layer
  std::vector<kernels::Mat<Scalar>> cols;  // conv2d patch matrices, empty otherwise
  Tensor<Scalar> output;

  bool recorded() const { return !inputs.empty(); }
};

// Per-parameter gradient sums. Entries for frozen parameters stay empty.
template <typename Scalar>
struct Gradients {
  std::vector<kernels::Vec<Scalar>> grads;

  void scale(Scalar s) {
    for (auto& g : grads) g *= s;
  }
  void add(const Gradients& other) {
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (other.grads[i].size()) grads[i] += other.grads[i];
    }
  }
};

// Feedforward chain of layers with reverse-mode gradients. Each weighted layer
// owns a parameter group "<index>.weight" / "<index>.bias".
template <typename Scalar>
class Network {
 public:
  using Vector = kernels::Vec<Scalar>;

  Network() = default;

  // Random He-normal weights and zero biases.
  static Network build(const std::vector<LayerSpec>& layers, std::uint64_t seed) {
    Network net;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& s = layers[i];
      s.validate();
      net.layers_.push_back(s);
      net.weight_index_.push_back(-1);
      if (!s.weighted()) continue;
      const Shape ws = s.weight_shape();
      const double fan_in = static_cast<double>(numel(ws) / ws[0]);
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      Tensor<Scalar> w(ws);
      for (Eigen::Index k = 0; k < w.size(); ++k) w.data[k] = static_cast<Scalar>(dist(rng));
      net.weight_index_.back() = static_cast<int>(net.params_.size());
      net.params_.push_back({std::to_string(i) + ".weight", std::move(w), true});
      net.params_.push_back({std::to_string(i) + ".bias", Tensor<Scalar>({ws[0]}), true});
    }
    return net;
  }

  // Reassembles a network from stored layers and parameters (checkpoint load).
  static Network from_parts(std::vector<LayerSpec> layers, std::vector<Parameter<Scalar>> params) {
    Network net;
    std::size_t p = 0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].validate();
      net.weight_index_.push_back(-1);
      if (layers[i].weighted()) {
        if (p + 2 > params.size()) throw std::invalid_argument("network: missing parameters");
        if (params[p].tensor.shape != layers[i].weight_shape() ||
            params[p + 1].tensor.shape != Shape{layers[i].out_channels}) {
          throw std::invalid_argument("network: parameter shape mismatch at layer " +
                                      std::to_string(i));
        }
        net.weight_index_.back() = static_cast<int>(p);
        p += 2;
      }
    }
    if (p != params.size()) throw std::invalid_argument("network: unexpected extra parameters");
    net.layers_ = std::move(layers);
    net.params_ = std::move(params);
    return net;
  }

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<Parameter<Scalar>>& params() const { return params_; }
  std::vector<Parameter<Scalar>>& params() { return params_; }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& p : params_) n += p.tensor.size();
    return n;
  }

  std::size_t weighted_layer_count() const {
    std::size_t n = 0;
    for (const auto& s : layers_) n += s.weighted();
    return n;
  }

  void set_trainable(bool trainable) {
    for (auto& p : params_) p.trainable = trainable;
  }
  void freeze() { set_trainable(false); }
  bool frozen() const {
    for (const auto& p : params_) {
      if (p.trainable) return false;
    }
    return true;
  }

  Shape output_shape(Shape in) const {
    for (const auto& s : layers_) in = s.output_shape(in);
    return in;
  }

  Tensor<Scalar> forward(const Tensor<Scalar>& x) const { return run(x, nullptr); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, Tape<Scalar>& tape) const {
    tape = Tape<Scalar>{};
    tape.output = run(x, &tape);
    return tape.output;
  }

  // Propagates dL/d(output) back through the recorded pass. Parameter
  // gradients are added into `grads` (when non-null) for trainable parameters
  // only. Returns dL/d(input).
  Tensor<Scalar> backward(const Tape<Scalar>& tape, const Tensor<Scalar>& dy,
                          Gradients<Scalar>* grads) const {
    if (!tape.recorded()) throw std::logic_error("network: backward called before forward");
    if (dy.shape != tape.output.shape) {
      throw std::invalid_argument("network: gradient shape " + shape_str(dy.shape) +
                                  " does not match output " + shape_str(tape.output.shape));
    }
    if (grads && grads->grads.size() != params_.size()) *grads = zero_gradients();
    Tensor<Scalar> g = dy;
    for (std::size_t i = layers_.size(); i-- > 0;) {
      g = backward_layer(i, tape, g, grads);
    }
    return g;
  }

  // Convenience form: accumulates into each trainable parameter's grad buffer.
  Tensor<Scalar> backward(const Tape<Scalar>& tape, const Tensor<Scalar>& dy) {
    Gradients<Scalar> g = zero_gradients();
    Tensor<Scalar> dx = backward(tape, dy, &g);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].trainable) params_[i].tensor.ensure_grad() += g.grads[i];
    }
    return dx;
  }

  void zero_grad() {
    for (auto& p : params_) {
      if (p.tensor.grad) p.tensor.grad->setZero();
    }
  }

  Gradients<Scalar> zero_gradients() const {
    Gradients<Scalar> g;
    g.grads.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i].trainable) g.grads[i] = Vector::Zero(params_[i].tensor.size());
    }
    return g;
  }

  template <typename Other>
  Network<Other> cast() const {
    std::vector<Parameter<Other>> ps;
    for (const auto& p : params_) {
      ps.push_back({p.name, Tensor<Other>(p.tensor.shape, p.tensor.data.template cast<Other>()),
                    p.trainable});
    }
    return Network<Other>::from_parts(layers_, std::move(ps));
  }

 private:
  Tensor<Scalar> run(const Tensor<Scalar>& x, Tape<Scalar>* tape) const {
    Tensor<Scalar> a(x.shape, x.data);
    if (tape) {
      tape->inputs.reserve(layers_.size());
      tape->cols.resize(layers_.size());
    }
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const LayerSpec& s = layers_[i];
      const Shape out_shape = s.output_shape(a.shape);
      Tensor<Scalar> y;
      switch (s.kind) {
        case LayerKind::conv2d: {
          auto cols = kernels::im2col(a, s, out_shape[1], out_shape[2]);
          y = kernels::conv2d_forward(s, weight(i), bias(i), cols, out_shape);
          if (tape) tape->cols[i] = std::move(cols);
          break;
        }
        case LayerKind::dense:
          y = kernels::dense_forward(s, weight(i), bias(i), a);
          break;
        case LayerKind::relu:
          y = Tensor<Scalar>(a.shape, a.data.cwiseMax(Scalar(0)));
          break;
        case LayerKind::sigmoid:
          y = Tensor<Scalar>(a.shape, (Scalar(1) / (Scalar(1) + (-a.data.array()).exp())).matrix());
          break;
        case LayerKind::maxpool2d: {
          const auto arg = kernels::maxpool_argmax(s, a, out_shape);
          y = Tensor<Scalar>(out_shape);
          for (std::size_t o = 0; o < arg.size(); ++o) y.data[static_cast<Eigen::Index>(o)] = a.data[arg[o]];
          break;
        }
        case LayerKind::avgpool_global: {
          const Eigen::Index hw = a.shape[1] * a.shape[2];
          Eigen::Map<const kernels::Mat<Scalar>> m(a.data.data(), hw, a.shape[0]);
          y = Tensor<Scalar>(out_shape, m.colwise().mean().transpose());
          break;
        }
        case LayerKind::upsample2d: {
          const auto rows = kernels::upsample_source(a.shape[1], out_shape[1], s.scale_h);
          const auto cols = kernels::upsample_source(a.shape[2], out_shape[2], s.scale_w);
          y = Tensor<Scalar>(out_shape);
          const Eigen::Index h = a.shape[1], w = a.shape[2], ho = out_shape[1], wo = out_shape[2];
          for (Eigen::Index c = 0; c < a.shape[0]; ++c) {
            for (Eigen::Index r = 0; r < ho; ++r) {
              const Scalar* src = a.data.data() + c * h * w + rows[static_cast<std::size_t>(r)] * w;
              Scalar* dst = y.data.data() + c * ho * wo + r * wo;
              for (Eigen::Index q = 0; q < wo; ++q) dst[q] = src[cols[static_cast<std::size_t>(q)]];
            }
          }
          break;
        }
      }
      if (tape) tape->inputs.push_back(std::move(a));
      a = std::move(y);
    }
    return a;
  }

  Tensor<Scalar> backward_layer(std::size_t i, const Tape<Scalar>& tape, const Tensor<Scalar>& dy,
                                Gradients<Scalar>* grads) const {
    const LayerSpec& s = layers_[i];
    const Tensor<Scalar>& x = tape.inputs[i];
    Vector* dw = nullptr;
    Vector* db = nullptr;
    if (grads && s.weighted()) {
      const auto wi = static_cast<std::size_t>(weight_index_[i]);
      if (params_[wi].trainable) dw = &grads->grads[wi];
      if (params_[wi + 1].trainable) db = &grads->grads[wi + 1];
    }
    switch (s.kind) {
      case LayerKind::conv2d:
        return kernels::conv2d_backward(s, weight(i), tape.cols[i], x.shape, dy, dw, db);
      case LayerKind::dense:
        return kernels::dense_backward(s, weight(i), x, dy, dw, db);
      case LayerKind::relu:
        return Tensor<Scalar>(x.shape, (x.data.array() > Scalar(0)).select(dy.data, Scalar(0)));
      case LayerKind::sigmoid: {
        const Vector& y = i + 1 < layers_.size() ? tape.inputs[i + 1].data : tape.output.data;
        return Tensor<Scalar>(x.shape,
                              (dy.data.array() * y.array() * (Scalar(1) - y.array())).matrix());
      }
      case LayerKind::maxpool2d: {
        const auto arg = kernels::maxpool_argmax(s, x, dy.shape);
        Tensor<Scalar> dx(x.shape);
        for (std::size_t o = 0; o < arg.size(); ++o) dx.data[arg[o]] += dy.data[static_cast<Eigen::Index>(o)];
        return dx;
      }
      case LayerKind::avgpool_global: {
        const Eigen::Index hw = x.shape[1] * x.shape[2];
        Tensor<Scalar> dx(x.shape);
        Eigen::Map<kernels::Mat<Scalar>> m(dx.data.data(), hw, x.shape[0]);
        m.rowwise() = dy.data.transpose() / static_cast<Scalar>(hw);
        return dx;
      }
      case LayerKind::upsample2d: {
        const Eigen::Index h = x.shape[1], w = x.shape[2], ho = dy.shape[1], wo = dy.shape[2];
        const auto rows = kernels::upsample_source(h, ho, s.scale_h);
        const auto cols = kernels::upsample_source(w, wo, s.scale_w);
        Tensor<Scalar> dx(x.shape);
        for (Eigen::Index c = 0; c < x.shape[0]; ++c) {
          for (Eigen::Index r = 0; r < ho; ++r) {
            Scalar* dst = dx.data.data() + c * h * w + rows[static_cast<std::size_t>(r)] * w;
            const Scalar* src = dy.data.data() + c * ho * wo + r * wo;
            for (Eigen::Index q = 0; q < wo; ++q) dst[cols[static_cast<std::size_t>(q)]] += src[q];
          }
        }
        return dx;
      }
    }
    throw std::logic_error("network: unknown layer kind");
  }

  const Vector& weight(std::size_t layer) const {
    return params_[static_cast<std::size_t>(weight_index_[layer])].tensor.data;
  }
  const Vector& bias(std::size_t layer) const {
    return params_[static_cast<std::size_t>(weight_index_[layer]) + 1].tensor.data;
  }

  std::vector<LayerSpec> layers_;
  std::vector<Parameter<Scalar>> params_;
  std::vector<int> weight_index_;  // first parameter of each layer, -1 if none
};

}  // namespace nicu::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "nicu/nn/tensor.hpp"

namespace nicu::nn {

enum class LayerKind : std::uint8_t {
  conv2d = 1,
  relu = 2,
  sigmoid = 3,
  maxpool2d = 4,
  avgpool_global = 5,
  dense = 6,
  upsample2d = 7,
};

std::string to_string(LayerKind kind);

// Hyperparameters for one layer. Fields a kind does not use keep their
// defaults. Layers operate on single examples shaped [C, H, W].
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_channels = 0;   // conv2d channels, dense input features
  int out_channels = 0;  // conv2d channels, dense output features
  int kernel_h = 1;      // conv2d and maxpool2d window
  int kernel_w = 1;
  int stride_h = 1;      // conv2d only; maxpool2d strides by its window
  int stride_w = 1;
  int pad_h = 0;         // conv2d zero padding
  int pad_w = 0;
  double scale_h = 1.0;  // upsample2d factors, need not be integers
  double scale_w = 1.0;

  static LayerSpec conv2d(int in, int out, int kh, int kw, int ph = 0, int pw = 0,
                          int sh = 1, int sw = 1) {
    LayerSpec s;
    s.kind = LayerKind::conv2d;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel_h = kh;
    s.kernel_w = kw;
    s.pad_h = ph;
    s.pad_w = pw;
    s.stride_h = sh;
    s.stride_w = sw;
    return s;
  }
  static LayerSpec relu() { return {}; }
  static LayerSpec sigmoid() {
    LayerSpec s;
    s.kind = LayerKind::sigmoid;
    return s;
  }
  static LayerSpec maxpool2d(int kh, int kw) {
    LayerSpec s;
    s.kind = LayerKind::maxpool2d;
    s.kernel_h = kh;
    s.kernel_w = kw;
    return s;
  }
  static LayerSpec avgpool_global() {
    LayerSpec s;
    s.kind = LayerKind::avgpool_global;
    return s;
  }
  static LayerSpec dense(int in, int out) {
    LayerSpec s;
    s.kind = LayerKind::dense;
    s.in_channels = in;
    s.out_channels = out;
    return s;
  }
  static LayerSpec upsample2d(double sh, double sw) {
    LayerSpec s;
    s.kind = LayerKind::upsample2d;
    s.scale_h = sh;
    s.scale_w = sw;
    return s;
  }

  bool weighted() const { return kind == LayerKind::conv2d || kind == LayerKind::dense; }

  // Weight shape ([out, in, kh, kw] or [out, in]); empty for parameter-free kinds.
  Shape weight_shape() const {
    if (kind == LayerKind::conv2d) return {out_channels, in_channels, kernel_h, kernel_w};
    if (kind == LayerKind::dense) return {out_channels, in_channels};
    return {};
  }

  void validate() const;

  // Shape produced from `in`; throws std::invalid_argument on mismatch.
  Shape output_shape(const Shape& in) const;

  bool operator==(const LayerSpec&) const = default;
};

inline std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::maxpool2d: return "maxpool2d";
    case LayerKind::avgpool_global: return "avgpool_global";
    case LayerKind::dense: return "dense";
    case LayerKind::upsample2d: return "upsample2d";
  }
  return "unknown";
}

inline void LayerSpec::validate() const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument(to_string(kind) + ": " + what);
  };
  switch (kind) {
    case LayerKind::conv2d:
      if (in_channels < 1 || out_channels < 1) fail("channels must be positive");
      if (kernel_h < 1 || kernel_w < 1) fail("kernel must be positive");
      if (stride_h < 1 || stride_w < 1) fail("stride must be positive");
      if (pad_h < 0 || pad_w < 0) fail("padding must be non-negative");
      break;
    case LayerKind::dense:
      if (in_channels < 1 || out_channels < 1) fail("features must be positive");
      break;
    case LayerKind::maxpool2d:
      if (kernel_h < 1 || kernel_w < 1) fail("window must be positive");
      break;
    case LayerKind::upsample2d:
      if (!(scale_h >= 1.0) || !(scale_w >= 1.0) || !std::isfinite(scale_h) ||
          !std::isfinite(scale_w)) {
        fail("scale must be finite and >= 1");
      }
      break;
    case LayerKind::relu:
    case LayerKind::sigmoid:
    case LayerKind::avgpool_global:
      break;
    default:
      throw std::invalid_argument("unknown layer kind");
  }
}

inline Shape LayerSpec::output_shape(const Shape& in) const {
  auto fail = [&](const std::string& what) {
    throw std::invalid_argument(to_string(kind) + ": input " + shape_str(in) + " " + what);
  };
  if (kind == LayerKind::dense) {
    if (numel(in) != in_channels) fail("does not have " + std::to_string(in_channels) + " features");
    return {out_channels, 1, 1};
  }
  if (in.size() != 3) fail("is not [C, H, W]");
  const Eigen::Index c = in[0], h = in[1], w = in[2];
  switch (kind) {
    case LayerKind::conv2d: {
      if (c != in_channels) fail("has wrong channel count");
      const Eigen::Index ho = (h + 2 * pad_h - kernel_h) / stride_h + 1;
      const Eigen::Index wo = (w + 2 * pad_w - kernel_w) / stride_w + 1;
      if (h + 2 * pad_h < kernel_h || w + 2 * pad_w < kernel_w) fail("is smaller than the kernel");
      return {out_channels, ho, wo};
    }
    case LayerKind::maxpool2d:
      if (h < kernel_h || w < kernel_w) fail("is smaller than the pooling window");
      return {c, h / kernel_h, w / kernel_w};
    case LayerKind::avgpool_global:
      return {c, 1, 1};
    case LayerKind::upsample2d:
      return {c, static_cast<Eigen::Index>(std::floor(static_cast<double>(h) * scale_h + 0.5)),
              static_cast<Eigen::Index>(std::floor(static_cast<double>(w) * scale_w + 0.5))};
    default:
      return in;
  }
}

namespace kernels {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

// Patch matrix [Ho*Wo x C*kh*kw]. Column order (c, i, j) matches the row-major
// weight layout [out, in, kh, kw], so the weight buffer viewed column-major as
// [C*kh*kw x out] is W^T.
template <typename S>
Mat<S> im2col(const Tensor<S>& x, const LayerSpec& s, Eigen::Index ho, Eigen::Index wo) {
  const Eigen::Index c_in = x.shape[0], h = x.shape[1], w = x.shape[2];
  Mat<S> cols(ho * wo, c_in * s.kernel_h * s.kernel_w);
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < c_in; ++c) {
    const S* plane = x.data.data() + c * h * w;
    for (int i = 0; i < s.kernel_h; ++i) {
      for (int j = 0; j < s.kernel_w; ++j, ++k) {
        S* col = cols.col(k).data();
        for (Eigen::Index oh = 0; oh < ho; ++oh) {
          const Eigen::Index ih = oh * s.stride_h - s.pad_h + i;
          S* dst = col + oh * wo;
          if (ih < 0 || ih >= h) {
            std::fill(dst, dst + wo, S(0));
            continue;
          }
          const S* row = plane + ih * w;
          for (Eigen::Index ow = 0; ow < wo; ++ow) {
            const Eigen::Index iw = ow * s.stride_w - s.pad_w + j;
            dst[ow] = (iw >= 0 && iw < w) ? row[iw] : S(0);
          }
        }
      }
    }
  }
  return cols;
}

template <typename S>
void col2im(const Mat<S>& dcols, const LayerSpec& s, Tensor<S>& dx, Eigen::Index ho,
            Eigen::Index wo) {
  const Eigen::Index c_in = dx.shape[0], h = dx.shape[1], w = dx.shape[2];
  Eigen::Index k = 0;
  for (Eigen::Index c = 0; c < c_in; ++c) {
    S* plane = dx.data.data() + c * h * w;
    for (int i = 0; i < s.kernel_h; ++i) {
      for (int j = 0; j < s.kernel_w; ++j, ++k) {
        const S* col = dcols.col(k).data();
        for (Eigen::Index oh = 0; oh < ho; ++oh) {
          const Eigen::Index ih = oh * s.stride_h - s.pad_h + i;
          if (ih < 0 || ih >= h) continue;
          S* row = plane + ih * w;
          const S* src = col + oh * wo;
          for (Eigen::Index ow = 0; ow < wo; ++ow) {
            const Eigen::Index iw = ow * s.stride_w - s.pad_w + j;
            if (iw >= 0 && iw < w) row[iw] += src[ow];
          }
        }
      }
    }
  }
}

template <typename S>
Tensor<S> conv2d_forward(const LayerSpec& s, const Vec<S>& weight, const Vec<S>& bias,
                         const Mat<S>& cols, const Shape& out_shape) {
  const Eigen::Index p = out_shape[1] * out_shape[2];
  const Eigen::Index k = cols.cols();
  Eigen::Map<const Mat<S>> wt(weight.data(), k, s.out_channels);
  Tensor<S> y(out_shape);
  Eigen::Map<Mat<S>> out(y.data.data(), p, s.out_channels);
  out.noalias() = cols * wt;
  out.rowwise() += bias.transpose();
  return y;
}

// Accumulates weight and bias gradients (when non-null) and returns dL/dx.
template <typename S>
Tensor<S> conv2d_backward(const LayerSpec& s, const Vec<S>& weight, const Mat<S>& cols,
                          const Shape& in_shape, const Tensor<S>& dy, Vec<S>* dweight,
                          Vec<S>* dbias) {
  const Eigen::Index ho = dy.shape[1], wo = dy.shape[2];
  const Eigen::Index k = cols.cols();
  Eigen::Map<const Mat<S>> wt(weight.data(), k, s.out_channels);
  Eigen::Map<const Mat<S>> g(dy.data.data(), ho * wo, s.out_channels);
  if (dweight) {
    Eigen::Map<Mat<S>> dwt(dweight->data(), k, s.out_channels);
    dwt.noalias() += cols.transpose() * g;
  }
  if (dbias) *dbias += g.colwise().sum().transpose();
  const Mat<S> dcols = g * wt.transpose();
  Tensor<S> dx(in_shape);
  col2im(dcols, s, dx, ho, wo);
  return dx;
}

template <typename S>
Tensor<S> dense_forward(const LayerSpec& s, const Vec<S>& weight, const Vec<S>& bias,
                        const Tensor<S>& x) {
  Eigen::Map<const Mat<S>> wt(weight.data(), s.in_channels, s.out_channels);
  Tensor<S> y({s.out_channels, 1, 1});
  y.data.noalias() = wt.transpose() * x.data;
  y.data += bias;
  return y;
}

template <typename S>
Tensor<S> dense_backward(const LayerSpec& s, const Vec<S>& weight, const Tensor<S>& x,
                         const Tensor<S>& dy, Vec<S>* dweight, Vec<S>* dbias) {
  Eigen::Map<const Mat<S>> wt(weight.data(), s.in_channels, s.out_channels);
  if (dweight) {
    Eigen::Map<Mat<S>> dwt(dweight->data(), s.in_channels, s.out_channels);
    dwt.noalias() += x.data * dy.data.transpose();
  }
  if (dbias) *dbias += dy.data;
  Tensor<S> dx(x.shape);
  dx.data.noalias() = wt * dy.data;
  return dx;
}

// Index into x of the first maximum in each pooling window.
template <typename S>
std::vector<Eigen::Index> maxpool_argmax(const LayerSpec& s, const Tensor<S>& x,
                                         const Shape& out_shape) {
  const Eigen::Index c_n = x.shape[0], h = x.shape[1], w = x.shape[2];
  const Eigen::Index ho = out_shape[1], wo = out_shape[2];
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(c_n * ho * wo));
  std::size_t o = 0;
  for (Eigen::Index c = 0; c < c_n; ++c) {
    for (Eigen::Index oh = 0; oh < ho; ++oh) {
      for (Eigen::Index ow = 0; ow < wo; ++ow, ++o) {
        Eigen::Index best = c * h * w + (oh * s.kernel_h) * w + ow * s.kernel_w;
        for (int i = 0; i < s.kernel_h; ++i) {
          for (int j = 0; j < s.kernel_w; ++j) {
            const Eigen::Index idx = c * h * w + (oh * s.kernel_h + i) * w + ow * s.kernel_w + j;
            if (x.data[idx] > x.data[best]) best = idx;
          }
        }
        arg[o] = best;
      }
    }
  }
  return arg;
}

// Source row/column for each output position of nearest-neighbour upsampling.
inline std::vector<Eigen::Index> upsample_source(Eigen::Index in, Eigen::Index out, double scale) {
  std::vector<Eigen::Index> src(static_cast<std::size_t>(out));
  for (Eigen::Index i = 0; i < out; ++i) {
    src[static_cast<std::size_t>(i)] =
        std::min(static_cast<Eigen::Index>(std::floor(static_cast<double>(i) / scale)), in - 1);
  }
  return src;
}

}  // namespace kernels

}  // namespace nicu::nn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "emospec/error.hpp"
#include "emospec/nn/tensor.hpp"
#include "emospec/rng.hpp"

namespace emospec::nn {

// ---------------------------------------------------------------------------
// Layer specifications. Shapes below omit the leading batch dimension.

struct Conv2D {
  std::size_t filters{32};
  std::size_t kernel_h{3};
  std::size_t kernel_w{3};
  std::size_t stride{1};  // valid padding only
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};
struct ReLU {
  friend bool operator==(const ReLU&, const ReLU&) = default;
};
struct MaxPool2D {
  std::size_t pool{2};
  std::size_t stride{2};
  friend bool operator==(const MaxPool2D&, const MaxPool2D&) = default;
};
struct Dropout {
  double rate{0.2};
  friend bool operator==(const Dropout&, const Dropout&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct RepeatVector {
  std::size_t n{4};
  friend bool operator==(const RepeatVector&, const RepeatVector&) = default;
};
struct LSTM {
  std::size_t units{128};
  bool return_sequences{false};
  friend bool operator==(const LSTM&, const LSTM&) = default;
};
struct Dense {
  std::size_t units{64};
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct Softmax {
  friend bool operator==(const Softmax&, const Softmax&) = default;
};

using LayerSpec = std::variant<Conv2D, ReLU, MaxPool2D, Dropout, Flatten, RepeatVector, LSTM, Dense, Softmax>;

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};
template <class... Fs>
overloaded(Fs...) -> overloaded<Fs...>;

inline std::string_view layer_name(const LayerSpec& spec) {
  return std::visit(overloaded{[](const Conv2D&) { return std::string_view("Conv2D"); },
                               [](const ReLU&) { return std::string_view("ReLU"); },
                               [](const MaxPool2D&) { return std::string_view("MaxPool2D"); },
                               [](const Dropout&) { return std::string_view("Dropout"); },
                               [](const Flatten&) { return std::string_view("Flatten"); },
                               [](const RepeatVector&) { return std::string_view("RepeatVector"); },
                               [](const LSTM&) { return std::string_view("LSTM"); },
                               [](const Dense&) { return std::string_view("Dense"); },
                               [](const Softmax&) { return std::string_view("Softmax"); }},
                    spec);
}

// Canonical text form; the architecture fingerprint hashes these.
inline std::string serialize(const LayerSpec& spec) {
  auto num = [](auto v) { return std::to_string(v); };
  return std::visit(
      overloaded{
          [&](const Conv2D& l) {
            return "conv2d(filters=" + num(l.filters) + ",kernel=" + num(l.kernel_h) + "x" + num(l.kernel_w) +
                   ",stride=" + num(l.stride) + ",padding=valid)";
          },
          [](const ReLU&) { return std::string("relu"); },
          [&](const MaxPool2D& l) { return "maxpool2d(pool=" + num(l.pool) + ",stride=" + num(l.stride) + ")"; },
          [&](const Dropout& l) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", l.rate);
            return "dropout(rate=" + std::string(buf) + ")";
          },
          [](const Flatten&) { return std::string("flatten"); },
          [&](const RepeatVector& l) { return "repeat_vector(n=" + num(l.n) + ")"; },
          [&](const LSTM& l) {
            return "lstm(units=" + num(l.units) + ",return_sequences=" + (l.return_sequences ? "true" : "false") + ")";
          },
          [&](const Dense& l) { return "dense(units=" + num(l.units) + ")"; },
          [](const Softmax&) { return std::string("softmax"); }},
      spec);
}

namespace detail {

[[noreturn]] inline void shape_fail(std::size_t index, const LayerSpec& spec, const std::string& expected,
                                    const Shape& actual) {
  throw InvalidArgument("layer " + std::to_string(index) + " (" + std::string(layer_name(spec)) + "): expected input " +
                        expected + ", got " + shape_string(actual));
}

}  // namespace detail

// Output shape of a layer (without batch dim); throws naming the layer.
inline Shape infer_shape(std::size_t index, const LayerSpec& spec, const Shape& in) {
  return std::visit(
      overloaded{
          [&](const Conv2D& l) -> Shape {
            if (in.size() != 3) detail::shape_fail(index, spec, "rank 3 (H, W, C)", in);
            if (l.filters == 0 || l.kernel_h == 0 || l.kernel_w == 0 || l.stride == 0)
              throw InvalidArgument("layer " + std::to_string(index) + " (Conv2D): sizes must be positive");
            if (in[0] < l.kernel_h || in[1] < l.kernel_w)
              detail::shape_fail(index, spec, "spatial size >= kernel " + std::to_string(l.kernel_h) + "x" +
                                                  std::to_string(l.kernel_w),
                                 in);
            return {(in[0] - l.kernel_h) / l.stride + 1, (in[1] - l.kernel_w) / l.stride + 1, l.filters};
          },
          [&](const ReLU&) -> Shape { return in; },
          [&](const MaxPool2D& l) -> Shape {
            if (in.size() != 3) detail::shape_fail(index, spec, "rank 3 (H, W, C)", in);
            if (l.pool == 0 || l.stride == 0) throw InvalidArgument("layer " + std::to_string(index) + " (MaxPool2D): sizes must be positive");
            if (in[0] < l.pool || in[1] < l.pool)
              detail::shape_fail(index, spec, "spatial size >= pool " + std::to_string(l.pool), in);
            return {(in[0] - l.pool) / l.stride + 1, (in[1] - l.pool) / l.stride + 1, in[2]};
          },
          [&](const Dropout& l) -> Shape {
            if (!(l.rate >= 0.0 && l.rate < 1.0))
              throw InvalidArgument("layer " + std::to_string(index) + " (Dropout): rate must be in [0, 1)");
            return in;
          },
          [&](const Flatten&) -> Shape { return {shape_size(in)}; },
          [&](const RepeatVector& l) -> Shape {
            if (in.size() != 1) detail::shape_fail(index, spec, "rank 1 (F)", in);
            if (l.n == 0) throw InvalidArgument("layer " + std::to_string(index) + " (RepeatVector): n must be positive");
            return {l.n, in[0]};
          },
          [&](const LSTM& l) -> Shape {
            if (in.size() != 2) detail::shape_fail(index, spec, "rank 2 (T, F)", in);
            if (l.units == 0) throw InvalidArgument("layer " + std::to_string(index) + " (LSTM): units must be positive");
            if (l.return_sequences) return {in[0], l.units};
            return {l.units};
          },
          [&](const Dense& l) -> Shape {
            if (in.size() != 1) detail::shape_fail(index, spec, "rank 1 (F)", in);
            if (l.units == 0) throw InvalidArgument("layer " + std::to_string(index) + " (Dense): units must be positive");
            return {l.units};
          },
          [&](const Softmax&) -> Shape {
            if (in.size() != 1) detail::shape_fail(index, spec, "rank 1 (classes)", in);
            return in;
          }},
      spec);
}

// Weight tensor shapes for a layer, in storage order.
inline std::vector<Shape> param_shapes(const LayerSpec& spec, const Shape& in) {
  return std::visit(overloaded{[&](const Conv2D& l) -> std::vector<Shape> {
                                 return {{l.kernel_h, l.kernel_w, in[2], l.filters}, {l.filters}};
                               },
                               [&](const LSTM& l) -> std::vector<Shape> {
                                 return {{in[1], 4 * l.units}, {l.units, 4 * l.units}, {4 * l.units}};
                               },
                               [&](const Dense& l) -> std::vector<Shape> { return {{in[0], l.units}, {l.units}}; },
                               [](const auto&) -> std::vector<Shape> { return {}; }},
                    spec);
}

// Glorot-uniform kernels, zero biases, LSTM forget-gate bias 1.
template <typename T>
void init_params(const LayerSpec& spec, const Shape& in, std::vector<Tensor<T>>& params, Rng& rng) {
  auto glorot = [&](Tensor<T>& w, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (auto& v : w.values) v = static_cast<T>(u(rng));
  };
  std::visit(overloaded{[&](const Conv2D& l) {
                          const double area = static_cast<double>(l.kernel_h * l.kernel_w);
                          glorot(params[0], area * static_cast<double>(in[2]), area * static_cast<double>(l.filters));
                          params[1].fill(T(0));
                        },
                        [&](const LSTM& l) {
                          const double u4 = 4.0 * static_cast<double>(l.units);
                          glorot(params[0], static_cast<double>(in[1]), u4);
                          glorot(params[1], static_cast<double>(l.units), u4);
                          params[2].fill(T(0));
                          for (std::size_t j = 0; j < l.units; ++j) params[2][l.units + j] = T(1);
                        },
                        [&](const Dense& l) {
                          glorot(params[0], static_cast<double>(in[0]), static_cast<double>(l.units));
                          params[1].fill(T(0));
                        },
                        [](const auto&) {}},
             spec);
}

// ---------------------------------------------------------------------------
// Kernels. Tensors carry the batch dimension first; images are NHWC.

namespace kernels {

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Lowers one NHWC image to a (KH*KW*C) x (Ho*Wo) patch matrix; row k =
// (ky*KW + kx)*C + c matches the kernel layout (KH, KW, C, F).
template <typename T>
void im2col(const T* img, std::size_t W, std::size_t C, const Conv2D& l, std::size_t Ho, std::size_t Wo, T* cols) {
  const std::size_t P = Ho * Wo, S = l.stride;
  for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
    for (std::size_t kx = 0; kx < l.kernel_w; ++kx)
      for (std::size_t c = 0; c < C; ++c) {
        T* row = cols + ((ky * l.kernel_w + kx) * C + c) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          const T* src = img + ((oy * S + ky) * W + kx) * C + c;
          T* dst = row + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox] = src[ox * S * C];
        }
      }
}

template <typename T>
void col2im_add(const T* cols, std::size_t W, std::size_t C, const Conv2D& l, std::size_t Ho, std::size_t Wo, T* img) {
  const std::size_t P = Ho * Wo, S = l.stride;
  for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
    for (std::size_t kx = 0; kx < l.kernel_w; ++kx)
      for (std::size_t c = 0; c < C; ++c) {
        const T* row = cols + ((ky * l.kernel_w + kx) * C + c) * P;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
          T* dst = img + ((oy * S + ky) * W + kx) * C + c;
          const T* src = row + oy * Wo;
          for (std::size_t ox = 0; ox < Wo; ++ox) dst[ox * S * C] += src[ox];
        }
      }
}

template <typename T>
void axpy(T* y, const T* x, T a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

// Vectorized when built with -fopenmp-simd; the reduction order is fixed by
// the build, so results stay deterministic.
template <typename T>
T dot(const T* x, const T* y, std::size_t n) {
  T acc = T(0);
#pragma omp simd reduction(+ : acc)
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

// Stride-1 convolutions run on planar (C, H*W) copies of each image. Output
// rows are computed W wide (the last KW - 1 columns are scratch), which
// turns every kernel tap into one contiguous axpy over the whole image.
template <typename T>
struct PlanarConv {
  std::size_t H, W, C, F, KH, KW, Ho, Wo;
  std::size_t plane;  // H*W plus tail padding for the widest tap
  std::size_t span;   // Ho*W, length of one tap's axpy

  PlanarConv(const Conv2D& l, std::size_t h, std::size_t w, std::size_t c)
      : H(h), W(w), C(c), F(l.filters), KH(l.kernel_h), KW(l.kernel_w), Ho(h - l.kernel_h + 1), Wo(w - l.kernel_w + 1),
        plane(h * w + l.kernel_w), span((h - l.kernel_h + 1) * w) {}

  void to_planar(const T* img, T* out) const {
    for (std::size_t c = 0; c < C; ++c) {
      T* dst = out + c * plane;
      for (std::size_t i = 0; i < H * W; ++i) dst[i] = img[i * C + c];
      std::fill(dst + H * W, dst + plane, T(0));
    }
  }
  [[nodiscard]] std::size_t tap_offset(std::size_t ky, std::size_t kx) const { return ky * W + kx; }
};

template <typename T>
void conv2d_forward(const Conv2D& l, const Tensor<T>& in, const Tensor<T>& kernel, const Tensor<T>& bias,
                    Tensor<T>& out) {
  const std::size_t B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const std::size_t F = l.filters, K = l.kernel_h * l.kernel_w * C;
  const std::size_t Ho = (H - l.kernel_h) / l.stride + 1, Wo = (W - l.kernel_w) / l.stride + 1, P = Ho * Wo;
  out.reset({B, Ho, Wo, F});
  if (l.stride == 1) {
    const PlanarConv<T> pc(l, H, W, C);
    std::vector<T> img(C * pc.plane), acc(F * pc.span);
    for (std::size_t b = 0; b < B; ++b) {
      pc.to_planar(in.data() + b * H * W * C, img.data());
      for (std::size_t f = 0; f < F; ++f) std::fill_n(acc.data() + f * pc.span, pc.span, bias[f]);
      for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < l.kernel_w; ++kx)
          for (std::size_t c = 0; c < C; ++c) {
            const T* src = img.data() + c * pc.plane + pc.tap_offset(ky, kx);
            const T* w = kernel.data() + ((ky * l.kernel_w + kx) * C + c) * F;
            for (std::size_t f = 0; f < F; ++f) axpy(acc.data() + f * pc.span, src, w[f], pc.span);
          }
      T* o = out.data() + b * P * F;
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox)
          for (std::size_t f = 0; f < F; ++f) o[(oy * Wo + ox) * F + f] = acc[f * pc.span + oy * W + ox];
    }
    return;
  }
  std::vector<T> cols(K * P), planar(F * P);
  for (std::size_t b = 0; b < B; ++b) {
    im2col(in.data() + b * H * W * C, W, C, l, Ho, Wo, cols.data());
    for (std::size_t f = 0; f < F; ++f) std::fill_n(planar.data() + f * P, P, bias[f]);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t f = 0; f < F; ++f) axpy(planar.data() + f * P, cols.data() + k * P, kernel[k * F + f], P);
    T* o = out.data() + b * P * F;
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t f = 0; f < F; ++f) o[p * F + f] = planar[f * P + p];
  }
}

// Accumulates kernel/bias gradients; writes din when non-null.
template <typename T>
void conv2d_backward(const Conv2D& l, const Tensor<T>& in, const Tensor<T>& kernel, const Tensor<T>& dout,
                     Tensor<T>& dkernel, Tensor<T>& dbias, Tensor<T>* din) {
  const std::size_t B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const std::size_t F = l.filters, K = l.kernel_h * l.kernel_w * C;
  const std::size_t Ho = dout.dim(1), Wo = dout.dim(2), P = Ho * Wo;
  if (din) din->reset(in.shape);
  if (l.stride == 1) {
    const PlanarConv<T> pc(l, H, W, C);
    // Scratch columns of the W-wide gradient rows stay zero, so they add
    // nothing to the tap dot products.
    std::vector<T> img(C * pc.plane), grad(F * pc.span, T(0)), dimg(din ? C * pc.plane : 0);
    for (std::size_t b = 0; b < B; ++b) {
      const T* g = dout.data() + b * P * F;
      for (std::size_t oy = 0; oy < Ho; ++oy)
        for (std::size_t ox = 0; ox < Wo; ++ox)
          for (std::size_t f = 0; f < F; ++f) grad[f * pc.span + oy * W + ox] = g[(oy * Wo + ox) * F + f];
      for (std::size_t p = 0; p < P; ++p)
        for (std::size_t f = 0; f < F; ++f) dbias[f] += g[p * F + f];
      pc.to_planar(in.data() + b * H * W * C, img.data());
      if (din) std::fill(dimg.begin(), dimg.end(), T(0));
      for (std::size_t ky = 0; ky < l.kernel_h; ++ky)
        for (std::size_t kx = 0; kx < l.kernel_w; ++kx)
          for (std::size_t c = 0; c < C; ++c) {
            const std::size_t off = c * pc.plane + pc.tap_offset(ky, kx);
            const std::size_t k = (ky * l.kernel_w + kx) * C + c;
            for (std::size_t f = 0; f < F; ++f) {
              dkernel[k * F + f] += dot(img.data() + off, grad.data() + f * pc.span, pc.span);
              if (din) axpy(dimg.data() + off, grad.data() + f * pc.span, kernel[k * F + f], pc.span);
            }
          }
      if (din) {
        T* d = din->data() + b * H * W * C;
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t i = 0; i < H * W; ++i) d[i * C + c] = dimg[c * pc.plane + i];
      }
    }
    return;
  }
  std::vector<T> cols(K * P), dplanar(F * P), dcols(din ? K * P : 0);
  for (std::size_t b = 0; b < B; ++b) {
    const T* g = dout.data() + b * P * F;
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t f = 0; f < F; ++f) dplanar[f * P + p] = g[p * F + f];
    for (std::size_t p = 0; p < P; ++p)
      for (std::size_t f = 0; f < F; ++f) dbias[f] += g[p * F + f];
    im2col(in.data() + b * H * W * C, W, C, l, Ho, Wo, cols.data());
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t f = 0; f < F; ++f) dkernel[k * F + f] += dot(cols.data() + k * P, dplanar.data() + f * P, P);
    if (din) {
      std::fill(dcols.begin(), dcols.end(), T(0));
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t f = 0; f < F; ++f) axpy(dcols.data() + k * P, dplanar.data() + f * P, kernel[k * F + f], P);
      col2im_add(dcols.data(), W, C, l, Ho, Wo, din->data() + b * H * W * C);
    }
  }
}

template <typename T>
void relu_forward(const Tensor<T>& in, Tensor<T>& out) {
  out.shape = in.shape;
  out.values.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > T(0) ? in[i] : T(0);
}

template <typename T>
void relu_backward(const Tensor<T>& in, const Tensor<T>& dout, Tensor<T>& din) {
  din.shape = in.shape;
  din.values.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) din[i] = in[i] > T(0) ? dout[i] : T(0);
}

// argmax holds, per output element, the flat input index of the winner
// (first maximum in row-major window order).
template <typename T>
void maxpool_forward(const MaxPool2D& l, const Tensor<T>& in, Tensor<T>& out, std::vector<std::uint32_t>& argmax) {
  const std::size_t B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const std::size_t P = l.pool, S = l.stride;
  const std::size_t Ho = (H - P) / S + 1, Wo = (W - P) / S + 1;
  out.reset({B, Ho, Wo, C});
  argmax.assign(out.size(), 0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox)
        for (std::size_t c = 0; c < C; ++c) {
          std::size_t best = ((b * H + oy * S) * W + ox * S) * C + c;
          for (std::size_t py = 0; py < P; ++py)
            for (std::size_t px = 0; px < P; ++px) {
              const std::size_t idx = ((b * H + oy * S + py) * W + ox * S + px) * C + c;
              if (in[idx] > in[best]) best = idx;
            }
          const std::size_t o = ((b * Ho + oy) * Wo + ox) * C + c;
          out[o] = in[best];
          argmax[o] = static_cast<std::uint32_t>(best);
        }
}

template <typename T>
void maxpool_backward(const Shape& in_shape, const std::vector<std::uint32_t>& argmax, const Tensor<T>& dout,
                      Tensor<T>& din) {
  din.reset(in_shape);
  for (std::size_t o = 0; o < dout.size(); ++o) din[argmax[o]] += dout[o];
}

// Inverted dropout: kept units are scaled by 1 / (1 - rate) at training time.
template <typename T>
void dropout_forward(const Dropout& l, const Tensor<T>& in, Tensor<T>& out, std::vector<T>& mask, bool training,
                     Rng& rng) {
  out = in;
  mask.clear();
  if (!training || l.rate <= 0.0) return;
  const T scale = static_cast<T>(1.0 / (1.0 - l.rate));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  mask.resize(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    mask[i] = u(rng) >= l.rate ? scale : T(0);
    out[i] *= mask[i];
  }
}

template <typename T>
void dropout_backward(const std::vector<T>& mask, const Tensor<T>& dout, Tensor<T>& din) {
  din = dout;
  if (mask.empty()) return;
  for (std::size_t i = 0; i < din.size(); ++i) din[i] *= mask[i];
}

template <typename T>
void repeat_forward(const RepeatVector& l, const Tensor<T>& in, Tensor<T>& out) {
  const std::size_t B = in.dim(0), F = in.dim(1);
  out.reset({B, l.n, F});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < l.n; ++t)
      std::copy(in.data() + b * F, in.data() + (b + 1) * F, out.data() + (b * l.n + t) * F);
}

// Sum over the repeated positions.
template <typename T>
void repeat_backward(const Tensor<T>& dout, Tensor<T>& din) {
  const std::size_t B = dout.dim(0), N = dout.dim(1), F = dout.dim(2);
  din.reset({B, F});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < N; ++t) {
      const T* g = dout.data() + (b * N + t) * F;
      T* d = din.data() + b * F;
      for (std::size_t f = 0; f < F; ++f) d[f] += g[f];
    }
}

// y = x W + b, with x (B, F) and W (F, U).
template <typename T>
void dense_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& bias, Tensor<T>& out) {
  const std::size_t B = in.dim(0), F = in.dim(1), U = w.dim(1);
  out.reset({B, U});
  for (std::size_t b = 0; b < B; ++b) {
    T* o = out.data() + b * U;
    std::copy(bias.data(), bias.data() + U, o);
    const T* x = in.data() + b * F;
    for (std::size_t f = 0; f < F; ++f) {
      const T v = x[f];
      if (v == T(0)) continue;
      const T* wr = w.data() + f * U;
      for (std::size_t u = 0; u < U; ++u) o[u] += v * wr[u];
    }
  }
}

template <typename T>
void dense_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout, Tensor<T>& dw, Tensor<T>& db,
                    Tensor<T>* din) {
  const std::size_t B = in.dim(0), F = in.dim(1), U = w.dim(1);
  if (din) din->reset(in.shape);
  for (std::size_t b = 0; b < B; ++b) {
    const T* g = dout.data() + b * U;
    const T* x = in.data() + b * F;
    for (std::size_t u = 0; u < U; ++u) db[u] += g[u];
    for (std::size_t f = 0; f < F; ++f) {
      const T v = x[f];
      const T* wr = w.data() + f * U;
      if (v != T(0)) {
        T* dwr = dw.data() + f * U;
        for (std::size_t u = 0; u < U; ++u) dwr[u] += v * g[u];
      }
      if (din) (*din)[b * F + f] = dot(wr, g, U);
    }
  }
}

template <typename T>
void softmax_forward(const Tensor<T>& in, Tensor<T>& out) {
  const std::size_t B = in.dim(0), K = in.dim(1);
  out.reset(in.shape);
  for (std::size_t b = 0; b < B; ++b) {
    const T* z = in.data() + b * K;
    T* p = out.data() + b * K;
    const T zmax = *std::max_element(z, z + K);
    T sum = T(0);
    for (std::size_t k = 0; k < K; ++k) sum += (p[k] = std::exp(z[k] - zmax));
    for (std::size_t k = 0; k < K; ++k) p[k] /= sum;
  }
}

// dz = p * (dp - sum(dp * p)) per row.
template <typename T>
void softmax_backward(const Tensor<T>& probs, const Tensor<T>& dout, Tensor<T>& din) {
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  din.reset(probs.shape);
  for (std::size_t b = 0; b < B; ++b) {
    const T* p = probs.data() + b * K;
    const T* g = dout.data() + b * K;
    T dot = T(0);
    for (std::size_t k = 0; k < K; ++k) dot += p[k] * g[k];
    for (std::size_t k = 0; k < K; ++k) din[b * K + k] = p[k] * (g[k] - dot);
  }
}

// Saved LSTM state: activated gates [i, f, g, o] per step (B, T, 4U), cell
// states (B, T, U) and tanh of the cells (B, T, U). Hidden states are the
// layer output when return_sequences is set and are kept separately otherwise.
template <typename T>
struct LstmCache {
  Tensor<T> gates;
  Tensor<T> cells;
  Tensor<T> cell_tanh;
  Tensor<T> hidden;
  bool repeated_input{false};  // every time step received identical input
};

template <typename T>
bool time_steps_identical(const Tensor<T>& in) {
  const std::size_t B = in.dim(0), Tn = in.dim(1), F = in.dim(2);
  for (std::size_t b = 0; b < B; ++b) {
    const T* first = in.data() + b * Tn * F;
    for (std::size_t t = 1; t < Tn; ++t)
      if (std::memcmp(first, first + t * F, F * sizeof(T)) != 0) return false;
  }
  return true;
}

template <typename T>
void lstm_forward(const LSTM& l, const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& uh, const Tensor<T>& bias,
                  Tensor<T>& out, LstmCache<T>& cache) {
  const std::size_t B = in.dim(0), Tn = in.dim(1), F = in.dim(2), U = l.units, G = 4 * U;
  cache.repeated_input = time_steps_identical(in);
  cache.gates.reset({B, Tn, G});
  cache.cells.reset({B, Tn, U});
  cache.cell_tanh.reset({B, Tn, U});
  cache.hidden.reset({B, Tn, U});
  std::vector<T> proj(G), z(G);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < Tn; ++t) {
      if (t == 0 || !cache.repeated_input) {
        std::copy(bias.data(), bias.data() + G, proj.begin());
        const T* x = in.data() + (b * Tn + t) * F;
        for (std::size_t f = 0; f < F; ++f) {
          const T v = x[f];
          if (v == T(0)) continue;
          const T* wr = w.data() + f * G;
          for (std::size_t g = 0; g < G; ++g) proj[g] += v * wr[g];
        }
      }
      z = proj;
      if (t > 0) {
        const T* h_prev = cache.hidden.data() + (b * Tn + t - 1) * U;
        for (std::size_t u = 0; u < U; ++u) {
          const T v = h_prev[u];
          const T* ur = uh.data() + u * G;
          for (std::size_t g = 0; g < G; ++g) z[g] += v * ur[g];
        }
      }
      T* gate = cache.gates.data() + (b * Tn + t) * G;
      T* c = cache.cells.data() + (b * Tn + t) * U;
      T* tc = cache.cell_tanh.data() + (b * Tn + t) * U;
      T* h = cache.hidden.data() + (b * Tn + t) * U;
      const T* c_prev = t > 0 ? cache.cells.data() + (b * Tn + t - 1) * U : nullptr;
      for (std::size_t u = 0; u < U; ++u) {
        const T ig = sigmoid(z[u]);
        const T fg = sigmoid(z[U + u]);
        const T gg = std::tanh(z[2 * U + u]);
        const T og = sigmoid(z[3 * U + u]);
        gate[u] = ig;
        gate[U + u] = fg;
        gate[2 * U + u] = gg;
        gate[3 * U + u] = og;
        c[u] = (c_prev ? fg * c_prev[u] : T(0)) + ig * gg;
        tc[u] = std::tanh(c[u]);
        h[u] = og * tc[u];
      }
    }
  }
  if (l.return_sequences) {
    out = cache.hidden;
  } else {
    out.reset({B, U});
    for (std::size_t b = 0; b < B; ++b)
      std::copy(cache.hidden.data() + (b * Tn + Tn - 1) * U, cache.hidden.data() + (b * Tn + Tn) * U,
                out.data() + b * U);
  }
}

// Backpropagation through time. When the forward input was repeated across
// steps and `per_step_input_grad` is false, din receives the step-summed
// gradient in step 0 and zeros elsewhere; a following RepeatVector backward
// (which sums over steps) then yields the exact result at a quarter of the cost.
template <typename T>
void lstm_backward(const LSTM& l, const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& uh,
                   const LstmCache<T>& cache, const Tensor<T>& dout, Tensor<T>& dw, Tensor<T>& duh, Tensor<T>& db,
                   Tensor<T>* din, bool per_step_input_grad) {
  const std::size_t B = in.dim(0), Tn = in.dim(1), F = in.dim(2), U = l.units, G = 4 * U;
  const bool fused = cache.repeated_input && !per_step_input_grad;
  if (din) din->reset(in.shape);
  std::vector<T> dh_next(U), dc_next(U), dz(G), dz_sum(G);
  for (std::size_t b = 0; b < B; ++b) {
    std::fill(dh_next.begin(), dh_next.end(), T(0));
    std::fill(dc_next.begin(), dc_next.end(), T(0));
    std::fill(dz_sum.begin(), dz_sum.end(), T(0));
    for (std::size_t tt = Tn; tt-- > 0;) {
      const T* gate = cache.gates.data() + (b * Tn + tt) * G;
      const T* tc = cache.cell_tanh.data() + (b * Tn + tt) * U;
      const T* c_prev = tt > 0 ? cache.cells.data() + (b * Tn + tt - 1) * U : nullptr;
      const T* g_out = nullptr;
      if (l.return_sequences)
        g_out = dout.data() + (b * Tn + tt) * U;
      else if (tt == Tn - 1)
        g_out = dout.data() + b * U;
      for (std::size_t u = 0; u < U; ++u) {
        const T ig = gate[u], fg = gate[U + u], gg = gate[2 * U + u], og = gate[3 * U + u];
        const T dh = (g_out ? g_out[u] : T(0)) + dh_next[u];
        const T d_o = dh * tc[u];
        const T dc = dh * og * (T(1) - tc[u] * tc[u]) + dc_next[u];
        dz[u] = dc * gg * ig * (T(1) - ig);
        dz[U + u] = (c_prev ? dc * c_prev[u] : T(0)) * fg * (T(1) - fg);
        dz[2 * U + u] = dc * ig * (T(1) - gg * gg);
        dz[3 * U + u] = d_o * og * (T(1) - og);
        dc_next[u] = dc * fg;
      }
      for (std::size_t g = 0; g < G; ++g) db[g] += dz[g];
      // Recurrent weights and the gradient flowing to h_{t-1}.
      if (tt > 0) {
        const T* h_prev = cache.hidden.data() + (b * Tn + tt - 1) * U;
        for (std::size_t u = 0; u < U; ++u) {
          const T v = h_prev[u];
          T* dur = duh.data() + u * G;
          axpy(dur, dz.data(), v, G);
          dh_next[u] = dot(uh.data() + u * G, dz.data(), G);
        }
      } else {
        std::fill(dh_next.begin(), dh_next.end(), T(0));
      }
      if (cache.repeated_input) {
        for (std::size_t g = 0; g < G; ++g) dz_sum[g] += dz[g];
      } else {
        const T* x = in.data() + (b * Tn + tt) * F;
        for (std::size_t f = 0; f < F; ++f) {
          const T v = x[f];
          if (v == T(0)) continue;
          T* dwr = dw.data() + f * G;
          for (std::size_t g = 0; g < G; ++g) dwr[g] += v * dz[g];
        }
      }
      if (din && !fused) {
        T* dx = din->data() + (b * Tn + tt) * F;
        for (std::size_t f = 0; f < F; ++f) dx[f] = dot(w.data() + f * G, dz.data(), G);
      }
    }
    if (cache.repeated_input) {
      const T* x = in.data() + b * Tn * F;
      for (std::size_t f = 0; f < F; ++f) {
        const T v = x[f];
        if (v == T(0)) continue;
        T* dwr = dw.data() + f * G;
        for (std::size_t g = 0; g < G; ++g) dwr[g] += v * dz_sum[g];
      }
      if (din && fused) {
        T* dx = din->data() + b * Tn * F;
        for (std::size_t f = 0; f < F; ++f) dx[f] = dot(w.data() + f * G, dz_sum.data(), G);
      }
    }
  }
}

}  // namespace kernels

}  // namespace emospec::nn

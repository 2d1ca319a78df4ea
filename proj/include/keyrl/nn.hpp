#pragma once
// Minimal 1-D neural network core: channel-major tensors, dilated temporal
// convolution with symmetric zero padding (output length == input length),
// pair max-pooling / nearest-neighbour upsampling, ReLU, and Adam.  All math
// is double precision and runs through the dispatched kernels.

#include <cstdint>
#include <span>
#include <vector>

#include "keyrl/rng.hpp"

namespace keyrl::nn {

// Channel-major: v[c * length + t].
struct Tensor1D {
  int channels = 0;
  int length = 0;
  std::vector<double> v;

  Tensor1D() = default;
  Tensor1D(int c, int l)
      : channels(c), length(l), v(static_cast<std::size_t>(c) * l, 0.0) {}

  double* row(int c) { return v.data() + static_cast<std::size_t>(c) * length; }
  const double* row(int c) const {
    return v.data() + static_cast<std::size_t>(c) * length;
  }
  double& at(int c, int t) { return v[static_cast<std::size_t>(c) * length + t]; }
  double at(int c, int t) const {
    return v[static_cast<std::size_t>(c) * length + t];
  }
  std::size_t size() const { return v.size(); }
};

// Dilated 1-D convolution, odd kernel width, stride 1.  Symmetric zero
// padding of dilation*(kernel_width-1)/2 keeps output length equal to input
// length.
struct ConvLayer {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_width = 3;
  int dilation = 1;
  std::vector<double> weights;  // [out][in][k]
  std::vector<double> bias;     // [out]

  ConvLayer() = default;
  ConvLayer(int in_ch, int out_ch, int kw, int dil);

  // Zero-mean uniform weights scaled by 1/sqrt(fan_in), biases zero.
  void init(Rng& rng);

  double* w(int o, int i) {
    return weights.data() +
           (static_cast<std::size_t>(o) * in_channels + i) * kernel_width;
  }
  const double* w(int o, int i) const {
    return weights.data() +
           (static_cast<std::size_t>(o) * in_channels + i) * kernel_width;
  }
  int pad() const { return dilation * (kernel_width - 1) / 2; }
  std::size_t weight_count() const { return weights.size(); }
};

Tensor1D conv1d_forward(const ConvLayer& layer, const Tensor1D& x);

struct ConvGrads {
  Tensor1D grad_input;
  std::vector<double> grad_weights;
  std::vector<double> grad_bias;
};
ConvGrads conv1d_backward(const ConvLayer& layer, const Tensor1D& x,
                          const Tensor1D& grad_out);

// Max-pool over adjacent pairs (length must be even); argmax side recorded
// for the backward pass.  Ties keep the even (earlier) element.
struct Pooled {
  Tensor1D out;
  std::vector<std::uint8_t> take_odd;  // [c * out_len + t]
};
Pooled downsample2(const Tensor1D& x);
// Routes grad_out back to the argmax slots of the pooling input.
Tensor1D downsample2_backward(const Pooled& pooled, const Tensor1D& grad_out);

// Nearest-neighbour: each input element duplicated to two outputs.
Tensor1D upsample2(const Tensor1D& x);
// Adjoint: sums each output pair back onto its source element.
Tensor1D upsample2_backward(const Tensor1D& grad_out);

Tensor1D relu_forward(const Tensor1D& x);
Tensor1D relu_backward(const Tensor1D& x, const Tensor1D& grad_out);

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  std::int64_t step = 0;
  std::vector<double> m, v;

  AdamState() = default;
  AdamState(std::size_t n, const AdamConfig& c)
      : cfg(c), m(n, 0.0), v(n, 0.0) {}
};

// One bias-corrected Adam update over the concatenation of the param views.
// Views and grads must line up pairwise and sum to the state size.
void adam_step(std::vector<std::span<double>> params,
               std::vector<std::span<const double>> grads, AdamState& state);

}  // namespace keyrl::nn

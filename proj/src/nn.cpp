#include "keyrl/nn.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "keyrl/kernels.hpp"

namespace keyrl::nn {

ConvLayer::ConvLayer(int in_ch, int out_ch, int kw, int dil)
    : in_channels(in_ch),
      out_channels(out_ch),
      kernel_width(kw),
      dilation(dil),
      weights(static_cast<std::size_t>(out_ch) * in_ch * kw, 0.0),
      bias(out_ch, 0.0) {
  if (in_ch <= 0 || out_ch <= 0 || dil <= 0)
    throw std::invalid_argument("ConvLayer: channels and dilation must be positive");
  if (kw <= 0 || kw % 2 == 0)
    throw std::invalid_argument("ConvLayer: kernel width must be odd and positive");
}

void ConvLayer::init(Rng& rng) {
  const double scale =
      1.0 / std::sqrt(static_cast<double>(in_channels) * kernel_width);
  for (double& w : weights) w = rng.uniform(-scale, scale);
  for (double& b : bias) b = 0.0;
}

namespace {

// Copies x into a buffer with `pad` zeros on each side of every channel row.
Tensor1D pad_input(const Tensor1D& x, int pad) {
  Tensor1D p(x.channels, x.length + 2 * pad);
  for (int c = 0; c < x.channels; ++c)
    std::memcpy(p.row(c) + pad, x.row(c), sizeof(double) * x.length);
  return p;
}

void check_input(const ConvLayer& layer, const Tensor1D& x) {
  if (x.channels != layer.in_channels)
    throw std::invalid_argument("conv1d: input channel mismatch");
  if (x.length <= 0) throw std::invalid_argument("conv1d: empty input");
}

}  // namespace

Tensor1D conv1d_forward(const ConvLayer& layer, const Tensor1D& x) {
  check_input(layer, x);
  const auto& k = kern::active();
  const int L = x.length;
  const Tensor1D xp = pad_input(x, layer.pad());
  Tensor1D out(layer.out_channels, L);
  for (int o = 0; o < layer.out_channels; ++o) {
    double* orow = out.row(o);
    for (int t = 0; t < L; ++t) orow[t] = layer.bias[o];
    for (int i = 0; i < layer.in_channels; ++i) {
      const double* xrow = xp.row(i);
      const double* w = layer.w(o, i);
      for (int kk = 0; kk < layer.kernel_width; ++kk)
        k.axpy(L, w[kk], xrow + kk * layer.dilation, orow);
    }
  }
  return out;
}

ConvGrads conv1d_backward(const ConvLayer& layer, const Tensor1D& x,
                          const Tensor1D& grad_out) {
  check_input(layer, x);
  if (grad_out.channels != layer.out_channels || grad_out.length != x.length)
    throw std::invalid_argument("conv1d_backward: grad_out shape mismatch");
  const auto& k = kern::active();
  const int L = x.length;
  const int pad = layer.pad();
  const Tensor1D xp = pad_input(x, pad);

  ConvGrads g;
  g.grad_weights.assign(layer.weights.size(), 0.0);
  g.grad_bias.assign(layer.bias.size(), 0.0);
  Tensor1D gxp(x.channels, x.length + 2 * pad);  // grad wrt padded input

  for (int o = 0; o < layer.out_channels; ++o) {
    const double* grow = grad_out.row(o);
    g.grad_bias[o] = k.sum(L, grow);
    for (int i = 0; i < layer.in_channels; ++i) {
      const double* xrow = xp.row(i);
      double* gxrow = gxp.row(i);
      const double* w = layer.w(o, i);
      double* gw = g.grad_weights.data() +
                   (static_cast<std::size_t>(o) * layer.in_channels + i) *
                       layer.kernel_width;
      for (int kk = 0; kk < layer.kernel_width; ++kk) {
        const int off = kk * layer.dilation;
        gw[kk] += k.dot(L, grow, xrow + off);
        k.axpy(L, w[kk], grow, gxrow + off);
      }
    }
  }
  // Crop the padding margins off the input gradient.
  g.grad_input = Tensor1D(x.channels, L);
  for (int c = 0; c < x.channels; ++c)
    std::memcpy(g.grad_input.row(c), gxp.row(c) + pad, sizeof(double) * L);
  return g;
}

Pooled downsample2(const Tensor1D& x) {
  if (x.length % 2 != 0)
    throw std::invalid_argument("downsample2: length must be even");
  const auto& k = kern::active();
  const int out_len = x.length / 2;
  Pooled p;
  p.out = Tensor1D(x.channels, out_len);
  p.take_odd.assign(static_cast<std::size_t>(x.channels) * out_len, 0);
  for (int c = 0; c < x.channels; ++c)
    k.maxpair(out_len, x.row(c), p.out.row(c),
              p.take_odd.data() + static_cast<std::size_t>(c) * out_len);
  return p;
}

Tensor1D downsample2_backward(const Pooled& pooled, const Tensor1D& grad_out) {
  if (grad_out.channels != pooled.out.channels ||
      grad_out.length != pooled.out.length)
    throw std::invalid_argument("downsample2_backward: shape mismatch");
  Tensor1D gx(pooled.out.channels, pooled.out.length * 2);
  for (int c = 0; c < grad_out.channels; ++c) {
    const double* grow = grad_out.row(c);
    const std::uint8_t* odd =
        pooled.take_odd.data() + static_cast<std::size_t>(c) * grad_out.length;
    double* gxrow = gx.row(c);
    for (int t = 0; t < grad_out.length; ++t)
      gxrow[2 * t + (odd[t] ? 1 : 0)] = grow[t];
  }
  return gx;
}

Tensor1D upsample2(const Tensor1D& x) {
  Tensor1D out(x.channels, x.length * 2);
  for (int c = 0; c < x.channels; ++c) {
    const double* xrow = x.row(c);
    double* orow = out.row(c);
    for (int t = 0; t < x.length; ++t) orow[2 * t] = orow[2 * t + 1] = xrow[t];
  }
  return out;
}

Tensor1D upsample2_backward(const Tensor1D& grad_out) {
  if (grad_out.length % 2 != 0)
    throw std::invalid_argument("upsample2_backward: length must be even");
  const auto& k = kern::active();
  Tensor1D gx(grad_out.channels, grad_out.length / 2);
  for (int c = 0; c < grad_out.channels; ++c)
    k.pairsum(gx.length, grad_out.row(c), gx.row(c));
  return gx;
}

Tensor1D relu_forward(const Tensor1D& x) {
  Tensor1D out(x.channels, x.length);
  kern::active().relu_fwd(x.size(), x.v.data(), out.v.data());
  return out;
}

Tensor1D relu_backward(const Tensor1D& x, const Tensor1D& grad_out) {
  if (grad_out.channels != x.channels || grad_out.length != x.length)
    throw std::invalid_argument("relu_backward: shape mismatch");
  Tensor1D gx(x.channels, x.length);
  kern::active().relu_bwd(x.size(), x.v.data(), grad_out.v.data(),
                          gx.v.data());
  return gx;
}

void adam_step(std::vector<std::span<double>> params,
               std::vector<std::span<const double>> grads, AdamState& state) {
  if (params.size() != grads.size())
    throw std::invalid_argument("adam_step: param/grad view count mismatch");
  std::size_t total = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].size() != grads[i].size())
      throw std::invalid_argument("adam_step: param/grad view size mismatch");
    total += params[i].size();
  }
  if (total != state.m.size())
    throw std::invalid_argument("adam_step: state size mismatch");

  state.step += 1;
  const double bias1 = 1.0 - std::pow(state.cfg.beta1, double(state.step));
  const double bias2 = 1.0 - std::pow(state.cfg.beta2, double(state.step));
  const auto& k = kern::active();
  std::size_t off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    k.adam_update(params[i].size(), params[i].data(), grads[i].data(),
                  state.m.data() + off, state.v.data() + off, state.cfg.lr,
                  state.cfg.beta1, state.cfg.beta2, state.cfg.eps, bias1,
                  bias2);
    off += params[i].size();
  }
}

}  // namespace keyrl::nn

#include "keyrl/usampler.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace keyrl::sampler {
namespace {

constexpr std::uint64_t kSaltInit = 0x554e4554;  // weight init stream

constexpr int kEncoderOut[kNumStages] = {32, 64, 128, 256};
constexpr int kEncoderDil[kNumStages] = {1, 2, 4, 8};
// Decoder stage i consumes concat(upsampled, skip) and narrows back down.
constexpr int kDecoderIn[kNumStages] = {256 + 256, 256 + 128, 128 + 64,
                                        64 + 32};
constexpr int kDecoderOut[kNumStages] = {256, 128, 64, 32};

nn::Tensor1D concat_channels(const nn::Tensor1D& a, const nn::Tensor1D& b) {
  if (a.length != b.length)
    throw std::invalid_argument("concat: length mismatch");
  nn::Tensor1D out(a.channels + b.channels, a.length);
  std::memcpy(out.v.data(), a.v.data(), sizeof(double) * a.size());
  std::memcpy(out.v.data() + a.size(), b.v.data(), sizeof(double) * b.size());
  return out;
}

void split_channels(const nn::Tensor1D& cat, int first_channels,
                    nn::Tensor1D& first, nn::Tensor1D& second) {
  first = nn::Tensor1D(first_channels, cat.length);
  second = nn::Tensor1D(cat.channels - first_channels, cat.length);
  std::memcpy(first.v.data(), cat.v.data(), sizeof(double) * first.size());
  std::memcpy(second.v.data(), cat.v.data() + first.size(),
              sizeof(double) * second.size());
}

void add_into(nn::Tensor1D& dst, const nn::Tensor1D& src) {
  for (std::size_t i = 0; i < dst.v.size(); ++i) dst.v[i] += src.v[i];
}

}  // namespace

SamplerParams::SamplerParams() {
  int in_ch = kMaxQueries;
  for (int s = 0; s < kNumStages; ++s) {
    encoder[s] = nn::ConvLayer(in_ch, kEncoderOut[s], 3, kEncoderDil[s]);
    in_ch = kEncoderOut[s];
  }
  for (int s = 0; s < kNumStages; ++s)
    decoder[s] = nn::ConvLayer(kDecoderIn[s], kDecoderOut[s], 3, 1);
  head = nn::ConvLayer(kDecoderOut[kNumStages - 1], 1, 1, 1);
}

SamplerParams SamplerParams::init(std::uint64_t seed) {
  SamplerParams p;
  Rng rng(stream_seed(seed, kSaltInit));
  for (auto& l : p.encoder) l.init(rng);
  for (auto& l : p.decoder) l.init(rng);
  p.head.init(rng);
  return p;
}

namespace {
template <typename Params, typename Span>
std::vector<Span> views_impl(Params& p) {
  std::vector<Span> v;
  auto push = [&](auto& layer) {
    v.push_back(Span(layer.weights));
    v.push_back(Span(layer.bias));
  };
  for (auto& l : p.encoder) push(l);
  for (auto& l : p.decoder) push(l);
  push(p.head);
  return v;
}
}  // namespace

std::vector<std::span<double>> SamplerParams::param_views() {
  return views_impl<SamplerParams, std::span<double>>(*this);
}
std::vector<std::span<const double>> SamplerParams::param_views() const {
  return views_impl<const SamplerParams, std::span<const double>>(*this);
}

std::size_t SamplerParams::param_count() const {
  std::size_t n = 0;
  for (const auto& v : param_views()) n += v.size();
  return n;
}

std::vector<nn::TensorView> SamplerParams::named_tensors() const {
  std::vector<nn::TensorView> out;
  auto push = [&](const std::string& name, const nn::ConvLayer& l) {
    out.push_back({name + ".weight",
                   {l.out_channels, l.in_channels, l.kernel_width},
                   std::span<const double>(l.weights)});
    out.push_back({name + ".bias", {l.out_channels},
                   std::span<const double>(l.bias)});
  };
  for (int s = 0; s < kNumStages; ++s)
    push("enc" + std::to_string(s + 1), encoder[s]);
  for (int s = 0; s < kNumStages; ++s)
    push("dec" + std::to_string(s + 1), decoder[s]);
  push("head", head);
  return out;
}

void SamplerParams::save(const std::string& path) const {
  nn::save_checkpoint(path, named_tensors());
}

SamplerParams SamplerParams::from_checkpoint(const std::string& path) {
  const auto loaded = nn::load_checkpoint(path);
  SamplerParams p;
  const auto expect = p.named_tensors();
  if (loaded.size() != expect.size())
    throw std::runtime_error("sampler checkpoint: tensor count mismatch");
  auto mutable_views = p.param_views();  // same order as named_tensors
  for (std::size_t i = 0; i < expect.size(); ++i) {
    if (loaded[i].name != expect[i].name)
      throw std::runtime_error("sampler checkpoint: unexpected tensor " +
                               loaded[i].name);
    if (loaded[i].dims != expect[i].dims)
      throw std::runtime_error("sampler checkpoint: shape mismatch for " +
                               loaded[i].name);
    std::memcpy(mutable_views[i].data(), loaded[i].data.data(),
                sizeof(double) * loaded[i].data.size());
  }
  return p;
}

SamplerGrads SamplerGrads::zeros_like(const SamplerParams& p) {
  SamplerGrads g;
  auto zero = [](const nn::ConvLayer& l, LayerGrads& lg) {
    lg.w.assign(l.weights.size(), 0.0);
    lg.b.assign(l.bias.size(), 0.0);
  };
  for (int s = 0; s < kNumStages; ++s) zero(p.encoder[s], g.layers[s]);
  for (int s = 0; s < kNumStages; ++s)
    zero(p.decoder[s], g.layers[kNumStages + s]);
  zero(p.head, g.layers[2 * kNumStages]);
  return g;
}

void SamplerGrads::accumulate(const SamplerGrads& other, double scale) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t j = 0; j < layers[i].w.size(); ++j)
      layers[i].w[j] += scale * other.layers[i].w[j];
    for (std::size_t j = 0; j < layers[i].b.size(); ++j)
      layers[i].b[j] += scale * other.layers[i].b[j];
  }
}

void SamplerGrads::scale(double s) {
  for (auto& l : layers) {
    for (double& x : l.w) x *= s;
    for (double& x : l.b) x *= s;
  }
}

std::vector<std::span<const double>> SamplerGrads::views() const {
  std::vector<std::span<const double>> v;
  for (const auto& l : layers) {
    v.push_back(std::span<const double>(l.w));
    v.push_back(std::span<const double>(l.b));
  }
  return v;
}

nn::Tensor1D pad_queries(const env::SimilarityMatrix& m) {
  if (m.n_queries < 1 || m.n_queries > kMaxQueries)
    throw std::invalid_argument("pad_queries: matrix must have 1..4 query rows");
  if (m.n_frames < 1 ||
      m.values.size() != static_cast<std::size_t>(m.n_queries) * m.n_frames)
    throw std::invalid_argument("pad_queries: inconsistent matrix shape");
  nn::Tensor1D x(kMaxQueries, m.n_frames);
  for (int q = 0; q < m.n_queries; ++q)
    std::memcpy(x.row(q), m.row(q), sizeof(double) * m.n_frames);
  return x;
}

std::uint64_t ForwardCache::pattern() const {
  std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over decision bits
  auto mix_bit = [&h](bool bit) {
    h ^= bit ? 0x9du : 0x3bu;
    h *= 0x100000001b3ull;
  };
  for (const auto& t : conv_pre)
    for (double v : t.v) mix_bit(v > 0.0);
  for (const auto& t : dec_pre)
    for (double v : t.v) mix_bit(v > 0.0);
  for (const auto& p : pooled)
    for (std::uint8_t b : p.take_odd) mix_bit(b != 0);
  return h;
}

std::vector<double> sampler_forward(const SamplerParams& params,
                                    const env::SimilarityMatrix& m,
                                    ForwardCache* cache) {
  const nn::Tensor1D base = pad_queries(m);
  const int n = base.length;
  const int padded = std::max(
      kLengthMultiple,
      ((n + kLengthMultiple - 1) / kLengthMultiple) * kLengthMultiple);

  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c = ForwardCache{};
  c.n_frames = n;
  c.padded_len = padded;
  c.x = nn::Tensor1D(kMaxQueries, padded);  // sentinel columns stay zero
  for (int q = 0; q < kMaxQueries; ++q)
    std::memcpy(c.x.row(q), base.row(q), sizeof(double) * n);

  // Encoder: conv -> relu -> pool, skip taken before pooling.
  const nn::Tensor1D* cur = &c.x;
  for (int s = 0; s < kNumStages; ++s) {
    c.conv_pre[s] = nn::conv1d_forward(params.encoder[s], *cur);
    c.act[s] = nn::relu_forward(c.conv_pre[s]);
    c.pooled[s] = nn::downsample2(c.act[s]);
    cur = &c.pooled[s].out;
  }

  // Decoder: upsample -> concat skip -> conv -> relu.
  for (int s = 0; s < kNumStages; ++s) {
    const nn::Tensor1D up = nn::upsample2(*cur);
    const nn::Tensor1D& skip = c.act[kNumStages - 1 - s];
    c.cat_in[s] = concat_channels(up, skip);
    c.dec_pre[s] = nn::conv1d_forward(params.decoder[s], c.cat_in[s]);
    c.dec_act[s] = nn::relu_forward(c.dec_pre[s]);
    cur = &c.dec_act[s];
  }

  const nn::Tensor1D scores_padded = nn::conv1d_forward(params.head, *cur);
  c.scores.assign(scores_padded.v.begin(), scores_padded.v.begin() + n);
  return c.scores;
}

SamplerGrads backward_from_scores(const SamplerParams& params,
                                  const ForwardCache& cache,
                                  std::span<const double> grad_scores) {
  if (static_cast<int>(grad_scores.size()) != cache.n_frames)
    throw std::invalid_argument("backward_from_scores: gradient length mismatch");
  if (cache.padded_len <= 0 || cache.x.length != cache.padded_len)
    throw std::invalid_argument("backward_from_scores: empty or invalid cache");

  SamplerGrads g = SamplerGrads::zeros_like(params);

  // Head (sentinel columns get zero gradient).
  nn::Tensor1D gscore(1, cache.padded_len);
  std::memcpy(gscore.v.data(), grad_scores.data(),
              sizeof(double) * cache.n_frames);
  nn::ConvGrads hg = nn::conv1d_backward(params.head,
                                         cache.dec_act[kNumStages - 1], gscore);
  g.layers[2 * kNumStages].w = std::move(hg.grad_weights);
  g.layers[2 * kNumStages].b = std::move(hg.grad_bias);

  // Decoder stages in reverse; collect the skip gradients for the encoder.
  std::array<nn::Tensor1D, kNumStages> skip_grad;  // for act[0..3]
  nn::Tensor1D gdec_act = std::move(hg.grad_input);
  nn::Tensor1D gpool_top;  // eventually grad wrt pooled[3].out
  for (int s = kNumStages - 1; s >= 0; --s) {
    const nn::Tensor1D gpre = nn::relu_backward(cache.dec_pre[s], gdec_act);
    nn::ConvGrads dg = nn::conv1d_backward(params.decoder[s], cache.cat_in[s],
                                           gpre);
    g.layers[kNumStages + s].w = std::move(dg.grad_weights);
    g.layers[kNumStages + s].b = std::move(dg.grad_bias);
    nn::Tensor1D gup, gskip;
    const int up_channels =
        s == 0 ? kEncoderOut[kNumStages - 1] : kDecoderOut[s - 1];
    split_channels(dg.grad_input, up_channels, gup, gskip);
    skip_grad[kNumStages - 1 - s] = std::move(gskip);
    if (s == 0)
      gpool_top = nn::upsample2_backward(gup);
    else
      gdec_act = nn::upsample2_backward(gup);
  }

  // Encoder stages in reverse; each activation sums its pooling-path and
  // skip-path gradients.
  nn::Tensor1D gpool_out = std::move(gpool_top);
  for (int s = kNumStages - 1; s >= 0; --s) {
    nn::Tensor1D gact = nn::downsample2_backward(cache.pooled[s], gpool_out);
    add_into(gact, skip_grad[s]);
    const nn::Tensor1D gpre = nn::relu_backward(cache.conv_pre[s], gact);
    const nn::Tensor1D& input = s == 0 ? cache.x : cache.pooled[s - 1].out;
    nn::ConvGrads eg = nn::conv1d_backward(params.encoder[s], input, gpre);
    g.layers[s].w = std::move(eg.grad_weights);
    g.layers[s].b = std::move(eg.grad_bias);
    gpool_out = std::move(eg.grad_input);  // grad wrt pooled[s-1].out
  }
  return g;
}

SamplerGrads reinforce_backward(const SamplerParams& params,
                                const ForwardCache& cache,
                                const sampling::Draw& draw, double advantage) {
  if (cache.scores.empty())
    throw std::invalid_argument("reinforce_backward: cache has no scores");
  const double replay = sampling::ordered_logprob(
      cache.scores, draw.indices, draw.temperature, draw.top_p);
  if (!(std::abs(replay - draw.total_logprob) <= 1e-9))
    throw std::invalid_argument(
        "reinforce_backward: draw log-probability does not match cached "
        "scores (stale cache or foreign draw)");

  // d(-A * logprob)/d(scores), then back through the net.
  std::vector<double> gs = sampling::logprob_grad_scores(
      cache.scores, draw.indices, draw.temperature, draw.top_p);
  for (double& v : gs) v *= -advantage;
  return backward_from_scores(params, cache, gs);
}

}  // namespace keyrl::sampler

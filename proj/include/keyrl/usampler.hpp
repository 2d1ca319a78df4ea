#pragma once
// Query-conditioned frame scorer: a 1-D U-Net over the similarity matrix.
//
// The query axis is padded to a fixed 4 channels; the frame axis is
// right-padded with all-zero sentinel columns to the next multiple of 16 so
// the four pooling stages divide evenly, and the head output is cropped back
// so sentinel frames can never be drawn.  Encoder convs widen channels
// {32, 64, 128, 256} with dilations {1, 2, 4, 8}; each decoder stage
// upsamples, concatenates the matching encoder skip, and convolves back down
// {256, 128, 64, 32}; a width-1 conv emits one score per frame.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "keyrl/checkpoint.hpp"
#include "keyrl/env.hpp"
#include "keyrl/nn.hpp"
#include "keyrl/sampling.hpp"

namespace keyrl::sampler {

constexpr int kMaxQueries = 4;
constexpr int kLengthMultiple = 16;
constexpr int kNumStages = 4;

struct SamplerParams {
  std::array<nn::ConvLayer, kNumStages> encoder;
  std::array<nn::ConvLayer, kNumStages> decoder;
  nn::ConvLayer head;

  SamplerParams();  // architecture built, weights zero
  static SamplerParams init(std::uint64_t seed);  // fan-in scaled random

  // Stable order: enc1..enc4, dec1..dec4, head; weights before bias.
  std::vector<std::span<double>> param_views();
  std::vector<std::span<const double>> param_views() const;
  std::size_t param_count() const;

  std::vector<nn::TensorView> named_tensors() const;
  // Throws std::runtime_error when names/shapes do not match this
  // architecture.
  static SamplerParams from_checkpoint(const std::string& path);
  void save(const std::string& path) const;
};

// Gradients in the same shapes/order as SamplerParams.
struct SamplerGrads {
  struct LayerGrads {
    std::vector<double> w, b;
  };
  std::array<LayerGrads, 2 * kNumStages + 1> layers;

  static SamplerGrads zeros_like(const SamplerParams& p);
  void accumulate(const SamplerGrads& other, double scale);
  void scale(double s);
  std::vector<std::span<const double>> views() const;
};

// S rows copied into the first channels of a 4-channel tensor, the rest zero.
// Throws when S has more than kMaxQueries rows or is empty/inconsistent.
nn::Tensor1D pad_queries(const env::SimilarityMatrix& m);

// Everything the backward pass needs, captured by sampler_forward.
struct ForwardCache {
  int n_frames = 0;
  int padded_len = 0;
  nn::Tensor1D x;  // padded input, 4 x padded_len
  std::array<nn::Tensor1D, kNumStages> conv_pre;   // encoder conv outputs
  std::array<nn::Tensor1D, kNumStages> act;        // relu(conv_pre)
  std::array<nn::Pooled, kNumStages> pooled;
  std::array<nn::Tensor1D, kNumStages> cat_in;     // decoder concat inputs
  std::array<nn::Tensor1D, kNumStages> dec_pre;    // decoder conv outputs
  std::array<nn::Tensor1D, kNumStages> dec_act;
  std::vector<double> scores;  // cropped to n_frames

  // Fingerprint of every ReLU sign and pooling argmax decision; used by the
  // finite-difference checker to detect non-smooth intervals.
  std::uint64_t pattern() const;
};

// One score per (real) frame.  cache may be null when no backward follows.
std::vector<double> sampler_forward(const SamplerParams& params,
                                    const env::SimilarityMatrix& m,
                                    ForwardCache* cache = nullptr);

// Gradients of d(loss)/d(params) given d(loss)/d(scores).
SamplerGrads backward_from_scores(const SamplerParams& params,
                                  const ForwardCache& cache,
                                  std::span<const double> grad_scores);

// Gradients of the REINFORCE loss  -advantage * total_logprob(draw)  for a
// draw produced from this cache's scores.  Throws std::invalid_argument when
// the draw's recorded log-probability cannot be reproduced from the cached
// scores (stale cache or foreign draw).
SamplerGrads reinforce_backward(const SamplerParams& params,
                                const ForwardCache& cache,
                                const sampling::Draw& draw, double advantage);

}  // namespace keyrl::sampler

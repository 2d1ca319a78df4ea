#pragma once
// Exact sampling without replacement over a score vector.
//
// Step t: softmax(scores / temperature) over the not-yet-drawn indices, draw
// one, record log p(step), mask it out, repeat.  total_logprob is the sum of
// the per-step terms — the exact log-probability of the ordered draw.  This
// sequential-conditional form is normative: summing K independent single-pass
// log-softmax terms is a biased substitute (a regression test pins the
// difference).

#include <span>
#include <vector>

#include "keyrl/rng.hpp"

namespace keyrl::sampling {

struct Draw {
  std::vector<int> indices;            // distinct, in draw order
  std::vector<double> step_logprobs;   // one per step
  double total_logprob = 0.0;
  double temperature = 1.0;
  double top_p = 0.0;                  // 0 = truncation disabled
};

struct SampleOptions {
  double temperature = 1.0;
  // In (0,1): before each draw keep the smallest prefix of the
  // descending-probability order whose mass reaches top_p, renormalize.
  // 0 disables truncation (the default).
  double top_p = 0.0;
};

// Throws std::invalid_argument on k outside [1, n], non-positive temperature,
// top_p outside [0,1), or non-finite scores.
Draw sample_without_replacement(std::span<const double> scores, int k,
                                const SampleOptions& opt, Rng& rng);

// Deterministic argmax rollout (ties -> lower index); log-probabilities are
// bookkept exactly as in sampling, without truncation.
Draw greedy_select(std::span<const double> scores, int k,
                   double temperature = 1.0);

// Exact log-probability of drawing `indices` in order.  Must be able to
// reproduce Draw::total_logprob given the same scores and options.
double ordered_logprob(std::span<const double> scores,
                       std::span<const int> indices, double temperature,
                       double top_p = 0.0);

// d ordered_logprob / d scores (same length as scores).
std::vector<double> logprob_grad_scores(std::span<const double> scores,
                                        std::span<const int> indices,
                                        double temperature, double top_p = 0.0);

}  // namespace keyrl::sampling

#pragma once
// Toy query policy standing in for the answering model's query generator: a
// linear map from the episode's hint vector to one logit per vocabulary
// concept.  Query sets are drawn without replacement from those logits with
// the same masked-softmax semantics as frame sampling, and updated with a
// clipped importance-ratio group objective (no KL term).

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "keyrl/nn.hpp"
#include "keyrl/rng.hpp"

namespace keyrl::policy {

struct PolicyParams {
  int vocab = 0;
  std::vector<double> weights;  // [vocab][vocab], logit_c = sum_j w[c][j]*hint[j] + b[c]
  std::vector<double> bias;     // [vocab]

  // Zero weights and bias: uniform query sampling until trained.
  static PolicyParams init(int vocab);

  // Identity weights scaled by `scale`: the policy starts out following the
  // hint (logit_c = scale * hint_c) and RL refines it from there.  scale 0
  // reduces to init().
  static PolicyParams init_hint_following(int vocab, double scale);

  std::vector<std::span<double>> param_views();
  std::vector<std::span<const double>> param_views() const;
  std::size_t param_count() const { return weights.size() + bias.size(); }

  void save(const std::string& path) const;
  static PolicyParams from_checkpoint(const std::string& path);
};

// Throws on hint length mismatch or non-finite hint entries.
std::vector<double> policy_forward(const PolicyParams& p,
                                   std::span<const double> hint);

struct QuerySet {
  std::vector<int> concepts;  // distinct, in draw order (when well formed)
  double total_logprob = 0.0;
  double temperature = 1.0;
  bool well_formed = true;
};

// Test-only corruption switches; production rollouts never set these.
struct FaultInjection {
  bool duplicate_concept = false;
  bool out_of_vocab = false;
};

QuerySet sample_queries(std::span<const double> logits, int n_q,
                        double temperature, Rng& rng,
                        const FaultInjection& fault = {});

// rollout.queries.total_logprob is the log-probability recorded under the
// snapshot parameters that generated the rollout.
struct GroupEntry {
  QuerySet queries;
  double advantage = 0.0;
};

struct GrpoStats {
  bool skipped = false;      // degenerate group (all advantages zero)
  double mean_ratio = 0.0;   // mean importance ratio over the group
  double clip_fraction = 0.0;
};

// One Adam step on the clipped-surrogate loss for a single group sharing one
// hint.  Malformed query sets contribute no gradient (their draw has no
// replayable log-probability).
GrpoStats grpo_update(PolicyParams& params, nn::AdamState& adam,
                      std::span<const double> hint,
                      std::span<const GroupEntry> group, double clip_eps);

}  // namespace keyrl::policy

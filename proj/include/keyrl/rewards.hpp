#pragma once
// Scalar reward pieces and advantage transforms for the two training phases.

#include <span>
#include <vector>

#include "keyrl/env.hpp"

namespace keyrl::rl {

constexpr double kAccReward = 0.8;     // correct answer
constexpr double kFormatReward = 0.1;  // well-formed query set
constexpr double kInfoScale = 0.1;     // informativeness ceiling

struct RewardBreakdown {
  double acc = 0.0;
  double format = 0.0;
  double info = 0.0;
  double total = 0.0;
};

// kInfoScale * (fraction of query rows whose max/min ratio strictly exceeds
// tau).  Throws on non-positive entries or empty matrix.
double informativeness_reward(const env::SimilarityMatrix& m,
                              double tau = 10.0);

RewardBreakdown compute_rewards(bool oracle_correct, bool well_formed,
                                const env::SimilarityMatrix& m,
                                double tau = 10.0);

// Group-relative advantages: (r - mean) / population std.  A near-constant
// group (std < eps) yields all zeros so callers can skip the update.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double eps = 1e-8);

// Pass-rate-weighted advantage for sampler pre-training.  c is the share of
// uniform-sampling trials the answer oracle already passes; c == 1 episodes
// must be filtered out before training (throws here).
struct DifficultyAdvantageConfig {
  double zero_pass_bonus = 10.0;   // correct on a never-passed episode
  double zero_pass_penalty = 0.0;  // wrong on a never-passed episode
};

double difficulty_advantage(double pass_rate, bool correct,
                            const DifficultyAdvantageConfig& cfg = {});

}  // namespace keyrl::rl

#include "keyrl/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace keyrl::rl {

double informativeness_reward(const env::SimilarityMatrix& m, double tau) {
  if (m.n_queries < 1 || m.n_frames < 1)
    throw std::invalid_argument("informativeness_reward: empty matrix");
  if (!(tau > 0.0))
    throw std::invalid_argument("informativeness_reward: tau must be positive");
  int informative = 0;
  for (int q = 0; q < m.n_queries; ++q) {
    const double* row = m.row(q);
    double lo = row[0], hi = row[0];
    for (int t = 1; t < m.n_frames; ++t) {
      lo = std::min(lo, row[t]);
      hi = std::max(hi, row[t]);
    }
    if (!(lo > 0.0))
      throw std::invalid_argument(
          "informativeness_reward: entries must be positive");
    if (hi / lo > tau) informative += 1;  // strict: ratio == tau earns nothing
  }
  return kInfoScale * static_cast<double>(informative) /
         static_cast<double>(m.n_queries);
}

RewardBreakdown compute_rewards(bool oracle_correct, bool well_formed,
                                const env::SimilarityMatrix& m, double tau) {
  RewardBreakdown r;
  r.acc = oracle_correct ? kAccReward : 0.0;
  r.format = well_formed ? kFormatReward : 0.0;
  r.info = informativeness_reward(m, tau);
  r.total = r.acc + r.format + r.info;
  return r;
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double eps) {
  if (rewards.empty())
    throw std::invalid_argument("group_advantages: empty group");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double std_dev = std::sqrt(var / n);  // population std
  std::vector<double> adv(rewards.size(), 0.0);
  if (std_dev < eps) return adv;  // degenerate group
  for (std::size_t i = 0; i < rewards.size(); ++i)
    adv[i] = (rewards[i] - mean) / std_dev;
  return adv;
}

double difficulty_advantage(double pass_rate, bool correct,
                            const DifficultyAdvantageConfig& cfg) {
  if (!(pass_rate >= 0.0) || !(pass_rate < 1.0))
    throw std::invalid_argument(
        "difficulty_advantage: pass rate must lie in [0, 1); all-pass "
        "episodes are excluded from training");
  if (pass_rate == 0.0)
    return correct ? cfg.zero_pass_bonus : cfg.zero_pass_penalty;
  return correct ? 1.0 / pass_rate : -1.0 / (1.0 - pass_rate);
}

}  // namespace keyrl::rl

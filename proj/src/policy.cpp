#include "keyrl/policy.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "keyrl/checkpoint.hpp"
#include "keyrl/kernels.hpp"
#include "keyrl/sampling.hpp"

namespace keyrl::policy {

PolicyParams PolicyParams::init(int vocab) {
  if (vocab < 2) throw std::invalid_argument("policy: vocab must be >= 2");
  PolicyParams p;
  p.vocab = vocab;
  p.weights.assign(static_cast<std::size_t>(vocab) * vocab, 0.0);
  p.bias.assign(vocab, 0.0);
  return p;
}

PolicyParams PolicyParams::init_hint_following(int vocab, double scale) {
  if (!std::isfinite(scale) || scale < 0.0)
    throw std::invalid_argument("policy: init scale must be finite and >= 0");
  PolicyParams p = init(vocab);
  for (int c = 0; c < vocab; ++c)
    p.weights[static_cast<std::size_t>(c) * vocab + c] = scale;
  return p;
}

std::vector<std::span<double>> PolicyParams::param_views() {
  return {std::span<double>(weights), std::span<double>(bias)};
}
std::vector<std::span<const double>> PolicyParams::param_views() const {
  return {std::span<const double>(weights), std::span<const double>(bias)};
}

void PolicyParams::save(const std::string& path) const {
  nn::save_checkpoint(
      path, {{"policy.weight", {vocab, vocab}, std::span<const double>(weights)},
             {"policy.bias", {vocab}, std::span<const double>(bias)}});
}

PolicyParams PolicyParams::from_checkpoint(const std::string& path) {
  const auto loaded = nn::load_checkpoint(path);
  if (loaded.size() != 2 || loaded[0].name != "policy.weight" ||
      loaded[1].name != "policy.bias")
    throw std::runtime_error("policy checkpoint: unexpected tensor layout");
  if (loaded[0].dims.size() != 2 || loaded[0].dims[0] != loaded[0].dims[1] ||
      loaded[1].dims.size() != 1 || loaded[1].dims[0] != loaded[0].dims[0])
    throw std::runtime_error("policy checkpoint: shape mismatch");
  PolicyParams p = PolicyParams::init(static_cast<int>(loaded[1].dims[0]));
  p.weights = loaded[0].data;
  p.bias = loaded[1].data;
  return p;
}

std::vector<double> policy_forward(const PolicyParams& p,
                                   std::span<const double> hint) {
  if (static_cast<int>(hint.size()) != p.vocab)
    throw std::invalid_argument("policy_forward: hint length != vocab");
  for (double h : hint)
    if (!std::isfinite(h))
      throw std::invalid_argument("policy_forward: non-finite hint entry");
  const auto& k = kern::active();
  std::vector<double> logits(p.vocab);
  for (int c = 0; c < p.vocab; ++c)
    logits[c] =
        p.bias[c] + k.dot(hint.size(),
                          p.weights.data() + static_cast<std::size_t>(c) * p.vocab,
                          hint.data());
  return logits;
}

namespace {

bool check_well_formed(const std::vector<int>& concepts, int n_q, int vocab) {
  if (static_cast<int>(concepts.size()) != n_q) return false;
  std::vector<char> seen(vocab, 0);
  for (int c : concepts) {
    if (c < 0 || c >= vocab) return false;
    if (seen[c]) return false;
    seen[c] = 1;
  }
  return true;
}

}  // namespace

QuerySet sample_queries(std::span<const double> logits, int n_q,
                        double temperature, Rng& rng,
                        const FaultInjection& fault) {
  const int vocab = static_cast<int>(logits.size());
  if (n_q < 1 || n_q > 4 || n_q > vocab)
    throw std::invalid_argument("sample_queries: n_q must lie in [1, min(4, vocab)]");

  const sampling::Draw d = sampling::sample_without_replacement(
      logits, n_q, {temperature, 0.0}, rng);
  QuerySet qs;
  qs.concepts = d.indices;
  qs.total_logprob = d.total_logprob;
  qs.temperature = temperature;

  if (fault.duplicate_concept) {
    if (qs.concepts.size() < 2) qs.concepts.push_back(qs.concepts[0]);
    qs.concepts[1] = qs.concepts[0];
  }
  if (fault.out_of_vocab) qs.concepts[0] = vocab;
  qs.well_formed = check_well_formed(qs.concepts, n_q, vocab);
  return qs;
}

GrpoStats grpo_update(PolicyParams& params, nn::AdamState& adam,
                      std::span<const double> hint,
                      std::span<const GroupEntry> group, double clip_eps) {
  if (group.empty()) throw std::invalid_argument("grpo_update: empty group");
  if (!(clip_eps > 0.0) || !(clip_eps < 1.0))
    throw std::invalid_argument("grpo_update: clip_eps must lie in (0, 1)");
  if (static_cast<int>(hint.size()) != params.vocab)
    throw std::invalid_argument("grpo_update: hint length != vocab");

  GrpoStats stats;
  bool any_advantage = false;
  for (const auto& e : group)
    if (e.advantage != 0.0) any_advantage = true;
  if (!any_advantage) {
    stats.skipped = true;  // degenerate group: no update at all
    return stats;
  }

  const std::vector<double> logits = policy_forward(params, hint);
  const double G = static_cast<double>(group.size());
  std::vector<double> glogits(params.vocab, 0.0);  // d surrogate / d logits
  int counted = 0, clipped = 0;
  double ratio_sum = 0.0;

  for (const auto& e : group) {
    if (!e.queries.well_formed) continue;  // no replayable log-probability
    const double new_lp = sampling::ordered_logprob(
        logits, e.queries.concepts, e.queries.temperature);
    if (!std::isfinite(new_lp)) continue;
    const double ratio = std::exp(new_lp - e.queries.total_logprob);
    ++counted;
    ratio_sum += ratio;
    const double A = e.advantage;
    // min(ratio*A, clip(ratio)*A): gradient flows only while the unclipped
    // branch is active.
    const bool active = A >= 0.0 ? ratio <= 1.0 + clip_eps
                                 : ratio >= 1.0 - clip_eps;
    if (!active) {
      if (A != 0.0) ++clipped;
      continue;
    }
    const double coef = ratio * A / G;
    if (coef == 0.0) continue;
    const std::vector<double> glp = sampling::logprob_grad_scores(
        logits, e.queries.concepts, e.queries.temperature);
    for (int c = 0; c < params.vocab; ++c) glogits[c] += coef * glp[c];
  }
  stats.mean_ratio = counted ? ratio_sum / counted : 0.0;
  stats.clip_fraction = counted ? static_cast<double>(clipped) / counted : 0.0;

  // Ascend the surrogate: Adam minimizes, so feed it the negated gradient.
  std::vector<double> gw(params.weights.size(), 0.0);
  std::vector<double> gb(params.vocab, 0.0);
  for (int c = 0; c < params.vocab; ++c) {
    const double g = -glogits[c];
    gb[c] = g;
    double* row = gw.data() + static_cast<std::size_t>(c) * params.vocab;
    for (int j = 0; j < params.vocab; ++j) row[j] = g * hint[j];
  }
  nn::adam_step(params.param_views(),
                {std::span<const double>(gw), std::span<const double>(gb)},
                adam);
  return stats;
}

}  // namespace keyrl::policy

#include "keyrl/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace keyrl::sampling {
namespace {

void validate_scores(std::span<const double> scores) {
  if (scores.empty())
    throw std::invalid_argument("sampling: empty score vector");
  for (double s : scores)
    if (!std::isfinite(s))
      throw std::invalid_argument("sampling: non-finite score");
}

void validate_options(double temperature, double top_p) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("sampling: temperature must be positive");
  if (top_p < 0.0 || top_p >= 1.0)
    throw std::invalid_argument("sampling: top_p must lie in [0, 1)");
}

// One step's candidate set and normalized (log-)probabilities, after the
// optional nucleus truncation.  Both the sampler and ordered_logprob go
// through here so their log-probabilities agree bit for bit.
struct StepEval {
  std::vector<int> kept;       // ascending candidate indices
  std::vector<double> p;       // probability per kept entry
  std::vector<double> logp;    // log probability per kept entry
};

StepEval eval_step(std::span<const double> scores,
                   const std::vector<char>& alive, double temperature,
                   double top_p) {
  StepEval ev;
  for (int i = 0; i < static_cast<int>(scores.size()); ++i)
    if (alive[i]) ev.kept.push_back(i);

  double m = -std::numeric_limits<double>::infinity();
  for (int i : ev.kept) m = std::max(m, scores[i] / temperature);
  double z = 0.0;
  for (int i : ev.kept) z += std::exp(scores[i] / temperature - m);
  const double lse = m + std::log(z);

  ev.p.resize(ev.kept.size());
  ev.logp.resize(ev.kept.size());
  for (std::size_t j = 0; j < ev.kept.size(); ++j) {
    ev.logp[j] = scores[ev.kept[j]] / temperature - lse;
    ev.p[j] = std::exp(ev.logp[j]);
  }

  if (top_p > 0.0 && ev.kept.size() > 1) {
    // Keep the smallest descending-probability prefix with mass >= top_p
    // (ties broken toward the lower index), then renormalize.
    std::vector<std::size_t> order(ev.kept.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       if (ev.p[a] != ev.p[b]) return ev.p[a] > ev.p[b];
                       return ev.kept[a] < ev.kept[b];
                     });
    double mass = 0.0;
    std::size_t cut = 0;
    while (cut < order.size()) {
      mass += ev.p[order[cut]];
      ++cut;
      if (mass >= top_p) break;
    }
    std::vector<std::size_t> chosen(order.begin(), order.begin() + cut);
    std::sort(chosen.begin(), chosen.end());
    StepEval tr;
    const double log_mass = std::log(mass);
    for (std::size_t j : chosen) {
      tr.kept.push_back(ev.kept[j]);
      tr.p.push_back(ev.p[j] / mass);
      tr.logp.push_back(ev.logp[j] - log_mass);
    }
    return tr;
  }
  return ev;
}

}  // namespace

Draw sample_without_replacement(std::span<const double> scores, int k,
                                const SampleOptions& opt, Rng& rng) {
  validate_scores(scores);
  validate_options(opt.temperature, opt.top_p);
  const int n = static_cast<int>(scores.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("sampling: k must lie in [1, n]");

  Draw d;
  d.temperature = opt.temperature;
  d.top_p = opt.top_p;
  std::vector<char> alive(n, 1);
  for (int step = 0; step < k; ++step) {
    const StepEval ev = eval_step(scores, alive, opt.temperature, opt.top_p);
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t pick = ev.kept.size() - 1;  // guard against roundoff overshoot
    for (std::size_t j = 0; j < ev.kept.size(); ++j) {
      cum += ev.p[j];
      if (u < cum) {
        pick = j;
        break;
      }
    }
    d.indices.push_back(ev.kept[pick]);
    d.step_logprobs.push_back(ev.logp[pick]);
    d.total_logprob += ev.logp[pick];
    alive[ev.kept[pick]] = 0;
  }
  return d;
}

Draw greedy_select(std::span<const double> scores, int k, double temperature) {
  validate_scores(scores);
  validate_options(temperature, 0.0);
  const int n = static_cast<int>(scores.size());
  if (k < 1 || k > n)
    throw std::invalid_argument("sampling: k must lie in [1, n]");

  Draw d;
  d.temperature = temperature;
  std::vector<char> alive(n, 1);
  for (int step = 0; step < k; ++step) {
    const StepEval ev = eval_step(scores, alive, temperature, 0.0);
    std::size_t best = 0;  // kept is ascending, so ties keep the lower index
    for (std::size_t j = 1; j < ev.kept.size(); ++j)
      if (scores[ev.kept[j]] > scores[ev.kept[best]]) best = j;
    d.indices.push_back(ev.kept[best]);
    d.step_logprobs.push_back(ev.logp[best]);
    d.total_logprob += ev.logp[best];
    alive[ev.kept[best]] = 0;
  }
  return d;
}

namespace {

void validate_indices(std::span<const double> scores,
                      std::span<const int> indices) {
  const int n = static_cast<int>(scores.size());
  if (indices.empty() || static_cast<int>(indices.size()) > n)
    throw std::invalid_argument("sampling: index list size must lie in [1, n]");
  std::vector<char> seen(n, 0);
  for (int i : indices) {
    if (i < 0 || i >= n)
      throw std::invalid_argument("sampling: index out of range");
    if (seen[i]) throw std::invalid_argument("sampling: duplicate index");
    seen[i] = 1;
  }
}

}  // namespace

double ordered_logprob(std::span<const double> scores,
                       std::span<const int> indices, double temperature,
                       double top_p) {
  validate_scores(scores);
  validate_options(temperature, top_p);
  validate_indices(scores, indices);

  double total = 0.0;
  std::vector<char> alive(scores.size(), 1);
  for (int x : indices) {
    const StepEval ev = eval_step(scores, alive, temperature, top_p);
    const auto it = std::lower_bound(ev.kept.begin(), ev.kept.end(), x);
    if (it == ev.kept.end() || *it != x)
      return -std::numeric_limits<double>::infinity();  // truncated away
    total += ev.logp[static_cast<std::size_t>(it - ev.kept.begin())];
    alive[x] = 0;
  }
  return total;
}

std::vector<double> logprob_grad_scores(std::span<const double> scores,
                                        std::span<const int> indices,
                                        double temperature, double top_p) {
  validate_scores(scores);
  validate_options(temperature, top_p);
  validate_indices(scores, indices);

  std::vector<double> grad(scores.size(), 0.0);
  std::vector<char> alive(scores.size(), 1);
  for (int x : indices) {
    const StepEval ev = eval_step(scores, alive, temperature, top_p);
    const auto it = std::lower_bound(ev.kept.begin(), ev.kept.end(), x);
    if (it == ev.kept.end() || *it != x)
      return std::vector<double>(scores.size(), 0.0);  // prob 0 draw
    for (std::size_t j = 0; j < ev.kept.size(); ++j)
      grad[ev.kept[j]] -= ev.p[j] / temperature;
    grad[x] += 1.0 / temperature;
    alive[x] = 0;
  }
  return grad;
}

}  // namespace keyrl::sampling

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "keyrl/harness.hpp"
#include "keyrl/rewards.hpp"
#include "keyrl/sampling.hpp"

namespace keyrl::harness {
namespace {

constexpr std::uint64_t kSaltEval = 0x4556414c;

std::vector<int> ranked_topk(const std::vector<double>& score, int k) {
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (score[a] != score[b]) return score[a] > score[b];
    return a < b;
  });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::uniform: return "uniform";
    case Method::topk_avg: return "topk_avg";
    case Method::topk_weighted: return "topk_weighted";
    case Method::learned_frozen: return "learned_frozen";
    case Method::learned_joint: return "learned_joint";
  }
  throw std::invalid_argument("method_name: bad enum value");
}

Method method_from_name(const std::string& name) {
  if (name == "uniform") return Method::uniform;
  if (name == "topk_avg") return Method::topk_avg;
  if (name == "topk_weighted") return Method::topk_weighted;
  if (name == "learned_frozen") return Method::learned_frozen;
  if (name == "learned_joint") return Method::learned_joint;
  throw std::invalid_argument("unknown method: " + name);
}

std::vector<int> uniform_indices(int n_frames, int k) {
  if (n_frames < 1 || k < 1 || k > n_frames)
    throw std::invalid_argument("uniform_indices: need 1 <= k <= n_frames");
  std::vector<int> out(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    out[static_cast<std::size_t>(i)] =
        static_cast<int>(static_cast<std::int64_t>(i) * n_frames / k);
  return out;
}

std::vector<int> topk_indices(const env::SimilarityMatrix& m, int k,
                              bool weighted) {
  if (m.n_queries < 1 || m.n_frames < 1)
    throw std::invalid_argument("topk_indices: empty matrix");
  if (k < 1 || k > m.n_frames)
    throw std::invalid_argument("topk_indices: need 1 <= k <= n_frames");
  std::vector<double> weight(static_cast<std::size_t>(m.n_queries), 1.0);
  if (weighted) {
    for (int q = 0; q < m.n_queries; ++q)
      weight[static_cast<std::size_t>(q)] =
          *std::max_element(m.row(q), m.row(q) + m.n_frames);
  }
  const double wsum =
      std::accumulate(weight.begin(), weight.end(), 0.0);
  std::vector<double> score(static_cast<std::size_t>(m.n_frames), 0.0);
  for (int q = 0; q < m.n_queries; ++q)
    for (int t = 0; t < m.n_frames; ++t)
      score[static_cast<std::size_t>(t)] +=
          weight[static_cast<std::size_t>(q)] * m.at(q, t) / wsum;
  return ranked_topk(score, k);
}

std::vector<int> hint_top_concepts(const env::EpisodeSpec& episode, int n_q) {
  if (n_q < 1 || n_q > static_cast<int>(episode.hint.size()))
    throw std::invalid_argument("hint_top_concepts: bad n_q");
  return ranked_topk(episode.hint, n_q);
}

EvalReport evaluate(const std::vector<env::EpisodeSpec>& dataset,
                    const std::vector<Method>& methods, const TrainConfig& cfg,
                    const Checkpoints& ckpts, std::uint64_t eval_seed) {
  if (dataset.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (methods.empty()) throw std::invalid_argument("evaluate: no methods");
  for (Method m : methods) {
    if (m == Method::learned_frozen && ckpts.frozen == nullptr)
      throw std::invalid_argument(
          "evaluate: learned_frozen requested without a sampler checkpoint");
    if (m == Method::learned_joint &&
        (ckpts.joint == nullptr || ckpts.policy == nullptr))
      throw std::invalid_argument(
          "evaluate: learned_joint requested without sampler+policy "
          "checkpoints");
  }

  EvalReport report;
  report.n_episodes = static_cast<int>(dataset.size());
  report.k_frames = cfg.k_frames;
  report.n_init = cfg.n_init();
  report.eval_seed = eval_seed;
  const env::OracleConfig ocfg{cfg.p_hit, 0.25, 0};

  for (Method method : methods) {
    MethodStats st;
    st.method = method_name(method);
    for (const env::EpisodeSpec& ep : dataset) {
      // Paired streams: the same (eval_seed, episode_id) stream for every
      // method, so better coverage can only help.
      Rng rng(stream_seed(eval_seed, kSaltEval,
                          static_cast<std::uint64_t>(ep.episode_id)));

      std::vector<int> queries;
      if (method == Method::learned_joint) {
        const std::vector<double> logits =
            policy::policy_forward(*ckpts.policy, ep.hint);
        queries = sampling::greedy_select(logits, cfg.n_q_eval).indices;
      } else {
        queries = hint_top_concepts(ep, cfg.n_q_eval);
      }
      const env::SimilarityMatrix S =
          env::synthesize_similarity(ep, queries, cfg.sim_noise);

      std::vector<int> frames;
      switch (method) {
        case Method::uniform:
          frames = uniform_indices(ep.n_frames, cfg.k_frames);
          break;
        case Method::topk_avg:
          frames = topk_indices(S, cfg.k_frames, /*weighted=*/false);
          break;
        case Method::topk_weighted:
          frames = topk_indices(S, cfg.k_frames, /*weighted=*/true);
          break;
        case Method::learned_frozen:
          frames = sampling::greedy_select(sampler_forward(*ckpts.frozen, S),
                                           cfg.k_frames)
                       .indices;
          break;
        case Method::learned_joint:
          frames = sampling::greedy_select(sampler_forward(*ckpts.joint, S),
                                           cfg.k_frames)
                       .indices;
          break;
      }

      const bool correct = env::answer_oracle(ep, frames, ocfg, rng);
      const rl::RewardBreakdown rb =
          rl::compute_rewards(correct, /*well_formed=*/true, S, cfg.tau_info);
      st.accuracy += correct ? 1.0 : 0.0;
      st.reward_mean += rb.total;
      st.acc_reward_mean += rb.acc;
      st.format_mean += rb.format;
      st.info_mean += rb.info;
    }
    const double n = static_cast<double>(dataset.size());
    st.accuracy /= n;
    st.reward_mean /= n;
    st.acc_reward_mean /= n;
    st.format_mean /= n;
    st.info_mean /= n;
    report.methods.push_back(std::move(st));
  }
  return report;
}

EvalReport run_baseline(Method method,
                        const std::vector<env::EpisodeSpec>& dataset,
                        const TrainConfig& cfg, const Checkpoints& ckpts,
                        std::uint64_t eval_seed) {
  return evaluate(dataset, {method}, cfg, ckpts, eval_seed);
}

void EvalReport::write_json(const std::string& path) const {
  nlohmann::ordered_json j;
  j["n_episodes"] = n_episodes;
  j["k_frames"] = k_frames;
  j["n_init"] = n_init;
  j["eval_seed"] = eval_seed;
  j["methods"] = nlohmann::ordered_json::array();
  for (const MethodStats& st : methods) {
    nlohmann::ordered_json m;
    m["method"] = st.method;
    m["accuracy"] = st.accuracy;
    m["reward_mean"] = st.reward_mean;
    m["acc_reward_mean"] = st.acc_reward_mean;
    m["format_mean"] = st.format_mean;
    m["info_mean"] = st.info_mean;
    j["methods"].push_back(std::move(m));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("report: cannot open " + path);
  out << j.dump(2) << "\n";
  if (!out) throw std::runtime_error("report: write failed for " + path);
}

}  // namespace keyrl::harness

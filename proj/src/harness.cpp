#include "keyrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "keyrl/rewards.hpp"
#include "keyrl/sampling.hpp"

namespace keyrl::harness {
namespace {

constexpr std::uint64_t kSaltShuffle = 0x53485546;
constexpr std::uint64_t kSaltPretrain = 0x50524554;
constexpr std::uint64_t kSaltJoint = 0x4a4f494e;
constexpr std::uint64_t kSaltOracleSeed = 0x4f524147;

// Deterministic per-epoch visit order.
std::vector<std::size_t> shuffled_order(std::size_t n, std::uint64_t seed,
                                        std::uint64_t salt, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(stream_seed(seed, salt, kSaltShuffle, static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n - i)));
    std::swap(order[i], order[j]);
  }
  return order;
}

double population_std(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

// Pretraining uses the same frozen query source as evaluation-time
// learned_frozen (the top hint concepts), so the sampler trains on the input
// distribution it will be scored on: n_q rows of which only the truly
// relevant ones carry a plateau.
std::vector<int> pretrain_queries(const env::EpisodeSpec& ep, int n_q) {
  if (ep.events.empty())
    throw std::invalid_argument("pretrain: episode has no events");
  return hint_top_concepts(ep, std::min<int>(n_q, ep.vocab_size));
}

void validate_common(const TrainConfig& cfg, std::size_t dataset_size) {
  if (dataset_size == 0)
    throw std::invalid_argument("train: empty dataset");
  if (cfg.k_frames < 1) throw std::invalid_argument("train: k_frames must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(cfg.temperature > 0.0))
    throw std::invalid_argument("train: temperature must be positive");
}

}  // namespace

void MetricsLog::write_csv(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("metrics: cannot open " + path);
  out << "step,reward_mean,acc_mean,format_mean,info_mean,advantage_std\n";
  char buf[200];
  for (const MetricsRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  r.step, r.reward_mean, r.acc_mean, r.format_mean, r.info_mean,
                  r.advantage_std);
    out << buf;
  }
  if (!out) throw std::runtime_error("metrics: write failed for " + path);
}

PretrainResult pretrain_sampler(const std::vector<env::EpisodeSpec>& dataset,
                                const TrainConfig& cfg) {
  validate_common(cfg, dataset.size());
  for (const env::EpisodeSpec& ep : dataset) {
    if (ep.pass_rate < 0.0)
      throw std::invalid_argument("pretrain: episode " +
                                  std::to_string(ep.episode_id) +
                                  " is missing its pass rate");
    if (ep.excluded || ep.pass_rate >= 1.0)
      throw std::invalid_argument("pretrain: episode " +
                                  std::to_string(ep.episode_id) +
                                  " has pass rate 1 and must be excluded");
  }

  PretrainResult res{sampler::SamplerParams::init(cfg.seed), {}};
  nn::AdamState adam(res.params.param_count(),
                     {cfg.lr_sampler, 0.9, 0.999, 1e-8});
  const env::OracleConfig ocfg{cfg.p_hit, 0.25,
                               stream_seed(cfg.seed, kSaltOracleSeed)};
  const rl::DifficultyAdvantageConfig dcfg{cfg.zero_pass_bonus,
                                           cfg.zero_pass_penalty};

  int step = 0;
  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    const auto order =
        shuffled_order(dataset.size(), cfg.seed, kSaltPretrain, epoch);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double bsize = static_cast<double>(stop - start);

      sampler::SamplerGrads batch_grad =
          sampler::SamplerGrads::zeros_like(res.params);
      bool any_grad = false;
      MetricsRow row;
      std::vector<double> advantages;

      for (std::size_t bi = start; bi < stop; ++bi) {
        const env::EpisodeSpec& ep = dataset[order[bi]];
        Rng rng(stream_seed(cfg.seed, kSaltPretrain,
                            static_cast<std::uint64_t>(epoch) << 32 |
                                static_cast<std::uint64_t>(order[bi]),
                            1));
        const env::SimilarityMatrix S = env::synthesize_similarity(
            ep, pretrain_queries(ep, cfg.n_q_eval), cfg.sim_noise);
        sampler::ForwardCache cache;
        const std::vector<double> scores =
            sampler_forward(res.params, S, &cache);
        const sampling::Draw draw = sampling::sample_without_replacement(
            scores, cfg.k_frames, {cfg.temperature, cfg.top_p}, rng);
        const bool correct = env::answer_oracle(ep, draw.indices, ocfg, rng);
        const double adv =
            rl::difficulty_advantage(ep.pass_rate, correct, dcfg);
        advantages.push_back(adv);
        row.acc_mean += correct ? 1.0 : 0.0;
        row.reward_mean += correct ? rl::kAccReward : 0.0;
        if (adv != 0.0) {
          batch_grad.accumulate(
              reinforce_backward(res.params, cache, draw, adv), 1.0 / bsize);
          any_grad = true;
        }
      }
      if (any_grad)
        nn::adam_step(res.params.param_views(), batch_grad.views(), adam);

      row.step = ++step;
      row.reward_mean /= bsize;
      row.acc_mean /= bsize;
      row.advantage_std = population_std(advantages);
      res.metrics.rows.push_back(row);
    }
  }
  return res;
}

JointResult joint_train(const std::vector<env::EpisodeSpec>& dataset,
                        const TrainConfig& cfg,
                        std::optional<sampler::SamplerParams> init_sampler) {
  validate_common(cfg, dataset.size());
  if (cfg.group_size < 2)
    throw std::invalid_argument("joint: group_size must be >= 2");

  JointResult res{policy::PolicyParams::init_hint_following(
                      dataset.front().vocab_size, cfg.policy_init_scale),
                  init_sampler ? std::move(*init_sampler)
                               : sampler::SamplerParams::init(cfg.seed),
                  {}};
  nn::AdamState adam_sampler(res.sampler.param_count(),
                             {cfg.lr_sampler, 0.9, 0.999, 1e-8});
  nn::AdamState adam_policy(res.policy.param_count(),
                            {cfg.lr_policy, 0.9, 0.999, 1e-8});
  const env::OracleConfig ocfg{cfg.p_hit, 0.25,
                               stream_seed(cfg.seed, kSaltOracleSeed, 1)};

  struct QuestionGroup {
    const env::EpisodeSpec* ep = nullptr;
    std::vector<policy::GroupEntry> entries;
  };

  int step = 0;
  std::uint64_t question_counter = 0;
  for (int epoch = 0; epoch < cfg.joint_epochs; ++epoch) {
    const auto order =
        shuffled_order(dataset.size(), cfg.seed, kSaltJoint, epoch);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t stop = std::min(
          order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const double n_questions = static_cast<double>(stop - start);

      // Rollout wave: both parameter sets stay frozen while trajectories are
      // generated; updates happen after the wave on a single writer.
      const policy::PolicyParams snapshot = res.policy;
      sampler::SamplerGrads batch_grad =
          sampler::SamplerGrads::zeros_like(res.sampler);
      bool any_sampler_grad = false;
      std::vector<QuestionGroup> groups;
      MetricsRow row;
      std::vector<double> all_advantages;
      int n_rollouts = 0;

      for (std::size_t bi = start; bi < stop; ++bi) {
        const env::EpisodeSpec& ep = dataset[order[bi]];
        const std::uint64_t qid = question_counter++;
        Rng qrng(stream_seed(cfg.seed, kSaltJoint, qid, 0));
        const int n_q = 2 + qrng.uniform_int(3);  // uniform over {2, 3, 4}
        const std::vector<double> logits =
            policy::policy_forward(snapshot, ep.hint);

        QuestionGroup qg;
        qg.ep = &ep;
        std::vector<double> totals, accs;
        std::vector<sampler::ForwardCache> caches(
            static_cast<std::size_t>(cfg.group_size));
        std::vector<sampling::Draw> draws(
            static_cast<std::size_t>(cfg.group_size));

        for (int g = 0; g < cfg.group_size; ++g) {
          Rng rng(stream_seed(cfg.seed, kSaltJoint, qid,
                              static_cast<std::uint64_t>(g) + 1));
          policy::QuerySet qs = policy::sample_queries(
              logits, n_q, cfg.temperature, rng);
          const env::SimilarityMatrix S = env::synthesize_similarity(
              ep, qs.concepts, cfg.sim_noise);
          const std::vector<double> scores =
              sampler_forward(res.sampler, S, &caches[g]);
          draws[g] = sampling::sample_without_replacement(
              scores, cfg.k_frames, {cfg.temperature, cfg.top_p}, rng);
          const bool correct =
              env::answer_oracle(ep, draws[g].indices, ocfg, rng);
          const rl::RewardBreakdown rb = rl::compute_rewards(
              correct, qs.well_formed, S, cfg.tau_info);
          totals.push_back(rb.total);
          accs.push_back(rb.acc);
          row.reward_mean += rb.total;
          row.acc_mean += correct ? 1.0 : 0.0;
          row.format_mean += rb.format;
          row.info_mean += rb.info;
          ++n_rollouts;
          qg.entries.push_back({std::move(qs), 0.0});
        }

        // Policy: group-relative advantages on the total reward.
        const std::vector<double> adv = rl::group_advantages(totals);
        for (int g = 0; g < cfg.group_size; ++g) {
          qg.entries[static_cast<std::size_t>(g)].advantage = adv[g];
          all_advantages.push_back(adv[g]);
        }
        groups.push_back(std::move(qg));

        // Sampler: REINFORCE on the accuracy reward (optionally normalized
        // within the group), same rollouts.
        std::vector<double> sadv = accs;
        if (cfg.sampler_group_norm) sadv = rl::group_advantages(accs);
        for (int g = 0; g < cfg.group_size; ++g) {
          if (sadv[g] == 0.0) continue;
          batch_grad.accumulate(
              reinforce_backward(res.sampler, caches[g], draws[g], sadv[g]),
              1.0 / (static_cast<double>(cfg.group_size) * n_questions));
          any_sampler_grad = true;
        }
      }

      // Update phase.
      for (const QuestionGroup& qg : groups)
        policy::grpo_update(res.policy, adam_policy, qg.ep->hint, qg.entries,
                            cfg.clip_eps);
      if (any_sampler_grad)
        nn::adam_step(res.sampler.param_views(), batch_grad.views(),
                      adam_sampler);

      const double dn = static_cast<double>(n_rollouts);
      row.step = ++step;
      row.reward_mean /= dn;
      row.acc_mean /= dn;
      row.format_mean /= dn;
      row.info_mean /= dn;
      row.advantage_std = population_std(all_advantages);
      res.metrics.rows.push_back(row);
    }
  }
  return res;
}

}  // namespace keyrl::harness

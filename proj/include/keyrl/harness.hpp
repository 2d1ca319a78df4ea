#pragma once
// Training loops and evaluation harness.
//
// Phase 1 (pretrain): REINFORCE on the frame sampler alone, similarity built
// from the episode's ground-truth event concepts, advantages weighted by how
// rarely uniform sampling already answers the episode (pass rate c).
// Phase 2 (joint): for each question, G rollouts are generated from parameter
// snapshots — query set from the policy, frames from the sampler, answer from
// the oracle.  The same rollouts feed both updates: the policy takes a
// clipped-ratio group step on the total reward; the sampler takes a REINFORCE
// step whose advantage is the raw accuracy reward (optionally
// group-normalized).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "keyrl/env.hpp"
#include "keyrl/policy.hpp"
#include "keyrl/usampler.hpp"

namespace keyrl::harness {

struct TrainConfig {
  std::uint64_t seed = 42;
  int k_frames = 8;
  int batch_size = 32;
  int group_size = 8;  // G rollouts per question in the joint phase
  int pretrain_epochs = 1;
  int joint_epochs = 2;
  double lr_policy = 1e-6;
  double lr_sampler = 1e-5;
  double clip_eps = 0.2;
  double policy_init_scale = 8.0;  // hint-following warm start; 0 = uniform
  double tau_info = 10.0;
  double temperature = 1.0;  // rollout temperature; evaluation is greedy
  double top_p = 0.0;        // nucleus truncation for rollouts, 0 = off
  bool sampler_group_norm = false;  // group-normalize the sampler advantage
  double sim_noise = 0.02;
  double p_hit = 0.9;
  double zero_pass_bonus = 10.0;
  double zero_pass_penalty = 0.0;
  int n_q_eval = 4;  // query count used by evaluation-time query sources

  // Seed frames offered to the answering model before selection in the
  // original system; the hint vector subsumes that preview here, so this is
  // config surface echoed into reports only.
  int n_init() const { return k_frames / 2; }
};

struct MetricsRow {
  int step = 0;
  double reward_mean = 0.0;
  double acc_mean = 0.0;  // fraction of correct answers, not the 0.8 reward
  double format_mean = 0.0;
  double info_mean = 0.0;
  double advantage_std = 0.0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
  // Header: step,reward_mean,acc_mean,format_mean,info_mean,advantage_std
  // Deterministic bytes for a given (seed, config).
  void write_csv(const std::string& path) const;
};

struct PretrainResult {
  sampler::SamplerParams params;
  MetricsLog metrics;
};

// Requires every episode to carry an estimated pass rate c in [0, 1); throws
// when one is missing or c == 1 (all-pass episodes must be filtered out).
PretrainResult pretrain_sampler(const std::vector<env::EpisodeSpec>& dataset,
                                const TrainConfig& cfg);

struct JointResult {
  policy::PolicyParams policy;
  sampler::SamplerParams sampler;
  MetricsLog metrics;
};

// init_sampler: start from a pretrained checkpoint, or std::nullopt for a
// fresh fan-in init.  The policy starts from the hint-following warm start
// scaled by cfg.policy_init_scale (0 = uniform).
JointResult joint_train(const std::vector<env::EpisodeSpec>& dataset,
                        const TrainConfig& cfg,
                        std::optional<sampler::SamplerParams> init_sampler);

// ---------------------------------------------------------------------------
// Baselines and evaluation

enum class Method {
  uniform,         // evenly spaced frames
  topk_avg,        // top-K frames by column mean of S
  topk_weighted,   // column mean weighted by per-row maxima
  learned_frozen,  // pretrained sampler, greedy, heuristic queries
  learned_joint,   // jointly trained sampler, greedy, trained policy queries
};
std::string method_name(Method m);
// Throws std::invalid_argument on an unknown name.
Method method_from_name(const std::string& name);

std::vector<int> uniform_indices(int n_frames, int k);
std::vector<int> topk_indices(const env::SimilarityMatrix& m, int k,
                              bool weighted);
// Evaluation-time query source for non-policy methods: the n_q concepts with
// the highest hint values (ties toward the lower concept id).
std::vector<int> hint_top_concepts(const env::EpisodeSpec& episode, int n_q);

struct MethodStats {
  std::string method;
  double accuracy = 0.0;
  double reward_mean = 0.0;
  double acc_reward_mean = 0.0;
  double format_mean = 0.0;
  double info_mean = 0.0;
};

struct EvalReport {
  int n_episodes = 0;
  int k_frames = 0;
  int n_init = 0;
  std::uint64_t eval_seed = 0;
  std::vector<MethodStats> methods;
  double wall_clock_s = 0.0;  // reported to the console, kept out of the file
                              // so reruns produce identical bytes
  void write_json(const std::string& path) const;
};

struct Checkpoints {
  const sampler::SamplerParams* frozen = nullptr;
  const sampler::SamplerParams* joint = nullptr;
  const policy::PolicyParams* policy = nullptr;
};

// Paired evaluation: for each episode, every method faces the identical
// oracle stream derived from (eval_seed, episode_id).  Throws when a learned
// method is requested without its checkpoint.
EvalReport evaluate(const std::vector<env::EpisodeSpec>& dataset,
                    const std::vector<Method>& methods, const TrainConfig& cfg,
                    const Checkpoints& ckpts, std::uint64_t eval_seed);

EvalReport run_baseline(Method method,
                        const std::vector<env::EpisodeSpec>& dataset,
                        const TrainConfig& cfg, const Checkpoints& ckpts,
                        std::uint64_t eval_seed);

}  // namespace keyrl::harness

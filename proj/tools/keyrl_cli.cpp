// Command-line front end: dataset generation, the two training phases,
// evaluation, an end-to-end comparison pipeline, a finite-difference gradient
// audit, and a one-shot scorer for similarity-matrix files.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "keyrl/config.hpp"
#include "keyrl/env.hpp"
#include "keyrl/gradcheck.hpp"
#include "keyrl/harness.hpp"
#include "keyrl/kernels.hpp"
#include "keyrl/policy.hpp"
#include "keyrl/rewards.hpp"
#include "keyrl/sampling.hpp"
#include "keyrl/usampler.hpp"

namespace {

using namespace keyrl;

constexpr std::uint64_t kSaltPassRate = 0x50415353;
constexpr std::uint64_t kSaltEvalPool = 0x45504f4f;

struct CliState {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// Every schema key becomes a --key option layered over --config / defaults.
void add_schema_options(CLI::App* sub, CliState& st) {
  sub->add_option("--config", st.config_path,
                  "config file (default: $KEYRL_CONFIG if set)");
  for (const config::SchemaEntry& e : config::schema()) {
    const std::string key = e.key;
    sub->add_option_function<std::string>(
           "--" + key,
           [&st, key](const std::string& v) { st.overrides.emplace_back(key, v); },
           e.help)
        ->default_str(e.default_value);
  }
}

config::Config resolve_config(const CliState& st) {
  std::string path = st.config_path;
  if (path.empty()) {
    if (const char* envp = std::getenv("KEYRL_CONFIG")) path = envp;
  }
  config::Config cfg =
      path.empty() ? config::Config::defaults() : config::Config::from_file(path);
  for (const auto& [k, v] : st.overrides) cfg.set(k, v);
  if (!kern::select_backend(cfg.get_string("kernels")))
    throw std::runtime_error("unknown kernels backend '" +
                             cfg.get_string("kernels") +
                             "' (want auto, scalar, or avx2)");
  return cfg;
}

void require_file(const std::string& path, const std::string& flag) {
  if (path.empty())
    throw std::runtime_error("missing required option " + flag);
  if (!std::filesystem::exists(path))
    throw std::runtime_error(flag + ": no such file: " + path);
}

struct GeneratedPools {
  std::vector<env::EpisodeSpec> all;   // pass-rated, exclusions dropped
  std::vector<env::EpisodeSpec> hard;  // lowest pass rate per group
  int n_excluded = 0;
};

GeneratedPools generate_pools(const config::Config& cfg, std::uint64_t seed,
                              int n_episodes) {
  env::EnvConfig ecfg = cfg.env_config();
  ecfg.seed = seed;
  const int trials = static_cast<int>(cfg.get_int("pass_trials"));
  const int k = static_cast<int>(cfg.get_int("k_frames"));
  const int per_group = static_cast<int>(cfg.get_int("episodes_per_group"));
  if (per_group < 1)
    throw std::runtime_error("episodes_per_group must be >= 1");
  const env::OracleConfig ocfg{cfg.get_double("p_hit"), 0.25, 0};

  GeneratedPools pools;
  std::vector<env::EpisodeSpec> generated;
  for (int id = 0; id < n_episodes; ++id) {
    env::EpisodeSpec ep = generate_episode(ecfg, id);
    Rng prng(stream_seed(seed, kSaltPassRate, static_cast<std::uint64_t>(id)));
    const env::PassRate pr = env::estimate_pass_rate(ep, k, trials, ocfg, prng);
    ep.pass_rate = pr.c;
    ep.excluded = pr.excluded;
    generated.push_back(std::move(ep));
  }
  for (std::size_t g = 0; g < generated.size();
       g += static_cast<std::size_t>(per_group)) {
    const env::EpisodeSpec* hardest = nullptr;
    for (std::size_t i = g;
         i < std::min(generated.size(), g + static_cast<std::size_t>(per_group));
         ++i) {
      const env::EpisodeSpec& ep = generated[i];
      if (ep.excluded) {
        ++pools.n_excluded;
        continue;
      }
      pools.all.push_back(ep);
      if (hardest == nullptr || ep.pass_rate < hardest->pass_rate) hardest = &ep;
    }
    if (hardest != nullptr) pools.hard.push_back(*hardest);
  }
  return pools;
}

void print_report(const harness::EvalReport& rep) {
  std::printf("%-16s %9s %12s %9s %9s %9s\n", "method", "accuracy", "reward",
              "acc_rew", "format", "info");
  for (const harness::MethodStats& st : rep.methods)
    std::printf("%-16s %9.4f %12.4f %9.4f %9.4f %9.4f\n", st.method.c_str(),
                st.accuracy, st.reward_mean, st.acc_reward_mean, st.format_mean,
                st.info_mean);
}

// ---------------------------------------------------------------------------

int cmd_gen(const CliState& st, const std::string& out,
            const std::string& hard_out) {
  const config::Config cfg = resolve_config(st);
  if (out.empty()) throw std::runtime_error("missing required option --out");
  const GeneratedPools pools = generate_pools(
      cfg, cfg.get_seed("seed"), static_cast<int>(cfg.get_int("n_episodes")));
  env::write_episodes(out, pools.all);
  std::printf("wrote %zu episodes to %s (%d excluded as all-pass)\n",
              pools.all.size(), out.c_str(), pools.n_excluded);
  if (!hard_out.empty()) {
    env::write_episodes(hard_out, pools.hard);
    std::printf("wrote %zu hard episodes to %s\n", pools.hard.size(),
                hard_out.c_str());
  }
  return 0;
}

int cmd_pretrain(const CliState& st, const std::string& dataset,
                 const std::string& ckpt_out, const std::string& metrics_out) {
  const config::Config cfg = resolve_config(st);
  require_file(dataset, "--dataset");
  const std::vector<env::EpisodeSpec> episodes = env::read_episodes(dataset);
  const harness::PretrainResult res =
      harness::pretrain_sampler(episodes, cfg.train_config());
  if (!ckpt_out.empty()) res.params.save(ckpt_out);
  if (!metrics_out.empty()) res.metrics.write_csv(metrics_out);
  const harness::MetricsRow& last = res.metrics.rows.back();
  std::printf("pretrain done: %zu steps, final batch acc %.4f (backend %s)\n",
              res.metrics.rows.size(), last.acc_mean,
              std::string(kern::active_name()).c_str());
  return 0;
}

int cmd_train(const CliState& st, const std::string& dataset,
              const std::string& init_ckpt, const std::string& sampler_out,
              const std::string& policy_out, const std::string& metrics_out) {
  const config::Config cfg = resolve_config(st);
  require_file(dataset, "--dataset");
  const std::vector<env::EpisodeSpec> episodes = env::read_episodes(dataset);
  std::optional<sampler::SamplerParams> init;
  if (!init_ckpt.empty()) {
    require_file(init_ckpt, "--init-ckpt");
    init = sampler::SamplerParams::from_checkpoint(init_ckpt);
  }
  const harness::JointResult res =
      harness::joint_train(episodes, cfg.train_config(), std::move(init));
  if (!sampler_out.empty()) res.sampler.save(sampler_out);
  if (!policy_out.empty()) res.policy.save(policy_out);
  if (!metrics_out.empty()) res.metrics.write_csv(metrics_out);
  const harness::MetricsRow& last = res.metrics.rows.back();
  std::printf("joint done: %zu steps, final batch reward %.4f acc %.4f\n",
              res.metrics.rows.size(), last.reward_mean, last.acc_mean);
  return 0;
}

int cmd_eval(const CliState& st, const std::string& dataset,
             const std::string& frozen_ckpt, const std::string& joint_ckpt,
             const std::string& policy_ckpt, const std::string& report_out) {
  const config::Config cfg = resolve_config(st);
  require_file(dataset, "--dataset");
  const std::vector<env::EpisodeSpec> episodes = env::read_episodes(dataset);

  std::vector<harness::Method> methods;
  for (const std::string& name : cfg.get_string_list("methods"))
    methods.push_back(harness::method_from_name(name));

  std::optional<sampler::SamplerParams> frozen, joint;
  std::optional<policy::PolicyParams> pol;
  if (!frozen_ckpt.empty()) {
    require_file(frozen_ckpt, "--frozen-ckpt");
    frozen = sampler::SamplerParams::from_checkpoint(frozen_ckpt);
  }
  if (!joint_ckpt.empty()) {
    require_file(joint_ckpt, "--joint-ckpt");
    joint = sampler::SamplerParams::from_checkpoint(joint_ckpt);
  }
  if (!policy_ckpt.empty()) {
    require_file(policy_ckpt, "--policy-ckpt");
    pol = policy::PolicyParams::from_checkpoint(policy_ckpt);
  }
  harness::Checkpoints ckpts;
  if (frozen) ckpts.frozen = &*frozen;
  if (joint) ckpts.joint = &*joint;
  if (pol) ckpts.policy = &*pol;

  const auto t0 = std::chrono::steady_clock::now();
  harness::EvalReport rep = harness::evaluate(
      episodes, methods, cfg.train_config(), ckpts, cfg.get_seed("eval_seed"));
  rep.wall_clock_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  print_report(rep);
  std::printf("wall_clock_s: %.2f\n", rep.wall_clock_s);
  if (!report_out.empty()) rep.write_json(report_out);
  return 0;
}

int cmd_compare(const CliState& st, const std::string& seeds_arg,
                const std::string& report_out) {
  const config::Config base = resolve_config(st);
  std::vector<std::uint64_t> seeds;
  if (seeds_arg.empty()) {
    seeds.push_back(base.get_seed("seed"));
  } else {
    std::stringstream ss(seeds_arg);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
  }
  std::vector<harness::Method> methods;
  for (const std::string& name : base.get_string_list("methods"))
    methods.push_back(harness::method_from_name(name));

  std::vector<harness::EvalReport> reports;
  for (const std::uint64_t seed : seeds) {
    config::Config cfg = base;
    cfg.set("seed", std::to_string(seed));
    harness::TrainConfig tcfg = cfg.train_config();

    const auto t0 = std::chrono::steady_clock::now();
    const GeneratedPools pools = generate_pools(
        cfg, seed, static_cast<int>(cfg.get_int("n_episodes")));
    std::printf("[seed %llu] pool: %zu episodes, %zu hard\n",
                static_cast<unsigned long long>(seed), pools.all.size(),
                pools.hard.size());

    const harness::PretrainResult pre =
        harness::pretrain_sampler(pools.all, tcfg);
    std::printf("[seed %llu] pretrain: %zu steps, final batch acc %.4f\n",
                static_cast<unsigned long long>(seed), pre.metrics.rows.size(),
                pre.metrics.rows.back().acc_mean);

    const harness::JointResult joint =
        harness::joint_train(pools.hard, tcfg, pre.params);
    std::printf("[seed %llu] joint: %zu steps, final batch reward %.4f\n",
                static_cast<unsigned long long>(seed),
                joint.metrics.rows.size(),
                joint.metrics.rows.back().reward_mean);

    // Fresh evaluation episodes from a stream disjoint from training.
    const std::uint64_t eval_seed = cfg.get_seed("eval_seed");
    env::EnvConfig eval_env = cfg.env_config();
    eval_env.seed = stream_seed(eval_seed, kSaltEvalPool);
    std::vector<env::EpisodeSpec> eval_pool;
    const int n_eval = static_cast<int>(cfg.get_int("eval_episodes"));
    for (int id = 0; id < n_eval; ++id)
      eval_pool.push_back(env::generate_episode(eval_env, id));

    harness::Checkpoints ckpts;
    ckpts.frozen = &pre.params;
    ckpts.joint = &joint.sampler;
    ckpts.policy = &joint.policy;
    harness::EvalReport rep =
        harness::evaluate(eval_pool, methods, tcfg, ckpts, eval_seed);
    rep.wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[seed %llu] results (pipeline %.1fs):\n",
                static_cast<unsigned long long>(seed), rep.wall_clock_s);
    print_report(rep);
    reports.push_back(std::move(rep));
  }

  if (seeds.size() > 1) {
    std::printf("mean accuracy over %zu seeds:\n", seeds.size());
    for (std::size_t m = 0; m < methods.size(); ++m) {
      double acc = 0.0;
      for (const harness::EvalReport& rep : reports)
        acc += rep.methods[m].accuracy;
      std::printf("%-16s %9.4f\n", reports[0].methods[m].method.c_str(),
                  acc / static_cast<double>(reports.size()));
    }
  }
  if (!report_out.empty()) reports.back().write_json(report_out);
  return 0;
}

int cmd_gradcheck(const CliState& st, bool inject_bias_error) {
  const config::Config cfg = resolve_config(st);
  const std::uint64_t seed = cfg.get_seed("seed");

  // Small random instance: 3 query rows, 20 frames (padded to 32 inside).
  Rng rng(stream_seed(seed, 0x47434845));
  env::SimilarityMatrix m;
  m.n_queries = 3;
  m.n_frames = 20;
  m.values.resize(static_cast<std::size_t>(m.n_queries) * m.n_frames);
  for (double& v : m.values)
    v = env::kSimMin + (env::kSimMax - env::kSimMin) * rng.uniform();

  sampler::SamplerParams params = sampler::SamplerParams::init(seed);
  sampler::ForwardCache cache;
  const std::vector<double> scores0 = sampler_forward(params, m, &cache);
  const sampling::Draw fixed = sampling::greedy_select(scores0, 5);

  // Loss: exact log-probability of the fixed ordered draw (smooth in the
  // parameters wherever the ReLU/pool decision pattern is unchanged).
  const auto fn = [&]() {
    sampler::ForwardCache c;
    const std::vector<double> s = sampler_forward(params, m, &c);
    return nn::FnSample{
        sampling::ordered_logprob(s, fixed.indices, 1.0), c.pattern()};
  };
  sampler::SamplerGrads analytic = backward_from_scores(
      params, cache, sampling::logprob_grad_scores(scores0, fixed.indices, 1.0));
  if (inject_bias_error) analytic.layers[8].b[0] += 0.5;  // corrupt head bias

  static const char* kNames[] = {"enc1", "enc2", "enc3", "enc4", "dec1",
                                 "dec2", "dec3", "dec4", "head"};
  auto pviews = params.param_views();  // weights-then-bias per layer, in order
  bool ok = true;
  for (std::size_t layer = 0; layer < 9; ++layer) {
    nn::GradCheckOptions opts;
    opts.max_coords = 60;
    opts.seed = stream_seed(seed, 0x47434845, layer);
    const nn::GradCheckReport rep = nn::grad_check(
        fn, {pviews[2 * layer], pviews[2 * layer + 1]},
        {std::span<const double>(analytic.layers[layer].w),
         std::span<const double>(analytic.layers[layer].b)},
        opts);
    const bool pass = rep.max_rel_err < 1e-4;
    ok = ok && pass;
    std::printf("%-5s max_rel_err %.3e  (checked %zu, skipped %zu)%s\n",
                kNames[layer], rep.max_rel_err, rep.checked,
                rep.skipped_nonsmooth, pass ? "" : "  FAIL");
  }
  std::printf(ok ? "gradcheck: all layers within 1e-4\n"
                 : "gradcheck: tolerance exceeded\n");
  return ok ? 0 : 1;
}

int cmd_score(const CliState& st, const std::string& matrix_path, bool cosine,
              const std::string& ckpt) {
  const config::Config cfg = resolve_config(st);
  require_file(matrix_path, "--matrix");
  const env::SimilarityMatrix m = cosine
                                      ? env::ingest_cosine_matrix(matrix_path)
                                      : env::read_matrix(matrix_path);
  if (!ckpt.empty()) require_file(ckpt, "--ckpt");
  sampler::SamplerParams params =
      ckpt.empty() ? sampler::SamplerParams::init(cfg.get_seed("seed"))
                   : sampler::SamplerParams::from_checkpoint(ckpt);
  for (const double s : sampler_forward(params, m))
    std::printf("%.17g\n", s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"key-frame sampler + query policy: training and evaluation"};
  app.require_subcommand(1);

  CliState st;
  std::string out, hard_out, dataset, init_ckpt, sampler_out, policy_out;
  std::string metrics_out, frozen_ckpt, joint_ckpt, policy_ckpt, report_out;
  std::string seeds_arg, matrix_path, ckpt;
  bool inject_bias_error = false, cosine = false;

  CLI::App* gen = app.add_subcommand("gen", "generate a pass-rated episode pool");
  add_schema_options(gen, st);
  gen->add_option("--out", out, "episode JSONL output path")->required();
  gen->add_option("--hard-out", hard_out,
                  "optional JSONL path for the hardest episode of each group");

  CLI::App* pre = app.add_subcommand("pretrain", "phase 1: sampler-only training");
  add_schema_options(pre, st);
  pre->add_option("--dataset", dataset, "episode JSONL input")->required();
  pre->add_option("--ckpt-out", sampler_out, "sampler checkpoint output");
  pre->add_option("--metrics-out", metrics_out, "per-step metrics CSV output");

  CLI::App* train = app.add_subcommand("train", "phase 2: joint policy+sampler training");
  add_schema_options(train, st);
  train->add_option("--dataset", dataset, "episode JSONL input")->required();
  train->add_option("--init-ckpt", init_ckpt, "pretrained sampler checkpoint");
  train->add_option("--sampler-out", sampler_out, "sampler checkpoint output");
  train->add_option("--policy-out", policy_out, "policy checkpoint output");
  train->add_option("--metrics-out", metrics_out, "per-step metrics CSV output");

  CLI::App* ev = app.add_subcommand("eval", "paired evaluation of the configured methods");
  add_schema_options(ev, st);
  ev->add_option("--dataset", dataset, "episode JSONL input")->required();
  ev->add_option("--frozen-ckpt", frozen_ckpt, "pretrained sampler checkpoint");
  ev->add_option("--joint-ckpt", joint_ckpt, "jointly trained sampler checkpoint");
  ev->add_option("--policy-ckpt", policy_ckpt, "trained policy checkpoint");
  ev->add_option("--report-out", report_out, "evaluation report JSON output");

  CLI::App* cmp = app.add_subcommand(
      "compare", "full pipeline: generate, pretrain, joint train, evaluate");
  add_schema_options(cmp, st);
  cmp->add_option("--seeds", seeds_arg, "comma-separated seeds (default: config seed)");
  cmp->add_option("--report-out", report_out, "JSON report for the last seed");

  CLI::App* gc = app.add_subcommand(
      "gradcheck", "finite-difference audit of the sampler gradients");
  add_schema_options(gc, st);
  gc->add_flag("--inject-bias-error", inject_bias_error,
               "corrupt one analytic gradient to prove the audit catches it")
      ->group("");  // hidden

  CLI::App* sc = app.add_subcommand("score",
                                    "score a similarity-matrix file, one line per frame");
  add_schema_options(sc, st);
  sc->add_option("--matrix", matrix_path, "similarity matrix file")->required();
  sc->add_flag("--cosine", cosine, "input holds raw cosines in [-1, 1]");
  sc->add_option("--ckpt", ckpt, "sampler checkpoint (default: fresh init)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(st, out, hard_out);
    if (pre->parsed()) return cmd_pretrain(st, dataset, sampler_out, metrics_out);
    if (train->parsed())
      return cmd_train(st, dataset, init_ckpt, sampler_out, policy_out,
                       metrics_out);
    if (ev->parsed())
      return cmd_eval(st, dataset, frozen_ckpt, joint_ckpt, policy_ckpt,
                      report_out);
    if (cmp->parsed()) return cmd_compare(st, seeds_arg, report_out);
    if (gc->parsed()) return cmd_gradcheck(st, inject_bias_error);
    if (sc->parsed()) return cmd_score(st, matrix_path, cosine, ckpt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

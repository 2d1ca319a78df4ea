// Synthetic environment: episode structure invariants, exact clean-signal
// values, oracle linearity and Monte Carlo unbiasedness, pass-rate estimation,
// and both file formats with their failure modes.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "keyrl/env.hpp"
#include "keyrl/rng.hpp"

using namespace keyrl;

namespace {

namespace fs = std::filesystem;

fs::path test_dir() {
  const fs::path dir = fs::temp_directory_path() / "keyrl_env_tests";
  fs::create_directories(dir);
  return dir;
}

std::string write_text(const std::string& name, const std::string& body) {
  const std::string p = (test_dir() / name).string();
  std::ofstream out(p, std::ios::binary);
  out << body;
  return p;
}

env::EpisodeSpec manual_episode(int n_frames, std::vector<env::Event> events,
                                int vocab = 16) {
  env::EpisodeSpec ep;
  ep.episode_id = 900;
  ep.n_frames = n_frames;
  ep.vocab_size = vocab;
  ep.events = std::move(events);
  ep.hop_count = static_cast<int>(ep.events.size());
  ep.hint.assign(vocab, 0.0);
  return ep;
}

}  // namespace

TEST_CASE("generate_episode: determinism and structural invariants") {
  env::EnvConfig cfg;
  cfg.seed = 2024;
  for (std::int64_t id = 0; id < 40; ++id) {
    const env::EpisodeSpec a = env::generate_episode(cfg, id);
    const env::EpisodeSpec b = env::generate_episode(cfg, id);
    CHECK(a.hint == b.hint);
    CHECK(a.correct_option == b.correct_option);
    REQUIRE(a.events.size() == b.events.size());

    CHECK(a.episode_id == id);
    CHECK(a.n_frames == cfg.n_frames);
    CHECK(a.hop_count == static_cast<int>(a.events.size()));
    CHECK(a.hop_count >= 1);
    CHECK(a.hop_count <= 3);
    CHECK(static_cast<int>(a.hint.size()) == cfg.vocab_size);
    CHECK(a.correct_option >= 0);
    CHECK(a.correct_option < 4);

    std::set<int> concepts;
    int prev_end = 0;
    for (std::size_t e = 0; e < a.events.size(); ++e) {
      const env::Event& ev = a.events[e];
      CHECK(ev.start >= prev_end);  // ordered and non-overlapping
      prev_end = ev.end;
      CHECK(ev.end <= cfg.n_frames);
      const int w = ev.end - ev.start;
      CHECK(w >= cfg.event_width_min);
      CHECK(w <= cfg.event_width_max);
      CHECK(ev.concept_id >= 0);
      CHECK(ev.concept_id < cfg.vocab_size);
      CHECK(ev.concept_id == b.events[e].concept_id);
      CHECK(ev.start == b.events[e].start);
      concepts.insert(ev.concept_id);
    }
    CHECK(concepts.size() == a.events.size());  // distinct concepts
  }

  // Different ids must not all coincide.
  const env::EpisodeSpec e0 = env::generate_episode(cfg, 0);
  const env::EpisodeSpec e1 = env::generate_episode(cfg, 1);
  CHECK(e0.hint != e1.hint);
}

TEST_CASE("hop weights steer the event count") {
  env::EnvConfig cfg;
  cfg.hop_weights = {0.0, 0.0, 1.0};
  for (std::int64_t id = 0; id < 20; ++id)
    CHECK(env::generate_episode(cfg, id).hop_count == 3);
  cfg.hop_weights = {1.0};
  for (std::int64_t id = 0; id < 20; ++id)
    CHECK(env::generate_episode(cfg, id).hop_count == 1);
}

TEST_CASE("environment config validation") {
  env::EnvConfig cfg;
  cfg.n_frames = 15;
  CHECK_THROWS_AS(env::generate_episode(cfg, 0), std::invalid_argument);
  cfg = {};
  cfg.vocab_size = 7;
  CHECK_THROWS_AS(env::generate_episode(cfg, 0), std::invalid_argument);
  cfg = {};
  cfg.event_width_min = 5;
  cfg.event_width_max = 4;
  CHECK_THROWS_AS(env::generate_episode(cfg, 0), std::invalid_argument);
  cfg = {};
  cfg.hop_weights = {0.0, 0.0, 0.0};
  CHECK_THROWS_AS(env::generate_episode(cfg, 0), std::invalid_argument);
  cfg = {};
  cfg.n_frames = 16;
  cfg.event_width_max = 6;  // 3 hops * 6 frames > 16: cannot guarantee a fit
  CHECK_THROWS_AS(env::generate_episode(cfg, 0), std::invalid_argument);
}

TEST_CASE("noise-free similarity: exact plateau and baseline levels") {
  const env::EpisodeSpec ep =
      manual_episode(32, {{5, 4, 9}, {11, 20, 24}});
  const env::SimilarityMatrix m =
      env::synthesize_similarity(ep, {5, 3, 11}, 0.0);
  REQUIRE(m.n_queries == 3);
  REQUIRE(m.n_frames == 32);

  for (int t = 0; t < 32; ++t) {
    // Row 0 matches the first event only.
    CHECK(m.at(0, t) == (t >= 4 && t < 9 ? env::kSimHigh : env::kSimLow));
    // Row 1 matches nothing: flat baseline.
    CHECK(m.at(1, t) == env::kSimLow);
    // Row 2 matches the second event only.
    CHECK(m.at(2, t) == (t >= 20 && t < 24 ? env::kSimHigh : env::kSimLow));
  }
}

TEST_CASE("noisy similarity: deterministic, clamped, noise actually applied") {
  const env::EpisodeSpec ep = manual_episode(64, {{2, 10, 15}});
  const env::SimilarityMatrix a = env::synthesize_similarity(ep, {2, 7}, 0.05);
  const env::SimilarityMatrix b = env::synthesize_similarity(ep, {2, 7}, 0.05);
  CHECK(a.values == b.values);

  int changed = 0;
  const env::SimilarityMatrix clean = env::synthesize_similarity(ep, {2, 7}, 0.0);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    CHECK(a.values[i] >= env::kSimMin);
    CHECK(a.values[i] <= env::kSimMax);
    if (a.values[i] != clean.values[i]) ++changed;
  }
  CHECK(changed > 100);  // jitter touched nearly every entry

  // Same concept in a different row position sees a different noise stream.
  const env::SimilarityMatrix swapped = env::synthesize_similarity(ep, {7, 2}, 0.05);
  bool any_diff = false;
  for (int t = 0; t < 64; ++t) any_diff |= swapped.at(1, t) != a.values[t];
  CHECK(any_diff);

  CHECK_THROWS_AS(env::synthesize_similarity(ep, {}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(env::synthesize_similarity(ep, {1, 2, 3, 4, 5}, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(env::synthesize_similarity(ep, {16}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(env::synthesize_similarity(ep, {2}, -0.1), std::invalid_argument);
}

TEST_CASE("plateau heights shrink with the noise level but stay bounded") {
  const env::EpisodeSpec ep = manual_episode(32, {{4, 8, 14}});
  // Height is sampled per event from the episode stream; with noise the
  // plateau sits in [kSimHigh - min(15*noise, 0.6), kSimHigh].
  const env::SimilarityMatrix noisy = env::synthesize_similarity(ep, {4}, 0.02);
  double plateau_max = 0.0;
  for (int t = 8; t < 14; ++t) plateau_max = std::max(plateau_max, noisy.at(0, t));
  CHECK(plateau_max > env::kSimHigh - 0.3 - 5 * 0.02);  // attenuation + jitter
  CHECK(plateau_max <= env::kSimMax);
}

TEST_CASE("coverage fraction: exact counting and validation") {
  const env::EpisodeSpec ep =
      manual_episode(64, {{1, 10, 14}, {2, 50, 53}});
  CHECK(env::coverage_fraction(ep, {0, 20, 30}) == 0.0);
  CHECK(env::coverage_fraction(ep, {11}) == 0.5);
  CHECK(env::coverage_fraction(ep, {13, 50}) == 1.0);
  CHECK(env::coverage_fraction(ep, {10, 11, 12}) == 0.5);  // same event twice
  CHECK(env::coverage_fraction(ep, {14}) == 0.0);          // end is exclusive
  CHECK(env::coverage_fraction(ep, {49}) == 0.0);

  const env::EpisodeSpec no_events = manual_episode(64, {});
  CHECK(env::coverage_fraction(no_events, {1, 2, 3}) == 0.0);

  CHECK_THROWS_AS(env::coverage_fraction(ep, {64}), std::invalid_argument);
  CHECK_THROWS_AS(env::coverage_fraction(ep, {-1}), std::invalid_argument);
  CHECK_THROWS_AS(env::coverage_fraction(ep, {3, 3}), std::invalid_argument);
}

TEST_CASE("success probability interpolates linearly between floor and hit") {
  const env::EpisodeSpec ep =
      manual_episode(64, {{1, 10, 14}, {2, 50, 53}});
  const env::OracleConfig cfg{0.9, 0.25, 0};
  CHECK(env::success_probability(ep, {0}, cfg) == doctest::Approx(0.25));
  CHECK(env::success_probability(ep, {11}, cfg) ==
        doctest::Approx(0.25 + 0.5 * 0.65));
  CHECK(env::success_probability(ep, {11, 51}, cfg) == doctest::Approx(0.9));

  const env::OracleConfig bad{0.2, 0.25, 0};  // floor above hit rate
  CHECK_THROWS_AS(env::success_probability(ep, {0}, bad), std::invalid_argument);
}

TEST_CASE("oracle draws are unbiased against the analytic probability") {
  const env::EpisodeSpec ep = manual_episode(64, {{1, 10, 14}, {2, 50, 53}});
  const env::OracleConfig cfg{0.9, 0.25, 0};
  const std::vector<int> frames = {11};  // p = 0.575
  const double p = env::success_probability(ep, frames, cfg);

  Rng rng(stream_seed(31, 0x4f524143));
  const int n = 20000;
  int hits = 0;
  for (int i = 0; i < n; ++i) hits += env::answer_oracle(ep, frames, cfg, rng);
  const double freq = static_cast<double>(hits) / n;
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(freq - p) < 4.5 * sigma);

  // The convenience overload is a pure function of (config seed, episode).
  const bool first = env::answer_oracle(ep, frames, cfg);
  for (int i = 0; i < 5; ++i) CHECK(env::answer_oracle(ep, frames, cfg) == first);
}

TEST_CASE("pass-rate estimation: chance floor without events, exclusion at 1") {
  // No events: every subset scores the chance floor exactly.
  const env::EpisodeSpec empty = manual_episode(64, {});
  const env::OracleConfig cfg{0.9, 0.25, 0};
  Rng rng(stream_seed(41, 0x50415353));
  const env::PassRate pr = env::estimate_pass_rate(empty, 8, 4000, cfg, rng);
  CHECK(std::abs(pr.c - 0.25) < 0.03);
  CHECK_FALSE(pr.excluded);

  // Full-width event and p_hit == 1: every trial passes -> excluded.
  const env::EpisodeSpec easy = manual_episode(16, {{1, 0, 16}});
  const env::OracleConfig sure{1.0, 0.25, 0};
  Rng rng2(stream_seed(42, 0x50415353));
  const env::PassRate all_pass = env::estimate_pass_rate(easy, 4, 64, sure, rng2);
  CHECK(all_pass.c == 1.0);
  CHECK(all_pass.excluded);

  CHECK_THROWS_AS(env::estimate_pass_rate(empty, 0, 8, cfg, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(env::estimate_pass_rate(empty, 8, 0, cfg, rng),
                  std::invalid_argument);
}

TEST_CASE("SIMMAT round-trip is exact") {
  env::SimilarityMatrix m;
  m.n_queries = 2;
  m.n_frames = 5;
  m.values = {0.001, 0.1, 0.123456789012345678, 1.0, 0.9,
              0.5,   0.25, 0.0625,              0.8, 0.015625};
  const std::string path = (test_dir() / "roundtrip.simmat").string();
  env::write_matrix(path, m);
  const env::SimilarityMatrix r = env::read_matrix(path);
  CHECK(r.n_queries == 2);
  CHECK(r.n_frames == 5);
  CHECK(r.values == m.values);  // %.17g decimals reparse to identical bits
}

TEST_CASE("SIMMAT reader: clamping and malformed inputs") {
  // Out-of-range entries clamp into [kSimMin, kSimMax].
  const std::string clamp = write_text(
      "clamp.simmat", "SIMMAT 1\n1 4\n-0.5 0.0 0.5 7.25\n");
  const env::SimilarityMatrix m = env::read_matrix(clamp);
  CHECK(m.values == std::vector<double>{0.001, 0.001, 0.5, 1.0});

  CHECK_THROWS_AS(env::read_matrix((test_dir() / "absent.simmat").string()),
                  std::runtime_error);
  CHECK_THROWS_AS(
      env::read_matrix(write_text("badmagic.simmat", "SIMMAT 2\n1 1\n0.5\n")),
      std::runtime_error);
  CHECK_THROWS_AS(
      env::read_matrix(write_text("shortrow.simmat", "SIMMAT 1\n1 3\n0.5 0.5\n")),
      std::runtime_error);
  CHECK_THROWS_AS(
      env::read_matrix(write_text("extrarow.simmat",
                                  "SIMMAT 1\n1 2\n0.5 0.5\n0.5 0.5\n")),
      std::runtime_error);
  CHECK_THROWS_AS(
      env::read_matrix(write_text("nonfinite.simmat", "SIMMAT 1\n1 2\n0.5 nan\n")),
      std::runtime_error);
  CHECK_THROWS_AS(
      env::read_matrix(write_text("badcount.simmat", "SIMMAT 1\n0 2\n")),
      std::runtime_error);
}

TEST_CASE("cosine ingestion maps [-1, 1] through (s + 1) / 2") {
  const std::string path = write_text(
      "cosine.simmat", "SIMMAT 1\n1 4\n-1.0 0.0 0.8 1.0\n");
  const env::SimilarityMatrix m = env::ingest_cosine_matrix(path);
  CHECK(m.values[0] == 0.001);  // (s+1)/2 = 0, clamped up to the floor
  CHECK(m.values[1] == 0.5);
  CHECK(m.values[2] == doctest::Approx(0.9));
  CHECK(m.values[3] == 1.0);
}

TEST_CASE("episode JSONL round-trip preserves every field") {
  env::EnvConfig cfg;
  cfg.seed = 77;
  std::vector<env::EpisodeSpec> pool;
  for (std::int64_t id = 0; id < 12; ++id) {
    env::EpisodeSpec ep = env::generate_episode(cfg, id);
    if (id % 3 == 0) {
      ep.pass_rate = static_cast<double>(id) / 16.0;
      ep.excluded = (id == 6);
    }
    pool.push_back(std::move(ep));
  }
  const std::string path = (test_dir() / "episodes.jsonl").string();
  env::write_episodes(path, pool);
  const std::vector<env::EpisodeSpec> back = env::read_episodes(path);
  REQUIRE(back.size() == pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(back[i].episode_id == pool[i].episode_id);
    CHECK(back[i].n_frames == pool[i].n_frames);
    CHECK(back[i].hop_count == pool[i].hop_count);
    CHECK(back[i].vocab_size == pool[i].vocab_size);
    CHECK(back[i].correct_option == pool[i].correct_option);
    CHECK(back[i].pass_rate == pool[i].pass_rate);  // incl. the -1 sentinel
    CHECK(back[i].excluded == pool[i].excluded);
    CHECK(back[i].hint == pool[i].hint);  // shortest-round-trip doubles
    REQUIRE(back[i].events.size() == pool[i].events.size());
    for (std::size_t e = 0; e < pool[i].events.size(); ++e) {
      CHECK(back[i].events[e].concept_id == pool[i].events[e].concept_id);
      CHECK(back[i].events[e].start == pool[i].events[e].start);
      CHECK(back[i].events[e].end == pool[i].events[e].end);
    }
  }

  // Byte determinism: writing the same pool twice gives identical files.
  const std::string path2 = (test_dir() / "episodes2.jsonl").string();
  env::write_episodes(path2, pool);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), {});
  std::string s2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(s1 == s2);
}

TEST_CASE("episode reader rejects corrupted lines with a line number") {
  const std::string bad_json = write_text("bad1.jsonl", "{not json}\n");
  CHECK_THROWS_WITH_AS(env::read_episodes(bad_json),
                       doctest::Contains("line 1"), std::runtime_error);

  // Overlapping windows.
  const std::string overlap = write_text(
      "bad2.jsonl",
      R"({"episode_id":0,"n_frames":32,"hop_count":2,"vocab_size":16,"correct_option":0,"pass_rate":null,"excluded":false,"events":[{"concept_id":1,"start":4,"end":10},{"concept_id":2,"start":8,"end":12}],"hint":[0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]})"
      "\n");
  CHECK_THROWS_AS(env::read_episodes(overlap), std::runtime_error);

  // Hint length disagrees with the stated vocabulary.
  const std::string shorthint = write_text(
      "bad3.jsonl",
      R"({"episode_id":0,"n_frames":32,"hop_count":1,"vocab_size":16,"correct_option":0,"pass_rate":null,"excluded":false,"events":[{"concept_id":1,"start":4,"end":10}],"hint":[0,0,0]})"
      "\n");
  CHECK_THROWS_AS(env::read_episodes(shorthint), std::runtime_error);
}

#pragma once
// Synthetic long-video question-answering environment.
//
// An episode is a frame axis with a handful of planted, non-overlapping
// concept events; answering its question requires evidence from every event
// ("hops").  A text-free stand-in for a retrieval model turns (episode,
// queries) into a query-by-frame similarity matrix; a stochastic oracle
// stands in for the answering model, with success probability interpolating
// linearly between chance and a hit rate as event coverage grows.

#include <cstdint>
#include <string>
#include <vector>

#include "keyrl/rng.hpp"

namespace keyrl::env {

// Similarity value conventions shared across the project.
constexpr double kSimLow = 0.1;    // baseline off-event level
constexpr double kSimHigh = 0.9;   // on-event plateau level (before jitter)
constexpr double kSimMin = 0.001;  // clamp floor for emitted entries
constexpr double kSimMax = 1.0;    // clamp ceiling

struct Event {
  int concept_id = 0;
  int start = 0;  // inclusive
  int end = 0;    // exclusive
};

struct EpisodeSpec {
  std::int64_t episode_id = 0;
  int n_frames = 0;
  int hop_count = 0;            // == events.size()
  std::vector<Event> events;    // temporally ordered, non-overlapping
  int vocab_size = 0;
  std::vector<double> hint;     // noisy concept-relevance vector, length vocab_size
  int correct_option = 0;       // in [0, 4)
  double pass_rate = -1.0;      // estimated c; negative = not yet estimated
  bool excluded = false;        // c == 1 episodes are filtered from training
};

struct EnvConfig {
  int n_frames = 128;
  int vocab_size = 16;
  std::vector<double> hop_weights = {1.0, 1.0, 1.0};  // weights for 1..3 hops
  int event_width_min = 3;
  int event_width_max = 6;
  double hint_noise = 0.25;
  std::uint64_t seed = 42;
};

// Deterministic in (config.seed, episode_id).  Throws std::invalid_argument
// when events cannot fit (max hop count times max width exceeds n_frames) or
// on other bad config values.
EpisodeSpec generate_episode(const EnvConfig& cfg, std::int64_t episode_id);

// Row-major: values[q * n_frames + t].
struct SimilarityMatrix {
  int n_queries = 0;
  int n_frames = 0;
  std::vector<double> values;

  double* row(int q) { return values.data() + static_cast<std::size_t>(q) * n_frames; }
  const double* row(int q) const {
    return values.data() + static_cast<std::size_t>(q) * n_frames;
  }
  double at(int q, int t) const {
    return values[static_cast<std::size_t>(q) * n_frames + t];
  }
};

// Row j: baseline kSimLow plus an elevated plateau over the window of every
// event whose concept equals queries[j].  `noise` scales the whole corruption
// model — per-entry Gaussian jitter and a per-event plateau attenuation —
// so noise == 0 reproduces the clean 0.1 / 0.9 pattern exactly.  Entries are
// clamped to [kSimMin, kSimMax].  Deterministic in (episode_id, queries).
SimilarityMatrix synthesize_similarity(const EpisodeSpec& episode,
                                       const std::vector<int>& queries,
                                       double noise);

struct OracleConfig {
  double p_hit = 0.9;          // success probability at full coverage
  double chance_floor = 0.25;  // 4-option guessing
  std::uint64_t rng_seed = 0;
};

// Fraction of the episode's events with at least one selected frame inside
// their window.  Frames must be distinct and within range.
double coverage_fraction(const EpisodeSpec& episode,
                         const std::vector<int>& frames);

// chance_floor + coverage * (p_hit - chance_floor)
double success_probability(const EpisodeSpec& episode,
                           const std::vector<int>& frames,
                           const OracleConfig& cfg);

// One Bernoulli answer draw on the caller's stream (sequential within a
// trajectory).
bool answer_oracle(const EpisodeSpec& episode, const std::vector<int>& frames,
                   const OracleConfig& cfg, Rng& rng);
// Convenience: a dedicated per-call stream derived from (rng_seed,
// episode_id), so every caller holding the same config sees the same draw.
bool answer_oracle(const EpisodeSpec& episode, const std::vector<int>& frames,
                   const OracleConfig& cfg);

struct PassRate {
  double c = 0.0;
  bool excluded = false;  // c == 1: every trial passed
};

// Mean oracle success over `trials` independent uniform random draws of k
// distinct frames, all on the supplied stream.
PassRate estimate_pass_rate(const EpisodeSpec& episode, int k, int trials,
                            const OracleConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Similarity matrix file format ("SIMMAT 1"):
//   line 1: SIMMAT 1
//   line 2: <n_queries> <n_frames>
//   then n_queries lines of n_frames space-separated decimals.  UTF-8, LF.
// write_matrix prints round-trip-exact decimals; read_matrix clamps entries
// into [kSimMin, kSimMax] (a no-op for files we wrote ourselves).

void write_matrix(const std::string& path, const SimilarityMatrix& m);
SimilarityMatrix read_matrix(const std::string& path);
// For raw cosine matrices in [-1, 1]: entries are shifted by (s+1)/2 and then
// clamped like native entries.
SimilarityMatrix ingest_cosine_matrix(const std::string& path);

// ---------------------------------------------------------------------------
// Episode dataset: one JSON object per line, stable key order, so files diff
// cleanly and round-trip exactly.

void write_episodes(const std::string& path,
                    const std::vector<EpisodeSpec>& episodes);
std::vector<EpisodeSpec> read_episodes(const std::string& path);

}  // namespace keyrl::env

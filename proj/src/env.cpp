#include "keyrl/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace keyrl::env {
namespace {

// Stream salts: every stochastic aspect of the environment has its own tag so
// draws never depend on call order elsewhere.
constexpr std::uint64_t kSaltEpisode = 0x45505330;  // episode structure
constexpr std::uint64_t kSaltSimRow = 0x53494d52;   // per-row similarity noise
constexpr std::uint64_t kSaltHeight = 0x48454947;   // per-event plateau height
constexpr std::uint64_t kSaltOracle = 0x4f52434c;   // per-call oracle stream

void validate_env_config(const EnvConfig& cfg) {
  if (cfg.n_frames < 16)
    throw std::invalid_argument("env: n_frames must be >= 16");
  if (cfg.vocab_size < 8)
    throw std::invalid_argument("env: vocab_size must be >= 8");
  if (cfg.hop_weights.empty() || cfg.hop_weights.size() > 3)
    throw std::invalid_argument("env: hop_weights needs 1..3 entries");
  double wsum = 0.0;
  for (double w : cfg.hop_weights) {
    if (w < 0.0 || !std::isfinite(w))
      throw std::invalid_argument("env: hop weights must be finite and >= 0");
    wsum += w;
  }
  if (wsum <= 0.0)
    throw std::invalid_argument("env: hop weights must have positive sum");
  if (cfg.event_width_min < 1 || cfg.event_width_max < cfg.event_width_min)
    throw std::invalid_argument("env: bad event width range");
  if (!(cfg.hint_noise >= 0.0) || !std::isfinite(cfg.hint_noise))
    throw std::invalid_argument("env: hint_noise must be finite and >= 0");
  int max_hops = 0;
  for (std::size_t i = 0; i < cfg.hop_weights.size(); ++i)
    if (cfg.hop_weights[i] > 0.0) max_hops = static_cast<int>(i) + 1;
  if (max_hops * cfg.event_width_max > cfg.n_frames)
    throw std::invalid_argument(
        "env: events cannot fit (hop_count * max event width > n_frames)");
}

}  // namespace

EpisodeSpec generate_episode(const EnvConfig& cfg, std::int64_t episode_id) {
  validate_env_config(cfg);
  Rng rng(stream_seed(cfg.seed, kSaltEpisode,
                      static_cast<std::uint64_t>(episode_id)));

  EpisodeSpec ep;
  ep.episode_id = episode_id;
  ep.n_frames = cfg.n_frames;
  ep.vocab_size = cfg.vocab_size;

  // Hop count from the configured weights.
  double wsum = 0.0;
  for (double w : cfg.hop_weights) wsum += w;
  double u = rng.uniform() * wsum;
  int hops = 1;
  for (std::size_t i = 0; i < cfg.hop_weights.size(); ++i) {
    if (u < cfg.hop_weights[i]) {
      hops = static_cast<int>(i) + 1;
      break;
    }
    u -= cfg.hop_weights[i];
    hops = static_cast<int>(i) + 1;
  }
  ep.hop_count = hops;

  // Distinct concepts, one per event.
  const std::vector<int> concepts = rng.sample_indices(cfg.vocab_size, hops);

  // Widths, then uniform non-overlapping placement: sorted offsets into the
  // slack distribute the windows left to right without rejection loops.
  std::vector<int> widths(hops);
  int total_width = 0;
  for (int& w : widths) {
    w = cfg.event_width_min +
        rng.uniform_int(cfg.event_width_max - cfg.event_width_min + 1);
    total_width += w;
  }
  if (total_width > cfg.n_frames)
    throw std::invalid_argument("env: drawn events cannot fit in n_frames");
  const int slack = cfg.n_frames - total_width;
  std::vector<int> offsets(hops);
  for (int& o : offsets) o = rng.uniform_int(slack + 1);
  std::sort(offsets.begin(), offsets.end());
  int cursor = 0;
  for (int e = 0; e < hops; ++e) {
    Event ev;
    ev.concept_id = concepts[e];
    ev.start = offsets[e] + cursor;
    ev.end = ev.start + widths[e];
    cursor += widths[e];
    ep.events.push_back(ev);
  }

  // Noisy relevance hint over the concept vocabulary.
  ep.hint.assign(cfg.vocab_size, 0.0);
  for (const Event& ev : ep.events) ep.hint[ev.concept_id] = 1.0;
  for (double& h : ep.hint) h += cfg.hint_noise * rng.normal();

  ep.correct_option = rng.uniform_int(4);
  return ep;
}

SimilarityMatrix synthesize_similarity(const EpisodeSpec& episode,
                                       const std::vector<int>& queries,
                                       double noise) {
  if (queries.empty() || queries.size() > 4)
    throw std::invalid_argument("synthesize_similarity: need 1..4 queries");
  for (int q : queries)
    if (q < 0 || q >= episode.vocab_size)
      throw std::invalid_argument("synthesize_similarity: query concept out of vocabulary");
  if (!(noise >= 0.0) || !std::isfinite(noise))
    throw std::invalid_argument("synthesize_similarity: noise must be finite and >= 0");
  if (episode.n_frames <= 0)
    throw std::invalid_argument("synthesize_similarity: episode has no frames");

  // Per-event plateau attenuation, scaled by the noise level so that
  // noise == 0 keeps plateaus at exactly kSimHigh.  Event heights are a fixed
  // property of the episode (same across rows and query sets).
  const double atten_scale = std::min(15.0 * noise, 0.6);
  std::vector<double> plateau(episode.events.size(), kSimHigh);
  for (std::size_t e = 0; e < episode.events.size(); ++e) {
    Rng hr(stream_seed(static_cast<std::uint64_t>(episode.episode_id),
                       kSaltHeight, e));
    plateau[e] = kSimHigh - atten_scale * hr.uniform();
  }

  SimilarityMatrix m;
  m.n_queries = static_cast<int>(queries.size());
  m.n_frames = episode.n_frames;
  m.values.assign(static_cast<std::size_t>(m.n_queries) * m.n_frames, kSimLow);

  for (int j = 0; j < m.n_queries; ++j) {
    double* row = m.row(j);
    for (std::size_t e = 0; e < episode.events.size(); ++e) {
      const Event& ev = episode.events[e];
      if (ev.concept_id != queries[j]) continue;
      for (int t = ev.start; t < ev.end && t < m.n_frames; ++t)
        row[t] = plateau[e];
    }
    if (noise > 0.0) {
      Rng nr(stream_seed(static_cast<std::uint64_t>(episode.episode_id),
                         kSaltSimRow, static_cast<std::uint64_t>(j),
                         static_cast<std::uint64_t>(queries[j])));
      for (int t = 0; t < m.n_frames; ++t) row[t] += noise * nr.normal();
    }
    for (int t = 0; t < m.n_frames; ++t)
      row[t] = std::clamp(row[t], kSimMin, kSimMax);
  }
  return m;
}

namespace {

void validate_frames(const EpisodeSpec& episode, const std::vector<int>& frames) {
  std::vector<char> seen(episode.n_frames, 0);
  for (int f : frames) {
    if (f < 0 || f >= episode.n_frames)
      throw std::invalid_argument("oracle: frame index out of range");
    if (seen[f]) throw std::invalid_argument("oracle: duplicate frame index");
    seen[f] = 1;
  }
}

void validate_oracle_config(const OracleConfig& cfg) {
  if (!(cfg.chance_floor >= 0.0) || !(cfg.p_hit <= 1.0) ||
      !(cfg.chance_floor < cfg.p_hit))
    throw std::invalid_argument("oracle: need 0 <= chance_floor < p_hit <= 1");
}

}  // namespace

double coverage_fraction(const EpisodeSpec& episode,
                         const std::vector<int>& frames) {
  validate_frames(episode, frames);
  if (episode.events.empty()) return 0.0;
  int covered = 0;
  for (const Event& ev : episode.events) {
    bool hit = false;
    for (int f : frames)
      if (f >= ev.start && f < ev.end) {
        hit = true;
        break;
      }
    covered += hit ? 1 : 0;
  }
  return static_cast<double>(covered) /
         static_cast<double>(episode.events.size());
}

double success_probability(const EpisodeSpec& episode,
                           const std::vector<int>& frames,
                           const OracleConfig& cfg) {
  validate_oracle_config(cfg);
  const double f = coverage_fraction(episode, frames);
  return cfg.chance_floor + f * (cfg.p_hit - cfg.chance_floor);
}

bool answer_oracle(const EpisodeSpec& episode, const std::vector<int>& frames,
                   const OracleConfig& cfg, Rng& rng) {
  const double p = success_probability(episode, frames, cfg);
  return rng.uniform() < p;
}

bool answer_oracle(const EpisodeSpec& episode, const std::vector<int>& frames,
                   const OracleConfig& cfg) {
  Rng rng(stream_seed(cfg.rng_seed, kSaltOracle,
                      static_cast<std::uint64_t>(episode.episode_id)));
  return answer_oracle(episode, frames, cfg, rng);
}

PassRate estimate_pass_rate(const EpisodeSpec& episode, int k, int trials,
                            const OracleConfig& cfg, Rng& rng) {
  if (k < 1 || k > episode.n_frames)
    throw std::invalid_argument("estimate_pass_rate: k must lie in [1, n_frames]");
  if (trials < 1)
    throw std::invalid_argument("estimate_pass_rate: trials must be >= 1");
  validate_oracle_config(cfg);

  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    const std::vector<int> frames = rng.sample_indices(episode.n_frames, k);
    hits += answer_oracle(episode, frames, cfg, rng) ? 1 : 0;
  }
  PassRate pr;
  pr.c = static_cast<double>(hits) / static_cast<double>(trials);
  pr.excluded = (hits == trials);
  return pr;
}

// ---------------------------------------------------------------------------
// SIMMAT files

namespace {

[[noreturn]] void mat_fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("simmat " + path + ": " + what);
}

SimilarityMatrix parse_matrix(const std::string& path, bool cosine) {
  std::ifstream in(path);
  if (!in) mat_fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line) || line != "SIMMAT 1")
    mat_fail(path, "malformed header");
  if (!std::getline(in, line)) mat_fail(path, "missing dimension line");

  SimilarityMatrix m;
  {
    std::istringstream ls(line);
    std::string extra;
    if (!(ls >> m.n_queries >> m.n_frames) || (ls >> extra))
      mat_fail(path, "malformed dimension line");
  }
  if (m.n_queries < 1 || m.n_queries > 4)
    mat_fail(path, "n_queries out of range [1, 4]");
  if (m.n_frames < 1) mat_fail(path, "n_frames must be positive");

  m.values.reserve(static_cast<std::size_t>(m.n_queries) * m.n_frames);
  for (int q = 0; q < m.n_queries; ++q) {
    if (!std::getline(in, line))
      mat_fail(path, "dimension mismatch: missing data row");
    std::istringstream ls(line);
    for (int t = 0; t < m.n_frames; ++t) {
      double v;
      if (!(ls >> v)) mat_fail(path, "dimension mismatch: short data row");
      if (!std::isfinite(v)) mat_fail(path, "non-finite entry");
      if (cosine) v = (v + 1.0) / 2.0;
      m.values.push_back(std::clamp(v, kSimMin, kSimMax));
    }
    std::string extra;
    if (ls >> extra) mat_fail(path, "dimension mismatch: long data row");
  }
  // Anything beyond the declared rows is a dimension mismatch.
  std::string extra;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    if (ls >> extra) mat_fail(path, "dimension mismatch: extra data rows");
  }
  return m;
}

}  // namespace

void write_matrix(const std::string& path, const SimilarityMatrix& m) {
  if (m.n_queries < 1 || m.n_queries > 4 || m.n_frames < 1 ||
      m.values.size() != static_cast<std::size_t>(m.n_queries) * m.n_frames)
    throw std::invalid_argument("write_matrix: inconsistent matrix shape");
  for (double v : m.values)
    if (!std::isfinite(v))
      throw std::invalid_argument("write_matrix: non-finite entry");
  std::ofstream out(path, std::ios::binary);  // binary: keep LF on all hosts
  if (!out) throw std::runtime_error("write_matrix: cannot open " + path);
  out << "SIMMAT 1\n" << m.n_queries << ' ' << m.n_frames << '\n';
  char buf[40];
  for (int q = 0; q < m.n_queries; ++q) {
    const double* row = m.row(q);
    for (int t = 0; t < m.n_frames; ++t) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[t]);
      out << (t ? " " : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_matrix: write failed for " + path);
}

SimilarityMatrix read_matrix(const std::string& path) {
  return parse_matrix(path, /*cosine=*/false);
}

SimilarityMatrix ingest_cosine_matrix(const std::string& path) {
  return parse_matrix(path, /*cosine=*/true);
}

// ---------------------------------------------------------------------------
// Episode dataset (JSON lines, stable key order)

void write_episodes(const std::string& path,
                    const std::vector<EpisodeSpec>& episodes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_episodes: cannot open " + path);
  for (const EpisodeSpec& ep : episodes) {
    nlohmann::ordered_json j;
    j["episode_id"] = ep.episode_id;
    j["n_frames"] = ep.n_frames;
    j["hop_count"] = ep.hop_count;
    j["vocab_size"] = ep.vocab_size;
    j["correct_option"] = ep.correct_option;
    if (ep.pass_rate >= 0.0)
      j["pass_rate"] = ep.pass_rate;
    else
      j["pass_rate"] = nullptr;
    j["excluded"] = ep.excluded;
    nlohmann::ordered_json evs = nlohmann::ordered_json::array();
    for (const Event& ev : ep.events)
      evs.push_back({{"concept_id", ev.concept_id},
                     {"start", ev.start},
                     {"end", ev.end}});
    j["events"] = std::move(evs);
    j["hint"] = ep.hint;
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write_episodes: write failed for " + path);
}

std::vector<EpisodeSpec> read_episodes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_episodes: cannot open " + path);
  std::vector<EpisodeSpec> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("read_episodes: " + path + " line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    try {
      EpisodeSpec ep;
      ep.episode_id = j.at("episode_id").get<std::int64_t>();
      ep.n_frames = j.at("n_frames").get<int>();
      ep.hop_count = j.at("hop_count").get<int>();
      ep.vocab_size = j.at("vocab_size").get<int>();
      ep.correct_option = j.at("correct_option").get<int>();
      if (!j.at("pass_rate").is_null())
        ep.pass_rate = j.at("pass_rate").get<double>();
      ep.excluded = j.at("excluded").get<bool>();
      for (const auto& evj : j.at("events")) {
        Event ev;
        ev.concept_id = evj.at("concept_id").get<int>();
        ev.start = evj.at("start").get<int>();
        ev.end = evj.at("end").get<int>();
        if (ev.start < 0 || ev.end <= ev.start || ev.end > ep.n_frames)
          throw std::runtime_error("event window out of range");
        if (ev.concept_id < 0 || ev.concept_id >= ep.vocab_size)
          throw std::runtime_error("event concept out of vocabulary");
        if (!ep.events.empty() && ev.start < ep.events.back().end)
          throw std::runtime_error("events must be ordered and non-overlapping");
        ep.events.push_back(ev);
      }
      if (ep.hop_count != static_cast<int>(ep.events.size()))
        throw std::runtime_error("hop_count != number of events");
      if (ep.correct_option < 0 || ep.correct_option >= 4)
        throw std::runtime_error("correct_option out of range [0, 4)");
      ep.hint = j.at("hint").get<std::vector<double>>();
      if (static_cast<int>(ep.hint.size()) != ep.vocab_size)
        throw std::runtime_error("hint length != vocab_size");
      out.push_back(std::move(ep));
    } catch (const std::exception& e) {
      throw std::runtime_error("read_episodes: " + path + " line " +
                               std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace keyrl::env

#include "keyrl/config.hpp"

#include <array>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace keyrl::config {
namespace {

constexpr std::array<SchemaEntry, 32> kSchema{{
    {"seed", "42", "master seed for data generation and training streams"},
    {"kernels", "auto", "compute backend: auto, scalar, or avx2"},
    {"n_frames", "128", "frames per episode"},
    {"vocab_size", "16", "concept vocabulary size (>= 8)"},
    {"hop_weights", "1,1,1", "relative weights for 1-, 2-, 3-event episodes"},
    {"event_width_min", "3", "minimum event window width in frames"},
    {"event_width_max", "6", "maximum event window width in frames"},
    {"hint_noise", "0.25", "stddev of the noise added to the one-hot hint"},
    {"sim_noise", "0.02",
     "similarity corruption level: entry jitter stddev and plateau "
     "attenuation scale"},
    {"p_hit", "0.9", "oracle success probability at full event coverage"},
    {"n_episodes", "500", "episodes generated for the training pool"},
    {"episodes_per_group", "4",
     "consecutive generated episodes per difficulty group; the hardest "
     "(lowest pass rate) member of each group forms the hard subset"},
    {"pass_trials", "8",
     "uniform-sampling trials per episode when estimating the pass rate"},
    {"k_frames", "8", "frames selected per rollout"},
    {"batch_size", "32", "episodes (pretrain) or questions (joint) per step"},
    {"group_size", "8", "rollouts per question in the joint phase"},
    {"pretrain_epochs", "1", "sampler-only pretraining epochs"},
    {"joint_epochs", "2", "joint training epochs"},
    {"lr_policy", "1e-6", "Adam learning rate for the query policy"},
    {"lr_sampler", "1e-5", "Adam learning rate for the frame sampler"},
    {"clip_eps", "0.2", "importance-ratio clip width for the policy update"},
    {"policy_init_scale", "8",
     "weight tying the initial policy logits to the hint; 0 starts uniform"},
    {"tau_info", "10",
     "max/min ratio a similarity row must exceed to count as informative"},
    {"temperature", "1.0", "rollout softmax temperature"},
    {"top_p", "0.0", "nucleus truncation for rollouts; 0 disables"},
    {"sampler_group_norm", "false",
     "group-normalize the sampler advantage in the joint phase"},
    {"zero_pass_bonus", "10",
     "pretrain advantage for a correct answer when the pass rate is 0"},
    {"zero_pass_penalty", "0",
     "pretrain advantage magnitude for a wrong answer when the pass rate is "
     "0"},
    {"eval_episodes", "300", "fresh episodes generated for evaluation"},
    {"eval_seed", "1234", "seed for evaluation episodes and oracle streams"},
    {"n_q_eval", "4", "queries issued per episode at evaluation time"},
    {"methods", "uniform,topk_avg,topk_weighted,learned_frozen,learned_joint",
     "comma-separated method list for evaluation"},
}};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* want) {
  throw std::runtime_error("config: key '" + key + "' expects " + want +
                           ", got '" + value + "'");
}

}  // namespace

std::span<const SchemaEntry> schema() { return kSchema; }

Config Config::defaults() {
  Config c;
  for (const SchemaEntry& e : kSchema) c.values_[e.key] = e.default_value;
  return c;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  Config c = defaults();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: " + path + ":" +
                               std::to_string(lineno) +
                               ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const std::invalid_argument& err) {
      throw std::runtime_error("config: " + path + ":" +
                               std::to_string(lineno) + ": " + err.what());
    }
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  for (const SchemaEntry& e : kSchema) {
    if (key == e.key) {
      values_[key] = value;
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + key + "'");
}

const std::string& Config::raw(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end())
    throw std::invalid_argument("unknown config key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const std::string& v = raw(key);
  std::size_t pos = 0;
  std::int64_t out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    bad_value(key, v, "an integer");
  }
  if (pos != v.size()) bad_value(key, v, "an integer");
  return out;
}

std::uint64_t Config::get_seed(const std::string& key) const {
  const std::string& v = raw(key);
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    bad_value(key, v, "an unsigned integer");
  }
  if (pos != v.size()) bad_value(key, v, "an unsigned integer");
  return out;
}

double Config::get_double(const std::string& key) const {
  const std::string& v = raw(key);
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    bad_value(key, v, "a number");
  }
  if (pos != v.size()) bad_value(key, v, "a number");
  return out;
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  bad_value(key, v, "a boolean (true/false/1/0/on/off)");
}

std::string Config::get_string(const std::string& key) const {
  return raw(key);
}

std::vector<std::string> Config::get_string_list(
    const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& item : get_string_list(key)) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &pos);
    } catch (const std::exception&) {
      bad_value(key, raw(key), "a comma-separated number list");
    }
    if (pos != item.size())
      bad_value(key, raw(key), "a comma-separated number list");
    out.push_back(x);
  }
  return out;
}

env::EnvConfig Config::env_config() const {
  env::EnvConfig e;
  e.n_frames = static_cast<int>(get_int("n_frames"));
  e.vocab_size = static_cast<int>(get_int("vocab_size"));
  e.hop_weights = get_double_list("hop_weights");
  e.event_width_min = static_cast<int>(get_int("event_width_min"));
  e.event_width_max = static_cast<int>(get_int("event_width_max"));
  e.hint_noise = get_double("hint_noise");
  e.seed = get_seed("seed");
  return e;
}

harness::TrainConfig Config::train_config() const {
  harness::TrainConfig t;
  t.seed = get_seed("seed");
  t.k_frames = static_cast<int>(get_int("k_frames"));
  t.batch_size = static_cast<int>(get_int("batch_size"));
  t.group_size = static_cast<int>(get_int("group_size"));
  t.pretrain_epochs = static_cast<int>(get_int("pretrain_epochs"));
  t.joint_epochs = static_cast<int>(get_int("joint_epochs"));
  t.lr_policy = get_double("lr_policy");
  t.lr_sampler = get_double("lr_sampler");
  t.clip_eps = get_double("clip_eps");
  t.policy_init_scale = get_double("policy_init_scale");
  t.tau_info = get_double("tau_info");
  t.temperature = get_double("temperature");
  t.top_p = get_double("top_p");
  t.sampler_group_norm = get_bool("sampler_group_norm");
  t.sim_noise = get_double("sim_noise");
  t.p_hit = get_double("p_hit");
  t.zero_pass_bonus = get_double("zero_pass_bonus");
  t.zero_pass_penalty = get_double("zero_pass_penalty");
  t.n_q_eval = static_cast<int>(get_int("n_q_eval"));
  return t;
}

}  // namespace keyrl::config

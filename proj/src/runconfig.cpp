#include "feudal/runconfig.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

namespace feudal {

namespace {

struct Entry {
  std::string value;
  std::size_t line = 0;
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line,
                       const std::string& msg) {
  throw std::runtime_error(origin + ":" + std::to_string(line) + ": " + msg);
}

class SectionReader {
 public:
  SectionReader(std::string origin) : origin_(std::move(origin)) {}

  void put(const std::string& section, const std::string& key,
           const std::string& value, std::size_t line) {
    auto res = entries_.emplace(section + "." + key, Entry{value, line});
    if (!res.second) {
      fail(origin_, line, "duplicate key '" + key + "' in [" + section + "]");
    }
  }

  bool has(const std::string& full_key) const {
    return entries_.count(full_key) > 0;
  }

  std::string take_string(const std::string& full_key,
                          const std::string& fallback) {
    auto it = entries_.find(full_key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(full_key);
    return it->second.value;
  }

  double take_double(const std::string& full_key, double fallback) {
    auto it = entries_.find(full_key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(full_key);
    try {
      std::size_t pos = 0;
      double v = std::stod(it->second.value, &pos);
      if (pos != it->second.value.size()) throw std::invalid_argument("");
      return v;
    } catch (...) {
      fail(origin_, it->second.line,
           "expected a number for '" + full_key + "', got '" +
               it->second.value + "'");
    }
  }

  std::size_t take_size(const std::string& full_key, std::size_t fallback) {
    auto it = entries_.find(full_key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(full_key);
    try {
      std::size_t pos = 0;
      long long v = std::stoll(it->second.value, &pos);
      if (pos != it->second.value.size() || v < 0) {
        throw std::invalid_argument("");
      }
      return static_cast<std::size_t>(v);
    } catch (...) {
      fail(origin_, it->second.line,
           "expected a nonnegative integer for '" + full_key + "', got '" +
               it->second.value + "'");
    }
  }

  bool take_bool(const std::string& full_key, bool fallback) {
    auto it = entries_.find(full_key);
    if (it == entries_.end()) return fallback;
    consumed_.insert(full_key);
    const std::string& v = it->second.value;
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    fail(origin_, it->second.line,
         "expected a boolean for '" + full_key + "', got '" + v + "'");
  }

  void finish() const {
    for (const auto& [key, entry] : entries_) {
      if (!consumed_.count(key)) {
        fail(origin_, entry.line, "unknown key '" + key + "'");
      }
    }
  }

 private:
  std::string origin_;
  std::map<std::string, Entry> entries_;
  std::set<std::string> consumed_;
};

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) {
      throw std::runtime_error("seed list has an empty entry: '" + csv + "'");
    }
    std::size_t pos = 0;
    unsigned long long v = std::stoull(item, &pos);
    if (pos != item.size()) {
      throw std::runtime_error("bad seed '" + item + "'");
    }
    seeds.push_back(v);
  }
  if (seeds.empty()) {
    throw std::runtime_error("seed list is empty");
  }
  return seeds;
}

RunConfig parse_run_config(const std::string& text,
                           const std::string& origin) {
  SectionReader reader(origin);
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (auto hash = t.find('#'); hash != std::string::npos) {
      t = trim(t.substr(0, hash));
    }
    if (t.empty()) continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(origin, lineno, "unterminated section header");
      section = trim(t.substr(1, t.size() - 2));
      if (section != "agent" && section != "env" && section != "train" &&
          section != "run") {
        fail(origin, lineno, "unknown section [" + section + "]");
      }
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      fail(origin, lineno, "expected key=value, got '" + t + "'");
    }
    if (section.empty()) {
      fail(origin, lineno, "key outside of any section");
    }
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (key.empty()) fail(origin, lineno, "empty key");
    reader.put(section, key, value, lineno);
  }

  RunConfig cfg;
  cfg.agent_type = reader.take_string("agent.type", "fun");
  if (cfg.agent_type != "fun" && cfg.agent_type != "lstm" &&
      cfg.agent_type != "dlstm") {
    throw std::runtime_error(origin + ": agent.type must be fun, lstm or dlstm");
  }

  if (cfg.agent_type == "fun") {
    AgentConfig& a = cfg.agent;
    a.d = reader.take_size("agent.d", a.d);
    a.k = reader.take_size("agent.k", a.k);
    a.c = reader.take_size("agent.c", a.c);
    a.r = reader.take_size("agent.r", a.r);
    a.percept_hidden = reader.take_size("agent.percept_hidden", a.percept_hidden);
    a.worker_hidden = reader.take_size("agent.worker_hidden", a.worker_hidden);
    a.manager_hidden = reader.take_size("agent.manager_hidden", a.manager_hidden);
    a.alpha = reader.take_double("agent.alpha", a.alpha);
    a.epsilon_goal = reader.take_double("agent.epsilon_goal", a.epsilon_goal);
    a.gamma_worker = reader.take_double("agent.gamma_worker", a.gamma_worker);
    a.gamma_manager = reader.take_double("agent.gamma_manager", a.gamma_manager);
    a.mode = fun_mode_from_string(
        reader.take_string("agent.mode", to_string(a.mode)));
    a.no_dilation = reader.take_bool("agent.no_dilation", a.no_dilation);
    a.clip_rewards = reader.take_bool("agent.clip_rewards", a.clip_rewards);
    a.normalize();
  } else {
    BaselineConfig& b = cfg.baseline;
    b.recurrent_kind = cfg.agent_type;
    b.percept_hidden = reader.take_size("agent.percept_hidden", b.percept_hidden);
    b.hidden = reader.take_size("agent.hidden", b.hidden);
    b.r = reader.take_size("agent.r", b.r);
    b.gamma = reader.take_double("agent.gamma", b.gamma);
    b.bptt_len = reader.take_size("agent.bptt_len", b.bptt_len);
    b.clip_rewards = reader.take_bool("agent.clip_rewards", b.clip_rewards);
    b.normalize();
  }

  cfg.env.kind = reader.take_string("env.kind", "");
  if (cfg.env.kind == "chain") {
    cfg.env.chain.length = reader.take_size("env.length", cfg.env.chain.length);
    cfg.env.chain.step_cap =
        reader.take_size("env.step_cap", cfg.env.chain.step_cap);
  } else if (cfg.env.kind == "tmaze") {
    cfg.env.tmaze.corridor_len =
        reader.take_size("env.corridor_len", cfg.env.tmaze.corridor_len);
    cfg.env.tmaze.variable_len =
        reader.take_bool("env.variable_len", cfg.env.tmaze.variable_len);
    cfg.env.tmaze.trials_per_episode =
        reader.take_size("env.trials", cfg.env.tmaze.trials_per_episode);
    cfg.env.tmaze.trial_step_cap =
        reader.take_size("env.trial_step_cap", cfg.env.tmaze.trial_step_cap);
  } else if (cfg.env.kind == "watermaze") {
    cfg.env.watermaze.grid = reader.take_size("env.grid", cfg.env.watermaze.grid);
    cfg.env.watermaze.trials_per_episode =
        reader.take_size("env.trials", cfg.env.watermaze.trials_per_episode);
    cfg.env.watermaze.trial_step_cap = reader.take_size(
        "env.trial_step_cap", cfg.env.watermaze.trial_step_cap);
  } else {
    throw std::runtime_error(origin +
                             ": env.kind must be chain, tmaze or watermaze");
  }

  TrainConfig& t = cfg.train;
  t.bptt_len = reader.take_size("train.bptt_len", t.bptt_len);
  t.learning_rate = reader.take_double("train.learning_rate", t.learning_rate);
  t.entropy_weight =
      reader.take_double("train.entropy_weight", t.entropy_weight);
  t.rmsprop_decay = reader.take_double("train.rmsprop_decay", t.rmsprop_decay);
  t.rmsprop_epsilon =
      reader.take_double("train.rmsprop_epsilon", t.rmsprop_epsilon);
  t.total_steps = reader.take_size("train.total_steps", t.total_steps);
  t.eval_interval = reader.take_size("train.eval_interval", t.eval_interval);
  t.anneal_lr = reader.take_bool("train.anneal_lr", t.anneal_lr);
  t.manager_critic_to_trunk = reader.take_bool(
      "train.manager_critic_to_trunk", t.manager_critic_to_trunk);
  t.validate();

  cfg.out_dir = reader.take_string("run.out", cfg.out_dir);
  if (reader.has("run.seeds")) {
    cfg.seeds = parse_seed_list(reader.take_string("run.seeds", ""));
  }

  reader.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open config file: " + path);
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path);
}

}  // namespace feudal

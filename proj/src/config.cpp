#include "ofnlab/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "ofnlab/envs.hpp"
#include "ofnlab/errors.hpp"

namespace ofn {

RunMode parse_run_mode(const std::string& name) {
  if (name == "train") return RunMode::train;
  if (name == "prime") return RunMode::prime;
  throw ConfigError("unknown mode '" + name + "' (expected train or prime)");
}

std::string to_string(RunMode mode) { return mode == RunMode::train ? "train" : "prime"; }

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_real(const std::string& key, const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(key + ": expected a number, got '" + s + "'");
}

std::uint64_t parse_count(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ConfigError(key + ": expected true or false, got '" + s + "'");
}

template <class T>
Field real_field(std::string section, std::string key, T RunConfig::*part, double T::*member) {
  const std::string full = section + "." + key;
  return {section, key, [=](const RunConfig& c) { return format_real(c.*part.*member); },
          [=](RunConfig& c, const std::string& v) { c.*part.*member = parse_real(full, v); }};
}

template <class T, class N>
Field count_field(std::string section, std::string key, T RunConfig::*part, N T::*member) {
  const std::string full = section + "." + key;
  return {section, key, [=](const RunConfig& c) { return std::to_string(c.*part.*member); },
          [=](RunConfig& c, const std::string& v) {
            c.*part.*member = static_cast<N>(parse_count(full, v));
          }};
}

template <class T>
Field bool_field(std::string section, std::string key, T RunConfig::*part, bool T::*member) {
  const std::string full = section + "." + key;
  return {section, key, [=](const RunConfig& c) { return std::string(c.*part.*member ? "true" : "false"); },
          [=](RunConfig& c, const std::string& v) { c.*part.*member = parse_bool(full, v); }};
}

template <class T>
Field string_field(std::string section, std::string key, T RunConfig::*part, std::string T::*member) {
  return {section, key, [=](const RunConfig& c) { return c.*part.*member; },
          [=](RunConfig& c, const std::string& v) { c.*part.*member = v; }};
}

template <class T, class E, class Parse>
Field enum_field(std::string section, std::string key, T RunConfig::*part, E T::*member, Parse parse) {
  return {section, key, [=](const RunConfig& c) { return to_string(c.*part.*member); },
          [=](RunConfig& c, const std::string& v) { c.*part.*member = parse(v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    using E = ExperimentConfig;
    using P = PrimeConfig;
    using A = AgentConfig;
    const auto ex = &RunConfig::experiment;
    const auto pr = &RunConfig::prime;
    const auto ag = &RunConfig::agent;
    std::vector<Field> f;
    f.push_back(string_field("experiment", "name", ex, &E::name));
    f.push_back(enum_field("experiment", "mode", ex, &E::mode, parse_run_mode));
    f.push_back(string_field("experiment", "env", ex, &E::env));
    f.push_back(count_field("experiment", "episode_length", ex, &E::episode_length));
    f.push_back(count_field("experiment", "total_env_steps", ex, &E::total_env_steps));
    f.push_back(count_field("experiment", "random_steps", ex, &E::random_steps));
    f.push_back(count_field("experiment", "eval_interval", ex, &E::eval_interval));
    f.push_back(count_field("experiment", "eval_episodes", ex, &E::eval_episodes));
    f.push_back(count_field("experiment", "snapshot_interval", ex, &E::snapshot_interval));
    f.push_back(count_field("experiment", "seed", ex, &E::seed));
    f.push_back(string_field("experiment", "out_dir", ex, &E::out_dir));
    f.push_back(bool_field("experiment", "log_wallclock", ex, &E::log_wallclock));
    f.push_back(real_field("experiment", "divergence_kappa", ex, &E::divergence_kappa));
    f.push_back(real_field("experiment", "srank_delta", ex, &E::srank_delta));

    f.push_back(count_field("prime", "n_random_samples", pr, &P::n_random_samples));
    f.push_back(count_field("prime", "n_prime_updates", pr, &P::n_prime_updates));
    f.push_back(Field{"prime", "optimizer",
                      [](const RunConfig& c) {
                        return c.prime.optimizer ? to_string(*c.prime.optimizer) : std::string();
                      },
                      [](RunConfig& c, const std::string& v) {
                        if (v.empty()) {
                          c.prime.optimizer.reset();
                        } else {
                          c.prime.optimizer = parse_optimizer_kind(v);
                        }
                      }});
    f.push_back(bool_field("prime", "behavior_cloning", pr, &P::behavior_cloning));

    f.push_back(real_field("agent", "gamma", ag, &A::gamma));
    f.push_back(real_field("agent", "tau", ag, &A::tau));
    f.push_back(count_field("agent", "batch_size", ag, &A::batch_size));
    f.push_back(count_field("agent", "n_critics", ag, &A::n_critics));
    f.push_back(real_field("agent", "initial_temperature", ag, &A::initial_temperature));
    f.push_back(real_field("agent", "target_entropy_scale", ag, &A::target_entropy_scale));
    f.push_back(real_field("agent", "log_std_min", ag, &A::log_std_min));
    f.push_back(real_field("agent", "log_std_max", ag, &A::log_std_max));
    f.push_back(count_field("agent", "utd", ag, &A::utd));
    f.push_back(real_field("agent", "actor_utd_scale", ag, &A::actor_utd_scale));
    f.push_back(real_field("agent", "bc_coefficient", ag, &A::bc_coefficient));
    f.push_back(count_field("agent", "buffer_capacity", ag, &A::buffer_capacity));

    f.push_back(count_field("network", "hidden", ag, &A::hidden));
    f.push_back(count_field("network", "layers", ag, &A::layers));
    f.push_back(enum_field("network", "activation", ag, &A::activation, parse_activation));
    f.push_back(bool_field("network", "ofn", ag, &A::ofn));
    f.push_back(real_field("network", "dropout_rate", ag, &A::dropout_rate));

    f.push_back(enum_field("optim", "optimizer", ag, &A::optimizer, parse_optimizer_kind));
    f.push_back(real_field("optim", "actor_lr", ag, &A::actor_lr));
    f.push_back(real_field("optim", "critic_lr", ag, &A::critic_lr));
    f.push_back(real_field("optim", "temp_lr", ag, &A::temp_lr));
    f.push_back(real_field("optim", "beta1", ag, &A::beta1));
    f.push_back(real_field("optim", "beta2", ag, &A::beta2));
    f.push_back(real_field("optim", "eps", ag, &A::adam_eps));
    f.push_back(real_field("optim", "momentum", ag, &A::momentum));
    f.push_back(real_field("optim", "weight_decay", ag, &A::weight_decay));
    f.push_back(bool_field("optim", "decoupled_weight_decay", ag, &A::decoupled_weight_decay));

    f.push_back(enum_field("reset", "scope", ag, &A::reset, parse_reset_scope));
    f.push_back(count_field("reset", "interval_steps", ag, &A::reset_interval_steps));
    return f;
  }();
  return table;
}

const Field& find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields()) {
    if (f.section == section && f.key == key) return f;
  }
  throw ConfigError("unknown config key '" + section + "." + key + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Drops a trailing comment unless the '#' sits inside double quotes.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

bool needs_quotes(const Field& f) {
  return f.key == "name" || f.key == "out_dir" || f.key == "env" ||
         (f.section == "prime" && f.key == "optimizer");
}

}  // namespace

void RunConfig::validate() const {
  agent.validate();
  const auto& e = experiment;
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("experiment." + field + ": " + why);
  };
  bool known_env = false;
  for (const auto& n : env_names()) known_env = known_env || n == e.env;
  if (!known_env) fail("env", "unknown environment '" + e.env + "'");
  if (e.episode_length == 0) fail("episode_length", "must be positive");
  if (e.eval_interval == 0) fail("eval_interval", "must be positive");
  if (e.snapshot_interval == 0) fail("snapshot_interval", "must be positive");
  if (e.out_dir.empty()) fail("out_dir", "must not be empty");
  if (!(e.divergence_kappa > 0.0)) fail("divergence_kappa", "must be positive");
  if (!(e.srank_delta > 0.0 && e.srank_delta < 1.0)) fail("srank_delta", "must be in (0, 1)");
  if (e.mode == RunMode::prime) {
    if (prime.n_random_samples == 0) {
      throw ConfigError("prime.n_random_samples: priming needs at least one sample");
    }
    if (prime.n_random_samples > e.total_env_steps) {
      throw ConfigError("prime.n_random_samples: exceeds experiment.total_env_steps");
    }
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    if (section.empty()) {
      throw ConfigError("line " + std::to_string(lineno) + ": key outside of any [section]");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    find_field(section, key).set(config, value);
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  out << "# ofnlab run configuration\n";
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    const std::string v = f.get(config);
    out << f.key << " = " << (needs_quotes(f) ? "\"" + v + "\"" : v) << '\n';
  }
  return out.str();
}

void save_config(const RunConfig& config, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config file '" + path + "'");
  out << serialize_config(config);
}

void set_config_value(RunConfig& config, const std::string& dotted_key, const std::string& value) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("config key must be section.key: '" + dotted_key + "'");
  find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1)).set(config, value);
}

std::string get_config_value(const RunConfig& config, const std::string& dotted_key) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("config key must be section.key: '" + dotted_key + "'");
  return find_field(dotted_key.substr(0, dot), dotted_key.substr(dot + 1)).get(config);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.section + "." + f.key);
  return keys;
}

}  // namespace ofn

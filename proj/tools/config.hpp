#pragma once

// Experiment configuration: `key = value` lines grouped under [model], [grid]
// and [run]; `#` starts a comment. The command may be given at top level.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlsip/core.hpp"
#include "nlsip/error.hpp"
#include "nlsip/profile_io.hpp"

namespace nlsip::cli {

class ConfigError : public ParameterError {
 public:
  ConfigError(std::string key, const std::string& what) : ParameterError(what), key_(std::move(key)) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class Command { eig, groundstate, minimize, classify, evolve, critical_sweep, uniqueness_check, stability };

inline const std::map<std::string, Command>& command_names() {
  static const std::map<std::string, Command> m{
      {"eig", Command::eig},
      {"groundstate", Command::groundstate},
      {"minimize", Command::minimize},
      {"classify", Command::classify},
      {"evolve", Command::evolve},
      {"critical-sweep", Command::critical_sweep},
      {"uniqueness-check", Command::uniqueness_check},
      {"stability", Command::stability},
  };
  return m;
}

inline std::string to_string(Command c) {
  for (const auto& [name, value] : command_names())
    if (value == c) return name;
  return "?";
}

inline std::optional<Command> parse_command(const std::string& s) {
  const auto it = command_names().find(s);
  if (it == command_names().end()) return std::nullopt;
  return it->second;
}

struct ExperimentConfig {
  Command command = Command::eig;
  ModelParams model;
  double r_max = 40.0;
  int n = 16384;

  std::optional<double> omega;
  std::string solver = "both";  // shooting | action | both
  std::optional<double> a;
  std::vector<double> a_list;   // critical-sweep, as fractions of a*
  std::vector<double> tau;      // critical-sweep trial energies
  double dt = 1e-3;
  double T = 10.0;
  double output_every = 0.0;    // 0: every step
  std::string datum = "groundstate";  // groundstate | dilated | gaussian
  double lambda = 1.0;
  double amplitude = 1.0;
  double width = 1.0;
  double delta = 1e-2;
  int trials = 5;
  double tolerance = 0.1;
  std::optional<double> c;      // uniqueness coefficient; defaults to model.coupling
  bool omega0 = false;          // classify: also locate ω₀
  double omega_lo = 0.0, omega_hi = 0.0;
  bool plots = true;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out_dir;

  /// every setting after defaulting, as written to the manifest
  std::vector<std::pair<std::string, std::string>> echo;
};

namespace detail {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

class Table {
 public:
  void add(const std::string& key, std::string value, int line) {
    const auto it = entries_.find(key);
    if (it != entries_.end())
      throw ConfigError(key, "duplicate key '" + key + "' on lines " + std::to_string(it->second.line) + " and " +
                                 std::to_string(line));
    entries_[key] = {std::move(value), line, false};
  }

  [[nodiscard]] bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::optional<std::string> raw(const std::string& key) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    it->second.used = true;
    return it->second.value;
  }

  std::optional<double> real(const std::string& key) {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    return to_real(key, *s);
  }

  std::optional<long long> integer(const std::string& key) {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    long long v = 0;
    const auto [p, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
    if (ec != std::errc() || p != s->data() + s->size())
      throw ConfigError(key, "key '" + key + "': expected an integer, got '" + *s + "'");
    return v;
  }

  std::optional<bool> boolean(const std::string& key) {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    if (*s == "true" || *s == "yes" || *s == "1") return true;
    if (*s == "false" || *s == "no" || *s == "0") return false;
    throw ConfigError(key, "key '" + key + "': expected true or false, got '" + *s + "'");
  }

  std::optional<std::vector<double>> list(const std::string& key) {
    const auto s = raw(key);
    if (!s) return std::nullopt;
    std::vector<double> out;
    std::stringstream ss(*s);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(to_real(key, trim(item)));
    if (out.empty()) throw ConfigError(key, "key '" + key + "': empty list");
    return out;
  }

  void reject_unused(const std::string& command) const {
    for (const auto& [key, e] : entries_)
      if (!e.used)
        throw ConfigError(key, "unknown key '" + key + "' on line " + std::to_string(e.line) + " for command " + command);
  }

 private:
  static double to_real(const std::string& key, const std::string& s) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(s, &pos);
      if (pos != s.size()) throw std::invalid_argument(s);
      if (!std::isfinite(v)) throw std::invalid_argument(s);
      return v;
    } catch (const std::logic_error&) {
      throw ConfigError(key, "key '" + key + "': expected a finite number, got '" + s + "'");
    }
  }

  std::map<std::string, Entry> entries_;
};

inline Table tokenize(const std::string& text) {
  static const std::vector<std::string> sections{"model", "grid", "run"};
  Table t;
  std::istringstream is(text);
  std::string section;
  int lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("", "line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw ConfigError(section, "line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("", "line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("", "line " + std::to_string(lineno) + ": empty key");
    if (value.empty()) throw ConfigError(key, "key '" + key + "' on line " + std::to_string(lineno) + " has no value");
    t.add(section.empty() ? key : section + "." + key, value, lineno);
  }
  return t;
}

inline void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, "key '" + key + "': " + what);
}

}  // namespace detail

/// Parses and validates. `command` (from the command line) wins over a `command` key.
inline ExperimentConfig parse_config(const std::string& text, std::optional<Command> command = std::nullopt) {
  using detail::require;
  auto t = detail::tokenize(text);
  ExperimentConfig c;

  if (const auto s = t.raw("command")) {
    const auto parsed = parse_command(*s);
    require(parsed.has_value(), "command", "unknown command '" + *s + "'");
    if (!command) command = parsed;
  }
  if (!command) throw ConfigError("command", "missing required key 'command'");
  c.command = *command;
  const Command cmd = c.command;

  // model
  const auto d = t.integer("model.d");
  if (!d) throw ConfigError("model.d", "missing required key 'model.d'");
  require(*d >= 1 && *d <= 16, "model.d", "must lie in [1, 16], got " + std::to_string(*d));
  c.model.d = static_cast<int>(*d);
  const auto sigma = t.real("model.sigma");
  if (!sigma) throw ConfigError("model.sigma", "missing required key 'model.sigma'");
  c.model.sigma = *sigma;
  require(c.model.sigma > 0 && c.model.sigma < std::min(2.0, double(c.model.d)), "model.sigma",
          "must satisfy 0 < sigma < min(2, d), got " + fmt17(c.model.sigma));
  const auto alpha = t.real("model.alpha");
  const bool alpha_optional = cmd == Command::eig || cmd == Command::critical_sweep;
  if (!alpha && !alpha_optional) throw ConfigError("model.alpha", "missing required key 'model.alpha'");
  c.model.alpha = alpha.value_or(4.0 / c.model.d);
  require(c.model.alpha > 0, "model.alpha", "must be positive");
  if (c.model.d >= 3)
    require(c.model.alpha < 4.0 / (c.model.d - 2), "model.alpha", "must be below 4/(d-2), got " + fmt17(c.model.alpha));
  c.model.coupling = t.real("model.coupling").value_or(1.0);
  require(c.model.coupling >= 0, "model.coupling", "must be >= 0");

  // grid
  if (cmd == Command::critical_sweep) c.n = 32768;
  c.r_max = t.real("grid.r_max").value_or(c.r_max);
  require(c.r_max > 0, "grid.r_max", "must be positive");
  const auto n = t.integer("grid.n").value_or(c.n);
  require(n >= 16 && n <= (1 << 24), "grid.n", "must lie in [16, 2^24], got " + std::to_string(n));
  c.n = static_cast<int>(n);

  // run
  const bool uses_omega = cmd == Command::groundstate || cmd == Command::classify || cmd == Command::evolve ||
                          cmd == Command::uniqueness_check;
  const bool uses_a = cmd == Command::minimize || cmd == Command::stability;
  if (uses_omega) c.omega = t.real("run.omega");
  if (uses_a) c.a = t.real("run.a");
  if (c.a) require(*c.a > 0, "run.a", "must be positive");
  c.seed = static_cast<std::uint64_t>(t.integer("run.seed").value_or(1));
  c.threads = static_cast<int>(t.integer("run.threads").value_or(1));
  require(c.threads >= 1, "run.threads", "must be >= 1");
  c.plots = t.boolean("run.plots").value_or(true);
  c.out_dir = t.raw("run.out_dir").value_or("");

  auto need_omega = [&] {
    if (!c.omega) throw ConfigError("run.omega", "missing required key 'run.omega' for " + to_string(cmd));
  };
  auto need_a = [&] {
    if (!c.a) throw ConfigError("run.a", "missing required key 'run.a' for " + to_string(cmd));
  };

  switch (cmd) {
    case Command::eig:
      break;
    case Command::groundstate:
      need_omega();
      c.solver = t.raw("run.solver").value_or("both");
      require(c.solver == "shooting" || c.solver == "action" || c.solver == "both", "run.solver",
              "must be shooting, action or both");
      break;
    case Command::minimize:
      need_a();
      require(!c.model.is_mass_supercritical(), "model.alpha", "minimize needs alpha <= 4/d");
      break;
    case Command::classify:
      need_omega();
      c.omega0 = t.boolean("run.omega0").value_or(false);
      c.omega_lo = t.real("run.omega_lo").value_or(0.0);
      c.omega_hi = t.real("run.omega_hi").value_or(0.0);
      if (c.omega0) {
        require(c.omega_lo > 0, "run.omega_lo", "must be positive when omega0 = true");
        require(c.omega_hi > c.omega_lo, "run.omega_hi", "must exceed run.omega_lo");
      }
      break;
    case Command::evolve:
      c.dt = t.real("run.dt").value_or(c.dt);
      require(c.dt > 0, "run.dt", "must be positive");
      c.T = t.real("run.T").value_or(c.T);
      require(c.T > 0, "run.T", "must be positive");
      c.output_every = t.real("run.output_every").value_or(c.dt);
      require(c.output_every >= 0, "run.output_every", "must be >= 0");
      c.datum = t.raw("run.datum").value_or("groundstate");
      require(c.datum == "groundstate" || c.datum == "dilated" || c.datum == "gaussian", "run.datum",
              "must be groundstate, dilated or gaussian");
      if (c.datum != "gaussian") need_omega();
      c.lambda = t.real("run.lambda").value_or(1.0);
      require(c.lambda > 0, "run.lambda", "must be positive");
      c.amplitude = t.real("run.amplitude").value_or(1.0);
      c.width = t.real("run.width").value_or(1.0);
      require(c.width > 0, "run.width", "must be positive");
      break;
    case Command::critical_sweep:
      require(c.model.is_mass_critical(), "model.alpha", "critical-sweep needs alpha = 4/d");
      c.a_list = t.list("run.a_list").value_or(std::vector<double>{0.8, 0.9, 0.95, 0.975, 0.99, 0.995, 0.9975, 0.999});
      for (double f : c.a_list) require(f > 0 && f < 1, "run.a_list", "fractions of a* must lie in (0, 1)");
      require(c.a_list.size() >= 2, "run.a_list", "needs at least two entries");
      c.tau = t.list("run.tau").value_or(std::vector<double>{2, 4, 8});
      for (double x : c.tau) require(x >= 1, "run.tau", "entries must be >= 1");
      break;
    case Command::uniqueness_check:
      need_omega();
      c.c = t.real("run.c");
      require(c.model.d >= 3, "model.d", "uniqueness-check needs d >= 3");
      require(c.model.sigma < 1, "model.sigma", "uniqueness-check needs sigma < 1");
      break;
    case Command::stability:
      need_a();
      require(!c.model.is_mass_supercritical(), "model.alpha", "stability needs alpha <= 4/d");
      c.dt = t.real("run.dt").value_or(0.01);
      require(c.dt > 0, "run.dt", "must be positive");
      c.T = t.real("run.T").value_or(20.0);
      require(c.T > 0, "run.T", "must be positive");
      c.output_every = t.real("run.output_every").value_or(0.1);
      require(c.output_every > 0, "run.output_every", "must be positive");
      c.delta = t.real("run.delta").value_or(1e-2);
      require(c.delta >= 0, "run.delta", "must be >= 0");
      c.trials = static_cast<int>(t.integer("run.trials").value_or(5));
      require(c.trials >= 1, "run.trials", "must be >= 1");
      c.tolerance = t.real("run.tolerance").value_or(0.1);
      require(c.tolerance > 0, "run.tolerance", "must be positive");
      break;
  }
  t.reject_unused(to_string(cmd));

  auto& e = c.echo;
  auto list17 = [](const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt17(v[i]);
    return s;
  };
  e = {{"command", to_string(cmd)},
       {"model.d", std::to_string(c.model.d)},
       {"model.sigma", fmt17(c.model.sigma)},
       {"model.alpha", fmt17(c.model.alpha)},
       {"model.coupling", fmt17(c.model.coupling)},
       {"grid.r_max", fmt17(c.r_max)},
       {"grid.n", std::to_string(c.n)},
       {"run.seed", std::to_string(c.seed)},
       {"run.threads", std::to_string(c.threads)},
       {"run.plots", c.plots ? "true" : "false"}};
  if (c.omega) e.emplace_back("run.omega", fmt17(*c.omega));
  if (c.a) e.emplace_back("run.a", fmt17(*c.a));
  switch (cmd) {
    case Command::groundstate:
      e.emplace_back("run.solver", c.solver);
      break;
    case Command::classify:
      e.emplace_back("run.omega0", c.omega0 ? "true" : "false");
      if (c.omega0) {
        e.emplace_back("run.omega_lo", fmt17(c.omega_lo));
        e.emplace_back("run.omega_hi", fmt17(c.omega_hi));
      }
      break;
    case Command::evolve:
      e.emplace_back("run.dt", fmt17(c.dt));
      e.emplace_back("run.T", fmt17(c.T));
      e.emplace_back("run.output_every", fmt17(c.output_every));
      e.emplace_back("run.datum", c.datum);
      e.emplace_back("run.lambda", fmt17(c.lambda));
      e.emplace_back("run.amplitude", fmt17(c.amplitude));
      e.emplace_back("run.width", fmt17(c.width));
      break;
    case Command::critical_sweep:
      e.emplace_back("run.a_list", list17(c.a_list));
      e.emplace_back("run.tau", list17(c.tau));
      break;
    case Command::uniqueness_check:
      e.emplace_back("run.c", fmt17(c.c.value_or(c.model.coupling)));
      break;
    case Command::stability:
      e.emplace_back("run.dt", fmt17(c.dt));
      e.emplace_back("run.T", fmt17(c.T));
      e.emplace_back("run.output_every", fmt17(c.output_every));
      e.emplace_back("run.delta", fmt17(c.delta));
      e.emplace_back("run.trials", std::to_string(c.trials));
      e.emplace_back("run.tolerance", fmt17(c.tolerance));
      break;
    default:
      break;
  }
  return c;
}

}  // namespace nlsip::cli

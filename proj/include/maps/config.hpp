#pragma once

#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "maps/core.hpp"
#include "maps/motor_model.hpp"

namespace maps {

/// Flat `key = value` configuration. Blank lines, `#` comments and
/// `[section]` headers are skipped; surrounding quotes on values are removed.
/// Every lookup marks the key as consumed so leftovers can be reported.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::istream& in) {
    KeyValueConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty() || line.front() == '[') continue;
      const auto eq = line.find_first_of("=:");
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
      }
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') &&
          value.back() == value.front()) {
        value = value.substr(1, value.size() - 2);
      }
      if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
      if (!cfg.values_.emplace(key, value).second) {
        throw ConfigError("duplicate key '" + key + "'");
      }
    }
    return cfg;
  }

  static KeyValueConfig parse_string(const std::string& text) {
    std::istringstream in(text);
    return parse(in);
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    return parse(f);
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    return v ? to_double(key, *v) : fallback;
  }

  long long get_int(const std::string& key, long long fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    long long out = 0;
    const auto* end = v->data() + v->size();
    const auto [ptr, ec] = std::from_chars(v->data(), end, out);
    if (ec != std::errc() || ptr != end) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + *v + "'");
    }
    return out;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") return true;
    if (*v == "false" || *v == "0" || *v == "no" || *v == "off") return false;
    throw ConfigError("key '" + key + "': expected a boolean, got '" + *v + "'");
  }

  /// Comma-separated list of numbers.
  std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::vector<double> out;
    std::stringstream ss(*v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    return out;
  }

  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.count(k)) out.push_back(k);
    }
    return out;
  }

  /// Throws if any key was never looked up.
  void reject_unknown() const {
    const auto left = unused_keys();
    if (left.empty()) return;
    std::string msg = "unknown config key(s):";
    for (const auto& k : left) msg += " " + k;
    throw ConfigError(msg);
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& text) {
    try {
      std::size_t used = 0;
      const double d = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return d;
    } catch (const std::exception&) {
      throw ConfigError("key '" + key + "': expected a number, got '" + text + "'");
    }
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

/// Plant description shared by every subcommand.
struct MotorConfig {
  MotorParams params;
  double b_min = 2.46e-6;
  double b_max = 1.63e-4;
  double tau_s = 0.003;
  double tau_c = 0.002;
  double sample_time = 0.002;
  Discretization discretization = Discretization::kForwardEuler;

  std::vector<double> rho_values() const { return {b_min, b_max}; }

  FrictionModel dry_friction(double b) const { return {tau_s, tau_c, b}; }

  void validate() const {
    params.validate();
    if (!(b_min >= 0.0) || !(b_max > b_min)) {
      throw ConfigError("friction range requires 0 <= b_min < b_max");
    }
    if (!(sample_time > 0.0)) throw ConfigError("sample_time must be positive");
    FrictionModel{tau_s, tau_c, b_min}.validate();
  }
};

inline Discretization parse_discretization(const std::string& s) {
  if (s == "euler") return Discretization::kForwardEuler;
  if (s == "zoh") return Discretization::kExactZoh;
  throw ConfigError("discretization must be 'euler' or 'zoh', got '" + s + "'");
}

/// Reads the motor keys; anything missing keeps its default.
inline MotorConfig read_motor_config(const KeyValueConfig& kv, MotorConfig cfg = {}) {
  auto& p = cfg.params;
  p.kt = kv.get_double("kt", p.kt);
  p.ke = kv.get_double("ke", p.ke);
  p.jr = kv.get_double("jr", p.jr);
  p.jh = kv.get_double("jh", p.jh);
  p.jd = kv.get_double("jd", p.jd);
  p.lm = kv.get_double("lm", p.lm);
  p.rm = kv.get_double("rm", p.rm);
  p.b_m = kv.get_double("b_m", p.b_m);
  cfg.b_min = kv.get_double("b_min", cfg.b_min);
  cfg.b_max = kv.get_double("b_max", cfg.b_max);
  cfg.tau_s = kv.get_double("tau_s", cfg.tau_s);
  cfg.tau_c = kv.get_double("tau_c", cfg.tau_c);
  cfg.sample_time = kv.get_double("sample_time", cfg.sample_time);
  if (const auto d = kv.get("discretization")) cfg.discretization = parse_discretization(*d);
  cfg.validate();
  return cfg;
}

}  // namespace maps

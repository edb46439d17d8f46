#pragma once

// Plain-text key-value configuration:
//
//   # comment
//   horizon = 60
//   rho = 0.7, 0.3
//
// Later keys override earlier ones.

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "rebal/core.hpp"

namespace rebal {

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is) {
    KeyValueConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      auto eq = line.find('=');
      require(eq != std::string::npos, "config line " + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      require(!key.empty(), "config line " + std::to_string(lineno) + ": empty key");
      cfg.values_[key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream is(path);
    require(static_cast<bool>(is), "cannot open config file " + path);
    return parse(is);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  const std::map<std::string, std::string>& entries() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return to_double(key, it->second);
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      long long v = std::stoll(it->second, &used);
      require(used == it->second.size(), "");
      return v;
    } catch (...) {
      throw domain_error("config key '" + key + "': not an integer: " + it->second);
    }
  }

  Vec get_list(const std::string& key, const Vec& fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_list(key, it->second);
  }

  static Vec parse_list(const std::string& key, const std::string& text) {
    Vec out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_double(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      double d = std::stod(v, &used);
      require(used == v.size(), "");
      return d;
    } catch (...) {
      throw domain_error("config key '" + key + "': not a number: " + v);
    }
  }

  std::map<std::string, std::string> values_;
};

}  // namespace rebal

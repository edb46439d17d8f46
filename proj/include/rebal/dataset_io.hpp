#pragma once

// Line-delimited JSON dataset files.
//
//   {"k": 3, "state_dim": 2, "action_dim": 2}
//   {"state": [0.1, -0.4], "action": [1.0, 0.0], "group": 0}
//   ...
//
// The first line is the header; every following non-empty line is one pair.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "rebal/core.hpp"

namespace rebal {

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void write_dataset(std::ostream& os, const LabeledDataset& ds) {
  nlohmann::ordered_json header;
  header["k"] = ds.group_count();
  header["state_dim"] = ds.state_dim();
  header["action_dim"] = ds.action_dim();
  os << header.dump() << '\n';
  for (const auto& p : ds.pairs()) {
    nlohmann::ordered_json rec;
    rec["state"] = p.state;
    rec["action"] = p.action;
    rec["group"] = p.group;
    os << rec.dump() << '\n';
  }
}

inline LabeledDataset read_dataset(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw io_error("dataset: missing header line");
  LabeledDataset ds;
  try {
    auto h = nlohmann::json::parse(line);
    ds = LabeledDataset(h.at("k").get<int>(), h.at("state_dim").get<std::size_t>(),
                        h.at("action_dim").get<std::size_t>());
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("dataset: bad header: ") + e.what());
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto r = nlohmann::json::parse(line);
      if (!r.contains("group") || r["group"].is_null())
        throw io_error("dataset line " + std::to_string(lineno) + ": unlabeled pair");
      StateActionPair p;
      p.state = r.at("state").get<Vec>();
      p.action = r.at("action").get<Vec>();
      p.group = r.at("group").get<int>();
      ds.add(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw io_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const domain_error& e) {
      throw io_error("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return ds;
}

inline void save_dataset(const std::string& path, const LabeledDataset& ds) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw io_error("cannot open " + path + " for writing");
  write_dataset(os, ds);
  if (!os) throw io_error("write failed: " + path);
}

inline LabeledDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw io_error("cannot open " + path);
  return read_dataset(is);
}

}  // namespace rebal

#include "rad/config.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>

#include "rad/errors.hpp"

namespace rad {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    if (value.empty() || value[0] == '-') throw std::invalid_argument(value);
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "': expected unsigned integer, got '" +
                     value + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  return static_cast<std::uint64_t>(parse_size(key, value));
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ParseError("config: key '" + key + "': expected number, got '" + value +
                     "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ParseError("config: key '" + key + "': expected true or false, got '" +
                   value + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string&,
                                  const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"model.embed_dim",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.embed_dim = parse_size(k, v);
       }},
      {"model.n_layers",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.n_layers = parse_size(k, v);
       }},
      {"model.n_heads",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.n_heads = parse_size(k, v);
       }},
      {"model.ff_dim",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.ff_dim = parse_size(k, v);
       }},
      {"model.max_positions",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.max_positions = parse_size(k, v);
       }},
      {"model.dropout_rate",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.model.dropout_rate = parse_double(k, v);
       }},
      {"ra.n_heads",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.ra.n_heads = parse_size(k, v);
       }},
      {"ra.hidden_dim",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.ra.hidden_dim = parse_size(k, v);
       }},
      {"train.learning_rate",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.learning_rate = parse_double(k, v);
       }},
      {"train.batch_size",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.batch_size = parse_size(k, v);
       }},
      {"train.epochs",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.epochs = parse_size(k, v);
       }},
      {"train.gamma",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.gamma = parse_double(k, v);
       }},
      {"train.mu",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.mu = parse_double(k, v);
       }},
      {"train.top_k",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.top_k = parse_size(k, v);
       }},
      {"train.lambda_floor",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.lambda_floor = parse_double(k, v);
       }},
      {"train.use_ss",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.use_ss = parse_bool(k, v);
       }},
      {"train.use_ra",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.use_ra = parse_bool(k, v);
       }},
      {"train.seed",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.seed = parse_u64(k, v);
       }},
      {"train.checkpoint_every",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.train.checkpoint_every = parse_size(k, v);
       }},
      {"generation.max_new_tokens",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.generation.max_new_tokens = parse_size(k, v);
       }},
      {"data.vocab_limit",
       [](ExperimentConfig& c, const std::string& k, const std::string& v) {
         c.vocab_limit = parse_size(k, v);
       }},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [key, setter] : setters()) k.push_back(key);
    return k;
  }();
  return keys;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key,
                   const std::string& value) {
  const auto& table = setters();
  auto it = table.find(key);
  if (it == table.end()) throw ParseError("config: unknown key '" + key + "'");
  it->second(cfg, key, value);
}

void apply_overrides(ExperimentConfig& cfg,
                     const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const std::size_t eq = a.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("config: override '" + a + "' is not key=value");
    apply_setting(cfg, trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
}

void load_config_file(ExperimentConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string content = trim(line);
    if (content.empty()) continue;
    const std::size_t eq = content.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ParseError("config: " + path + ": line " + std::to_string(line_no) +
                       ": expected key = value");
    try {
      apply_setting(cfg, trim(content.substr(0, eq)),
                    trim(content.substr(eq + 1)));
    } catch (const ParseError& e) {
      throw ParseError("config: " + path + ": line " + std::to_string(line_no) +
                       ": " + e.what());
    }
  }
}

}  // namespace rad

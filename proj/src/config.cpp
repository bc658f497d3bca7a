#include "that/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "that/errors.hpp"

namespace that {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// One schema entry: parses a raw value into its RunConfig field, returning
// an error message on failure instead of throwing so callers can batch.
using Setter = std::function<std::string(RunConfig&, const std::string&)>;

std::string parse_int(const std::string& v, int& out) {
  try {
    std::size_t pos = 0;
    const int n = std::stoi(v, &pos);
    if (pos != v.size()) return "not an integer";
    out = n;
    return "";
  } catch (const std::exception&) {
    return "not an integer";
  }
}

std::string parse_real(const std::string& v, double& out) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) return "not a number";
    out = x;
    return "";
  } catch (const std::exception&) {
    return "not a number";
  }
}

std::string parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1") {
    out = true;
    return "";
  }
  if (v == "false" || v == "0") {
    out = false;
    return "";
  }
  return "expected true/false/1/0";
}

template <class Obj>
Setter int_key(Obj RunConfig::*obj, int Obj::*field) {
  return [obj, field](RunConfig& c, const std::string& v) { return parse_int(v, c.*obj.*field); };
}

template <class Obj>
Setter real_key(Obj RunConfig::*obj, double Obj::*field) {
  return [obj, field](RunConfig& c, const std::string& v) { return parse_real(v, c.*obj.*field); };
}

template <class Obj>
Setter flag_key(Obj RunConfig::*obj, bool Obj::*field) {
  return [obj, field](RunConfig& c, const std::string& v) { return parse_bool(v, c.*obj.*field); };
}

Setter string_key(std::string RunConfig::*field) {
  return [field](RunConfig& c, const std::string& v) {
    c.*field = v;
    return std::string();
  };
}

const std::map<std::string, Setter>& schema() {
  static const std::map<std::string, Setter> s = {
      {"bands", int_key(&RunConfig::model, &ModelConfig::bands)},
      {"channels", int_key(&RunConfig::model, &ModelConfig::channels)},
      {"blocks", int_key(&RunConfig::model, &ModelConfig::blocks)},
      {"heads", int_key(&RunConfig::model, &ModelConfig::heads)},
      {"window", int_key(&RunConfig::model, &ModelConfig::window)},
      {"scale", int_key(&RunConfig::model, &ModelConfig::scale)},
      {"use_pci", flag_key(&RunConfig::model, &ModelConfig::use_pci)},
      {"use_ptsa", flag_key(&RunConfig::model, &ModelConfig::use_ptsa)},
      {"use_mvfn", flag_key(&RunConfig::model, &ModelConfig::use_mvfn)},
      {"upsample_stage",
       [](RunConfig& c, const std::string& v) -> std::string {
         if (v == "input") {
           c.model.upsample_stage = UpsampleStage::input;
           return "";
         }
         if (v == "output") {
           c.model.upsample_stage = UpsampleStage::output;
           return "";
         }
         return "expected input/output";
       }},
      {"lr0", real_key(&RunConfig::train, &TrainConfig::lr0)},
      {"decay_every", int_key(&RunConfig::train, &TrainConfig::decay_every)},
      {"decay_factor", real_key(&RunConfig::train, &TrainConfig::decay_factor)},
      {"epochs", int_key(&RunConfig::train, &TrainConfig::epochs)},
      {"batch", int_key(&RunConfig::train, &TrainConfig::batch)},
      {"beta1", real_key(&RunConfig::train, &TrainConfig::beta1)},
      {"beta2", real_key(&RunConfig::train, &TrainConfig::beta2)},
      {"eps", real_key(&RunConfig::train, &TrainConfig::eps)},
      {"weight_decay", real_key(&RunConfig::train, &TrainConfig::weight_decay)},
      {"eval_every", int_key(&RunConfig::train, &TrainConfig::eval_every)},
      {"seed",
       [](RunConfig& c, const std::string& v) -> std::string {
         try {
           std::size_t pos = 0;
           const unsigned long long n = std::stoull(v, &pos);
           if (pos != v.size()) return "not an integer";
           c.train.seed = n;
           return "";
         } catch (const std::exception&) {
           return "not an integer";
         }
       }},
      {"blur_kernel", int_key(&RunConfig::wald, &WaldConfig::blur_kernel)},
      {"blur_sigma", real_key(&RunConfig::wald, &WaldConfig::blur_sigma)},
      {"crop", int_key(&RunConfig::wald, &WaldConfig::crop)},
      {"visible_lo_nm", real_key(&RunConfig::wald, &WaldConfig::visible_lo_nm)},
      {"visible_hi_nm", real_key(&RunConfig::wald, &WaldConfig::visible_hi_nm)},
      {"dataset", string_key(&RunConfig::dataset)},
      {"input_cube", string_key(&RunConfig::input_cube)},
      {"train_cube", string_key(&RunConfig::train_cube)},
      {"eval_cube", string_key(&RunConfig::eval_cube)},
      {"checkpoint", string_key(&RunConfig::checkpoint)},
      {"input_y", string_key(&RunConfig::input_y)},
      {"input_x", string_key(&RunConfig::input_x)},
  };
  return s;
}

}  // namespace

KvPairs parse_kv_text(const std::string& text) {
  KvPairs pairs;
  std::vector<std::string> bad;
  std::istringstream is(text);
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      bad.push_back("line " + std::to_string(lineno) + ": missing '=' in \"" + line + "\"");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      bad.push_back("line " + std::to_string(lineno) + ": empty key");
      continue;
    }
    pairs.emplace_back(key, value);
  }
  if (!bad.empty()) {
    std::string msg = "config: " + std::to_string(bad.size()) + " malformed line(s)";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
  return pairs;
}

RunConfig make_run_config(const KvPairs& pairs) {
  RunConfig cfg;
  std::vector<std::string> bad;
  bool blur_kernel_set = false;
  bool blur_sigma_set = false;
  for (const auto& [key, value] : pairs) {
    const auto it = schema().find(key);
    if (it == schema().end()) {
      bad.push_back("unknown key '" + key + "'");
      continue;
    }
    const std::string err = it->second(cfg, value);
    if (!err.empty()) {
      bad.push_back("key '" + key + "': " + err + " (got \"" + value + "\")");
      continue;
    }
    if (key == "blur_kernel") blur_kernel_set = true;
    if (key == "blur_sigma") blur_sigma_set = true;
  }
  if (!bad.empty()) {
    std::string msg = "config: " + std::to_string(bad.size()) + " error(s)";
    for (const auto& b : bad) msg += "\n  " + b;
    throw ConfigError(msg);
  }
  const WaldConfig derived = WaldConfig::for_scale(cfg.model.scale);
  cfg.wald.scale = cfg.model.scale;
  if (!blur_kernel_set) cfg.wald.blur_kernel = derived.blur_kernel;
  if (!blur_sigma_set) cfg.wald.blur_sigma = derived.blur_sigma;
  return cfg;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  KvPairs pairs;
  if (!path.empty()) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream buf;
    buf << f.rdbuf();
    pairs = parse_kv_text(buf.str());
  }
  for (const auto& ov : overrides) {
    const KvPairs one = parse_kv_text(ov);
    pairs.insert(pairs.end(), one.begin(), one.end());
  }
  RunConfig cfg = make_run_config(pairs);
  cfg.validate();
  return cfg;
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  keys.reserve(schema().size());
  for (const auto& [k, v] : schema()) keys.push_back(k);
  return keys;
}

}  // namespace that

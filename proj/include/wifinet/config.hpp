#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "wifinet/baselines.hpp"
#include "wifinet/synth.hpp"
#include "wifinet/wifinet.hpp"

namespace wifinet {

// `key = value` experiment configs, one option per line, # comments. All
// randomness flows from the explicit `seed` key; there are no wall-clock
// defaults anywhere.
class KvConfig {
 public:
  static KvConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  static KvConfig parse_string(const std::string& text, const std::string& origin = "<string>") {
    KvConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw std::runtime_error(origin + ":" + std::to_string(line_no) + ": empty key");
      cfg.values_[key] = value;
    }
    return cfg;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  void merge_over(const KvConfig& overrides) {
    for (const auto& [k, v] : overrides.values_) values_[k] = v;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_number<double>(key, it->second);
  }

  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return parse_number<std::int64_t>(key, it->second);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::runtime_error("config key " + key + ": expected true/false");
  }

  std::vector<int> get_int_list(const std::string& key, std::vector<int> fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::vector<int> out;
    std::istringstream ss(it->second);
    std::string tok;
    while (std::getline(ss, tok, ','))
      out.push_back(static_cast<int>(parse_number<std::int64_t>(key, tok)));
    if (out.empty()) throw std::runtime_error("config key " + key + ": empty list");
    return out;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  template <class T>
  static T parse_number(const std::string& key, const std::string& text) {
    std::istringstream ss(text);
    T v{};
    ss >> v;
    if (ss.fail() || !ss.eof())
      throw std::runtime_error("config key " + key + ": bad number '" + text + "'");
    return v;
  }

  std::map<std::string, std::string> values_;
};

struct DataGenConfig {
  int scans_train = 50;
  int scans_known = 50;
  int scans_unknown = 10;
  double trajectory_speed_mps = 1.0;
  double trajectory_interval_s = 1.0;
};

struct WifinetParams {
  std::array<int, 5> widths{16, 32, 48, 64, 96};
  int kernel = 3;
  TrainConfig train;
};

struct BenchGrid {
  std::vector<std::string> predictors{"wifinet", "knn", "svm", "subknn"};
  std::vector<int> ap_counts{113};
  std::vector<int> position_counts{30};
  int scans_per_point = 50;
  int n_predictions = 1000;
  std::array<int, 5> wifinet_widths{8, 12, 16, 20, 24};
  int wifinet_epochs = 1;
};

struct ExperimentConfig {
  EnvironmentSpec env;
  RadioModel radio;
  DataGenConfig data;
  std::string model = "wifinet";
  WifinetParams wifinet;
  SvmConfig svm;
  SubspaceKnnConfig subknn;
  FeatureMode baseline_features = FeatureMode::image;
  BenchGrid bench;
  std::uint64_t seed = 1;
  std::string out = "out";
  int threads = 0;
};

inline ExperimentConfig experiment_config_from_kv(const KvConfig& kv) {
  ExperimentConfig c;

  c.env.width_m = kv.get_double("env.width", c.env.width_m);
  c.env.height_m = kv.get_double("env.height", c.env.height_m);
  c.env.n_aps = static_cast<int>(kv.get_int("env.n_aps", c.env.n_aps));
  c.env.n_positions = static_cast<int>(kv.get_int("env.n_positions", c.env.n_positions));
  c.env.spacing_min_m = kv.get_double("env.spacing_min", c.env.spacing_min_m);
  c.env.spacing_mean_m = kv.get_double("env.spacing_mean", c.env.spacing_mean_m);
  c.env.spacing_tolerance = kv.get_double("env.spacing_tolerance", c.env.spacing_tolerance);
  c.env.n_unknown = static_cast<int>(kv.get_int("env.n_unknown", c.env.n_unknown));
  c.env.tx_power_min_dbm = kv.get_double("env.tx_power_min", c.env.tx_power_min_dbm);
  c.env.tx_power_max_dbm = kv.get_double("env.tx_power_max", c.env.tx_power_max_dbm);

  c.radio.path_loss_exponent = kv.get_double("radio.path_loss_exponent", c.radio.path_loss_exponent);
  c.radio.shadow_sigma_dbm = kv.get_double("radio.shadow_sigma", c.radio.shadow_sigma_dbm);
  c.radio.scan_sigma_dbm = kv.get_double("radio.scan_sigma", c.radio.scan_sigma_dbm);
  c.radio.body_atten_dbm = kv.get_double("radio.body_atten", c.radio.body_atten_dbm);
  c.radio.train_sessions = static_cast<int>(kv.get_int("radio.train_sessions", c.radio.train_sessions));
  c.radio.session_sigma_dbm = kv.get_double("radio.session_sigma", c.radio.session_sigma_dbm);
  c.radio.shadow_cell_m = kv.get_double("radio.shadow_cell", c.radio.shadow_cell_m);
  c.radio.drift_sigma_week_dbm = kv.get_double("radio.drift_week", c.radio.drift_sigma_week_dbm);
  c.radio.drift_sigma_months_dbm =
      kv.get_double("radio.drift_months", c.radio.drift_sigma_months_dbm);
  c.radio.drift_zone_frac = kv.get_double("radio.drift_zone_frac", c.radio.drift_zone_frac);
  c.radio.drift_zone_m = kv.get_double("radio.drift_zone", c.radio.drift_zone_m);
  c.radio.dropout_prob = kv.get_double("radio.dropout", c.radio.dropout_prob);

  c.data.scans_train = static_cast<int>(kv.get_int("data.scans_train", c.data.scans_train));
  c.data.scans_known = static_cast<int>(kv.get_int("data.scans_known", c.data.scans_known));
  c.data.scans_unknown = static_cast<int>(kv.get_int("data.scans_unknown", c.data.scans_unknown));
  c.data.trajectory_speed_mps =
      kv.get_double("data.trajectory_speed", c.data.trajectory_speed_mps);
  c.data.trajectory_interval_s =
      kv.get_double("data.trajectory_interval", c.data.trajectory_interval_s);

  c.model = kv.get_string("model", c.model);

  {
    auto w = kv.get_int_list("wifinet.widths",
                             {c.wifinet.widths.begin(), c.wifinet.widths.end()});
    if (w.size() != 5)
      throw std::runtime_error("wifinet.widths needs exactly 5 values (stem + 4 blocks)");
    std::copy(w.begin(), w.end(), c.wifinet.widths.begin());
  }
  c.wifinet.kernel = static_cast<int>(kv.get_int("wifinet.kernel", c.wifinet.kernel));
  c.wifinet.train.learning_rate =
      kv.get_double("wifinet.learning_rate", c.wifinet.train.learning_rate);
  c.wifinet.train.momentum = kv.get_double("wifinet.momentum", c.wifinet.train.momentum);
  c.wifinet.train.minibatch =
      static_cast<int>(kv.get_int("wifinet.minibatch", c.wifinet.train.minibatch));
  c.wifinet.train.epochs = static_cast<int>(kv.get_int("wifinet.epochs", c.wifinet.train.epochs));
  c.wifinet.train.shuffle = kv.get_bool("wifinet.shuffle", c.wifinet.train.shuffle);

  c.svm.c = kv.get_double("svm.c", c.svm.c);
  c.svm.epochs = static_cast<int>(kv.get_int("svm.epochs", c.svm.epochs));

  c.subknn.members = static_cast<int>(kv.get_int("subknn.members", c.subknn.members));
  c.subknn.subset_dim = static_cast<int>(kv.get_int("subknn.subset_dim", c.subknn.subset_dim));

  c.baseline_features =
      feature_mode_from_string(kv.get_string("baselines.features", "image"));

  if (kv.has("bench.predictors")) {
    c.bench.predictors.clear();
    std::istringstream ss(kv.get_string("bench.predictors", ""));
    std::string tok;
    while (std::getline(ss, tok, ',')) c.bench.predictors.push_back(tok);
  }
  c.bench.ap_counts = kv.get_int_list("bench.ap_counts", c.bench.ap_counts);
  c.bench.position_counts = kv.get_int_list("bench.position_counts", c.bench.position_counts);
  c.bench.scans_per_point =
      static_cast<int>(kv.get_int("bench.scans_per_point", c.bench.scans_per_point));
  c.bench.n_predictions =
      static_cast<int>(kv.get_int("bench.n_predictions", c.bench.n_predictions));
  {
    auto w = kv.get_int_list("bench.wifinet_widths",
                             {c.bench.wifinet_widths.begin(), c.bench.wifinet_widths.end()});
    if (w.size() != 5) throw std::runtime_error("bench.wifinet_widths needs exactly 5 values");
    std::copy(w.begin(), w.end(), c.bench.wifinet_widths.begin());
  }
  c.bench.wifinet_epochs =
      static_cast<int>(kv.get_int("bench.wifinet_epochs", c.bench.wifinet_epochs));

  c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
  c.out = kv.get_string("out", c.out);
  c.threads = static_cast<int>(kv.get_int("threads", c.threads));
  return c;
}

inline ExperimentConfig load_experiment_config(const std::optional<std::string>& path) {
  if (!path) return ExperimentConfig{};
  return experiment_config_from_kv(KvConfig::parse_file(*path));
}

}  // namespace wifinet

#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "wifinet/dataset.hpp"
#include "wifinet/tensor.hpp"

namespace testsupport {

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("wifinet_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline wifinet::RssSample make_sample(std::vector<std::pair<std::string, int>> readings,
                                      std::optional<int> pid = std::nullopt,
                                      std::optional<wifinet::Vec2> loc = std::nullopt,
                                      std::optional<double> ts = std::nullopt) {
  wifinet::RssSample s;
  for (auto& [ap, rss] : readings) s.readings.push_back({ap, rss});
  s.position_id = pid;
  s.location = loc;
  s.timestamp = ts;
  return s;
}

inline wifinet::Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                                     double scale = 1.0) {
  wifinet::Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (auto& v : t.data) v = d(rng);
  return t;
}

}  // namespace testsupport

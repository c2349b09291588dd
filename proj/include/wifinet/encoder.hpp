#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "wifinet/dataset.hpp"

namespace wifinet {

// Fixed AP -> pixel layout, frozen from the training data. APs are listed in
// first-appearance order (scanning samples in stored order and readings in
// stored order within a sample); AP k occupies pixel (k / side, k % side) of
// a side x side grid, side = smallest integer whose square holds them all.
struct ApDirectory {
  std::vector<std::string> order;
  int side = 0;
  std::unordered_map<std::string, int> index;  // ap_id -> position in `order`

  int n_ap() const { return static_cast<int>(order.size()); }

  void rebuild_index() {
    index.clear();
    index.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) index.emplace(order[i], static_cast<int>(i));
  }
};

inline int image_side_for(int n_ap) {
  int side = 0;
  while (side * side < n_ap) ++side;
  return side;
}

inline ApDirectory build_directory(const Dataset& train) {
  if (train.kind != DatasetKind::train)
    throw std::invalid_argument("directory must be built from a train dataset");
  if (train.samples.empty()) throw std::invalid_argument("empty training dataset");

  ApDirectory dir;
  for (const auto& s : train.samples)
    for (const auto& r : s.readings)
      if (dir.index.emplace(r.ap_id, static_cast<int>(dir.order.size())).second)
        dir.order.push_back(r.ap_id);
  dir.side = image_side_for(dir.n_ap());
  return dir;
}

// RSS in [-99, -30] dBm maps to intensity rss + 200, i.e. [101, 170]; an AP
// missing from the scan (and every padding pixel) stays 0, so "unseen" never
// collides with a weak signal.
inline constexpr int kRssIntensityOffset = 200;

struct FingerprintImage {
  int side = 0;
  std::vector<std::uint8_t> pixels;  // row-major, side*side
  std::optional<int> label;

  std::uint8_t at(int row, int col) const { return pixels[row * side + col]; }

  friend bool operator==(const FingerprintImage&, const FingerprintImage&) = default;
};

inline FingerprintImage encode_sample(const RssSample& s, const ApDirectory& dir) {
  FingerprintImage img;
  img.side = dir.side;
  img.pixels.assign(static_cast<std::size_t>(dir.side) * dir.side, 0);
  img.label = s.position_id;
  for (const auto& r : s.readings) {
    auto it = dir.index.find(r.ap_id);
    if (it == dir.index.end()) continue;  // unknown at train time: dropped
    img.pixels[it->second] = static_cast<std::uint8_t>(r.rss_dbm + kRssIntensityOffset);
  }
  return img;
}

inline std::vector<FingerprintImage> encode_dataset(const Dataset& ds, const ApDirectory& dir) {
  std::vector<FingerprintImage> images;
  images.reserve(ds.samples.size());
  for (const auto& s : ds.samples) images.push_back(encode_sample(s, dir));
  return images;
}

// Plain PGM (P2) so images can be eyeballed with any viewer. Labels are not
// part of the raster and are lost on reload.
inline void export_pgm(const FingerprintImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P2\n" << img.side << ' ' << img.side << "\n255\n";
  for (int r = 0; r < img.side; ++r) {
    for (int c = 0; c < img.side; ++c) {
      if (c) out << ' ';
      out << static_cast<int>(img.at(r, c));
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline FingerprintImage import_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);

  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P5") throw std::runtime_error(path + ": not a PGM file");

  auto next_token = [&in, &path]() {
    std::string tok;
    while (in >> tok) {
      if (tok[0] == '#') {
        std::string rest;
        std::getline(in, rest);
        continue;
      }
      return tok;
    }
    throw std::runtime_error(path + ": truncated PGM header");
  };

  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w != h) throw std::runtime_error(path + ": fingerprint images are square");
  if (maxval != 255) throw std::runtime_error(path + ": expected maxval 255");

  FingerprintImage img;
  img.side = w;
  img.pixels.resize(static_cast<std::size_t>(w) * h);
  if (magic == "P2") {
    for (auto& p : img.pixels) {
      int v;
      if (!(in >> v) || v < 0 || v > 255) throw std::runtime_error(path + ": bad pixel value");
      p = static_cast<std::uint8_t>(v);
    }
  } else {
    in.ignore(1);  // single whitespace after maxval
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size()))
      throw std::runtime_error(path + ": truncated pixel data");
  }
  return img;
}

inline nlohmann::json directory_to_json(const ApDirectory& dir) {
  return {{"order", dir.order}, {"side", dir.side}};
}

inline ApDirectory directory_from_json(const nlohmann::json& j) {
  ApDirectory dir;
  dir.order = j.at("order").get<std::vector<std::string>>();
  dir.side = j.at("side").get<int>();
  if (dir.side != image_side_for(dir.n_ap()))
    throw std::invalid_argument("directory side inconsistent with AP count");
  dir.rebuild_index();
  return dir;
}

}  // namespace wifinet

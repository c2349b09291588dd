#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace wifinet {

// Dense row-major tensor of 64-bit floats. Rank 4 (batch, channels, height,
// width) for convolutional activations, rank 2 (batch, features) at the head,
// rank 1 for per-channel parameters.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(count(shape)), 0.0);
  }

  static std::int64_t count(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= d;
    }
    return n;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  // rank-4 accessors
  int n() const { return shape[0]; }
  int c() const { return shape[1]; }
  int h() const { return shape[2]; }
  int w() const { return shape[3]; }

  double* plane(int batch, int channel) {
    return data.data() + (static_cast<std::int64_t>(batch) * c() + channel) * h() * w();
  }
  const double* plane(int batch, int channel) const {
    return data.data() + (static_cast<std::int64_t>(batch) * c() + channel) * h() * w();
  }

  double& at4(int bn, int ch, int y, int x) {
    return data[((static_cast<std::int64_t>(bn) * c() + ch) * h() + y) * w() + x];
  }
  double at4(int bn, int ch, int y, int x) const {
    return data[((static_cast<std::int64_t>(bn) * c() + ch) * h() + y) * w() + x];
  }

  double& at2(int row, int col) { return data[static_cast<std::int64_t>(row) * dim(1) + col]; }
  double at2(int row, int col) const { return data[static_cast<std::int64_t>(row) * dim(1) + col]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline Tensor zeros_like(const Tensor& t) { return Tensor(t.shape); }

inline std::string shape_string(const Tensor& t) {
  std::string s = "(";
  for (std::size_t i = 0; i < t.shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(t.shape[i]);
  }
  return s + ")";
}

inline void fill_normal(Tensor& t, std::mt19937_64& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data) v = dist(rng);
}

}  // namespace wifinet

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wifinet/checkpoint.hpp"
#include "wifinet/encoder.hpp"
#include "wifinet/rng.hpp"

namespace wifinet {

// Classic classifiers consume flattened fingerprint images by default so all
// methods see identical features; raw RSS vectors (directory-ordered, absent
// APs filled with a below-floor sentinel) are available as an alternative.
enum class FeatureMode { image, raw_rss };

inline constexpr double kRawRssAbsent = -100.0;

inline std::string to_string(FeatureMode m) {
  return m == FeatureMode::image ? "image" : "raw-rss";
}

inline FeatureMode feature_mode_from_string(std::string_view s) {
  if (s == "image") return FeatureMode::image;
  if (s == "raw-rss" || s == "raw_rss" || s == "raw") return FeatureMode::raw_rss;
  throw std::invalid_argument("unknown feature mode: " + std::string(s));
}

inline std::vector<double> image_features(const FingerprintImage& img) {
  return std::vector<double>(img.pixels.begin(), img.pixels.end());
}

inline std::vector<double> raw_rss_features(const RssSample& s, const ApDirectory& dir) {
  std::vector<double> f(static_cast<std::size_t>(dir.n_ap()), kRawRssAbsent);
  for (const auto& r : s.readings) {
    auto it = dir.index.find(r.ap_id);
    if (it != dir.index.end()) f[static_cast<std::size_t>(it->second)] = r.rss_dbm;
  }
  return f;
}

struct FeatureMatrix {
  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
};

inline FeatureMatrix features_from_images(const std::vector<FingerprintImage>& images) {
  FeatureMatrix fm;
  fm.rows.reserve(images.size());
  fm.labels.reserve(images.size());
  for (const auto& img : images) {
    if (!img.label) throw std::invalid_argument("unlabelled training image");
    fm.rows.push_back(image_features(img));
    fm.labels.push_back(*img.label);
  }
  return fm;
}

inline FeatureMatrix features_from_dataset(const Dataset& ds, const ApDirectory& dir) {
  FeatureMatrix fm;
  fm.rows.reserve(ds.samples.size());
  fm.labels.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    if (!s.position_id) throw std::invalid_argument("unlabelled training sample");
    fm.rows.push_back(raw_rss_features(s, dir));
    fm.labels.push_back(*s.position_id);
  }
  return fm;
}

// ---------------------------------------------------------------------------
// KNN (K = 1, Euclidean)
// ---------------------------------------------------------------------------

struct KnnModel {
  std::vector<std::vector<double>> train;
  std::vector<int> labels;
  FeatureMode mode = FeatureMode::image;
  std::map<int, Vec2> class_table;
  ApDirectory directory;
};

inline KnnModel knn_train_features(FeatureMatrix fm, FeatureMode mode = FeatureMode::image) {
  if (fm.rows.empty()) throw std::invalid_argument("empty training set");
  const std::size_t dim = fm.rows.front().size();
  for (const auto& r : fm.rows)
    if (r.size() != dim) throw std::invalid_argument("inconsistent feature dimensions");
  KnnModel m;
  m.train = std::move(fm.rows);
  m.labels = std::move(fm.labels);
  m.mode = mode;
  return m;
}

inline KnnModel knn_train(const std::vector<FingerprintImage>& images) {
  return knn_train_features(features_from_images(images));
}

// Nearest neighbour by squared Euclidean distance; distance ties go to the
// lowest training index.
inline int knn_nearest_index(const KnnModel& m, const std::vector<double>& query) {
  if (query.size() != m.train.front().size())
    throw std::invalid_argument("query dimension mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < m.train.size(); ++i) {
    const double* a = m.train[i].data();
    const double* b = query.data();
    double d = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const double diff = a[j] - b[j];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

inline int knn_predict_features(const KnnModel& m, const std::vector<double>& query) {
  return m.labels[static_cast<std::size_t>(knn_nearest_index(m, query))];
}

inline int knn_predict(const KnnModel& m, const FingerprintImage& img) {
  return knn_predict_features(m, image_features(img));
}

// ---------------------------------------------------------------------------
// Linear SVM (one-vs-rest, primal subgradient on the hinge loss)
// ---------------------------------------------------------------------------

struct SvmConfig {
  double c = 1.0;
  int epochs = 40;
  std::uint64_t seed = 1;
};

struct LinearSvmModel {
  int n_classes = 0;
  std::size_t dim = 0;
  std::vector<std::vector<double>> weights;  // per class
  std::vector<double> bias;                  // per class
  double feature_scale = 1.0;                // inputs divided by this before scoring
  FeatureMode mode = FeatureMode::image;
  std::map<int, Vec2> class_table;
  ApDirectory directory;
};

// Minimises lambda/2 ||w||^2 + mean hinge per class, lambda = 1/(C N), by
// per-sample subgradient steps eta_t = 1/(lambda (t + 2N)) with the usual
// 1/sqrt(lambda) ball projection; the returned weights are the average over
// the final quarter of the epochs, which damps the tail oscillation of the
// subgradient path. Features are max-abs normalised so the schedule is
// insensitive to the input scale.
inline LinearSvmModel svm_train_features(const FeatureMatrix& fm, const SvmConfig& cfg,
                                         FeatureMode mode = FeatureMode::image) {
  if (fm.rows.empty()) throw std::invalid_argument("empty training set");
  const int n_classes = *std::max_element(fm.labels.begin(), fm.labels.end()) + 1;
  {
    std::vector<bool> seen(static_cast<std::size_t>(n_classes), false);
    for (int l : fm.labels) {
      if (l < 0) throw std::invalid_argument("negative label");
      seen[static_cast<std::size_t>(l)] = true;
    }
    if (n_classes < 2 || std::count(seen.begin(), seen.end(), true) < 2)
      throw std::invalid_argument("svm needs at least 2 classes");
  }
  const std::size_t dim = fm.rows.front().size();
  const std::size_t n = fm.rows.size();

  LinearSvmModel m;
  m.n_classes = n_classes;
  m.dim = dim;
  m.mode = mode;
  m.weights.assign(static_cast<std::size_t>(n_classes), std::vector<double>(dim, 0.0));
  m.bias.assign(static_cast<std::size_t>(n_classes), 0.0);

  double max_abs = 0.0;
  for (const auto& r : fm.rows) {
    if (r.size() != dim) throw std::invalid_argument("inconsistent feature dimensions");
    for (double v : r) max_abs = std::max(max_abs, std::abs(v));
  }
  m.feature_scale = max_abs > 0.0 ? max_abs : 1.0;

  std::vector<std::vector<double>> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i].resize(dim);
    for (std::size_t j = 0; j < dim; ++j) x[i][j] = fm.rows[i][j] / m.feature_scale;
  }

  const double lambda = 1.0 / (cfg.c * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = make_rng(cfg.seed, 0x73766d);

  std::vector<std::vector<double>> w_sum(static_cast<std::size_t>(n_classes),
                                         std::vector<double>(dim, 0.0));
  std::vector<double> b_sum(static_cast<std::size_t>(n_classes), 0.0);
  const int avg_from = cfg.epochs - std::max(1, cfg.epochs / 4);
  int averaged = 0;

  std::int64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t + 2 * n));
      const auto& xi = x[i];
      for (int c = 0; c < n_classes; ++c) {
        const double y = fm.labels[i] == c ? 1.0 : -1.0;
        auto& w = m.weights[static_cast<std::size_t>(c)];
        double score = m.bias[static_cast<std::size_t>(c)];
        for (std::size_t j = 0; j < dim; ++j) score += w[j] * xi[j];
        const double shrink = 1.0 - eta * lambda;
        double norm_sq = 0.0;
        if (y * score < 1.0) {
          for (std::size_t j = 0; j < dim; ++j) {
            w[j] = shrink * w[j] + eta * y * xi[j];
            norm_sq += w[j] * w[j];
          }
          m.bias[static_cast<std::size_t>(c)] += eta * y;
        } else {
          for (std::size_t j = 0; j < dim; ++j) {
            w[j] *= shrink;
            norm_sq += w[j] * w[j];
          }
        }
        if (norm_sq > radius * radius) {
          const double scale = radius / std::sqrt(norm_sq);
          for (std::size_t j = 0; j < dim; ++j) w[j] *= scale;
        }
      }
    }
    if (epoch >= avg_from) {
      for (int c = 0; c < n_classes; ++c) {
        for (std::size_t j = 0; j < dim; ++j)
          w_sum[static_cast<std::size_t>(c)][j] += m.weights[static_cast<std::size_t>(c)][j];
        b_sum[static_cast<std::size_t>(c)] += m.bias[static_cast<std::size_t>(c)];
      }
      ++averaged;
    }
  }
  for (int c = 0; c < n_classes; ++c) {
    for (std::size_t j = 0; j < dim; ++j)
      m.weights[static_cast<std::size_t>(c)][j] = w_sum[static_cast<std::size_t>(c)][j] / averaged;
    m.bias[static_cast<std::size_t>(c)] = b_sum[static_cast<std::size_t>(c)] / averaged;
  }
  return m;
}

inline LinearSvmModel svm_train(const std::vector<FingerprintImage>& images,
                                const SvmConfig& cfg = {}) {
  return svm_train_features(features_from_images(images), cfg);
}

inline std::vector<double> svm_scores(const LinearSvmModel& m, const std::vector<double>& query) {
  if (query.size() != m.dim) throw std::invalid_argument("query dimension mismatch");
  std::vector<double> scores(static_cast<std::size_t>(m.n_classes));
  for (int c = 0; c < m.n_classes; ++c) {
    const auto& w = m.weights[static_cast<std::size_t>(c)];
    double s = m.bias[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < m.dim; ++j) s += w[j] * (query[j] / m.feature_scale);
    scores[static_cast<std::size_t>(c)] = s;
  }
  return scores;
}

inline int svm_predict_features(const LinearSvmModel& m, const std::vector<double>& query) {
  const auto scores = svm_scores(m, query);
  int best = 0;
  for (int c = 1; c < m.n_classes; ++c)
    if (scores[static_cast<std::size_t>(c)] > scores[static_cast<std::size_t>(best)]) best = c;
  return best;
}

inline int svm_predict(const LinearSvmModel& m, const FingerprintImage& img) {
  return svm_predict_features(m, image_features(img));
}

// ---------------------------------------------------------------------------
// Subspace KNN (random feature subsets, majority vote)
// ---------------------------------------------------------------------------

struct SubspaceKnnConfig {
  int members = 30;
  int subset_dim = 0;  // 0: ceil(D/2)
  std::uint64_t seed = 1;
};

struct SubspaceKnnModel {
  KnnModel base;
  std::vector<std::vector<int>> subsets;  // sorted feature indices per member
  std::map<int, Vec2> class_table;
  ApDirectory directory;
};

inline SubspaceKnnModel subknn_train_features(FeatureMatrix fm, const SubspaceKnnConfig& cfg,
                                              FeatureMode mode = FeatureMode::image) {
  if (fm.rows.empty()) throw std::invalid_argument("empty training set");
  const int dim = static_cast<int>(fm.rows.front().size());
  const int d = cfg.subset_dim > 0 ? cfg.subset_dim : (dim + 1) / 2;
  if (d > dim)
    throw std::invalid_argument("subspace dimension " + std::to_string(d) +
                                " exceeds feature count " + std::to_string(dim));
  if (cfg.members < 1) throw std::invalid_argument("need at least one ensemble member");

  SubspaceKnnModel m;
  m.base = knn_train_features(std::move(fm), mode);

  auto rng = make_rng(cfg.seed, 0x73756273);
  m.subsets.reserve(static_cast<std::size_t>(cfg.members));
  std::vector<int> all(static_cast<std::size_t>(dim));
  std::iota(all.begin(), all.end(), 0);
  for (int k = 0; k < cfg.members; ++k) {
    std::vector<int> pick = all;
    for (int i = 0; i < d; ++i) {  // partial Fisher-Yates
      std::uniform_int_distribution<std::size_t> dd(static_cast<std::size_t>(i), pick.size() - 1);
      std::swap(pick[static_cast<std::size_t>(i)], pick[dd(rng)]);
    }
    pick.resize(static_cast<std::size_t>(d));
    std::sort(pick.begin(), pick.end());  // fixed summation order; d == D reduces to plain KNN
    m.subsets.push_back(std::move(pick));
  }
  return m;
}

inline SubspaceKnnModel subknn_train(const std::vector<FingerprintImage>& images,
                                     const SubspaceKnnConfig& cfg = {}) {
  return subknn_train_features(features_from_images(images), cfg);
}

inline int subknn_member_vote(const KnnModel& base, const std::vector<int>& subset,
                              const std::vector<double>& query) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < base.train.size(); ++i) {
    const auto& row = base.train[i];
    double dist = 0.0;
    for (int j : subset) {
      const double diff = row[static_cast<std::size_t>(j)] - query[static_cast<std::size_t>(j)];
      dist += diff * diff;
    }
    if (dist < best_d) {
      best_d = dist;
      best = static_cast<int>(i);
    }
  }
  return base.labels[static_cast<std::size_t>(best)];
}

// Majority vote over members; vote ties go to the lowest label.
inline int subknn_predict_features(const SubspaceKnnModel& m, const std::vector<double>& query) {
  if (query.size() != m.base.train.front().size())
    throw std::invalid_argument("query dimension mismatch");
  std::map<int, int> votes;
  for (const auto& subset : m.subsets) ++votes[subknn_member_vote(m.base, subset, query)];
  int best_label = -1, best_count = -1;
  for (const auto& [label, count] : votes) {
    if (count > best_count) {  // map iterates labels ascending
      best_count = count;
      best_label = label;
    }
  }
  return best_label;
}

inline int subknn_predict(const SubspaceKnnModel& m, const FingerprintImage& img) {
  return subknn_predict_features(m, image_features(img));
}

// ---------------------------------------------------------------------------
// Checkpoints (same envelope as the network)
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json class_table_to_json(const std::map<int, Vec2>& table) {
  auto j = nlohmann::json::array();
  for (const auto& [id, p] : table) j.push_back({id, p.x, p.y});
  return j;
}

inline std::map<int, Vec2> class_table_from_json(const nlohmann::json& j) {
  std::map<int, Vec2> table;
  for (const auto& row : j)
    table[row.at(0).get<int>()] = Vec2{row.at(1).get<double>(), row.at(2).get<double>()};
  return table;
}

inline void append_matrix(std::vector<double>& blob, const std::vector<std::vector<double>>& m) {
  for (const auto& row : m) blob.insert(blob.end(), row.begin(), row.end());
}

inline std::vector<std::vector<double>> split_matrix(const std::vector<double>& blob,
                                                     std::size_t& off, std::size_t rows,
                                                     std::size_t cols, const std::string& path) {
  if (off + rows * cols > blob.size())
    throw std::runtime_error(path + ": parameter blob too short");
  std::vector<std::vector<double>> m(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(off), cols, m[i].begin());
    off += cols;
  }
  return m;
}

}  // namespace detail

inline void save_knn(const KnnModel& m, const std::string& path) {
  nlohmann::json header;
  header["kind"] = "knn";
  header["rows"] = m.train.size();
  header["dim"] = m.train.empty() ? 0 : m.train.front().size();
  header["labels"] = m.labels;
  header["feature_mode"] = to_string(m.mode);
  header["class_table"] = detail::class_table_to_json(m.class_table);
  header["directory"] = directory_to_json(m.directory);
  std::vector<double> blob;
  detail::append_matrix(blob, m.train);
  write_checkpoint(path, header, blob);
}

inline KnnModel load_knn(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.at("kind") != "knn") throw std::runtime_error(path + ": not a knn checkpoint");
  KnnModel m;
  const auto rows = ck.header.at("rows").get<std::size_t>();
  const auto dim = ck.header.at("dim").get<std::size_t>();
  std::size_t off = 0;
  m.train = detail::split_matrix(ck.blob, off, rows, dim, path);
  if (off != ck.blob.size()) throw std::runtime_error(path + ": parameter blob too long");
  m.labels = ck.header.at("labels").get<std::vector<int>>();
  m.mode = feature_mode_from_string(ck.header.at("feature_mode").get<std::string>());
  m.class_table = detail::class_table_from_json(ck.header.at("class_table"));
  m.directory = directory_from_json(ck.header.at("directory"));
  if (m.labels.size() != rows) throw std::runtime_error(path + ": label count mismatch");
  return m;
}

inline void save_svm(const LinearSvmModel& m, const std::string& path) {
  nlohmann::json header;
  header["kind"] = "svm";
  header["n_classes"] = m.n_classes;
  header["dim"] = m.dim;
  header["feature_scale"] = m.feature_scale;
  header["feature_mode"] = to_string(m.mode);
  header["class_table"] = detail::class_table_to_json(m.class_table);
  header["directory"] = directory_to_json(m.directory);
  std::vector<double> blob;
  detail::append_matrix(blob, m.weights);
  blob.insert(blob.end(), m.bias.begin(), m.bias.end());
  write_checkpoint(path, header, blob);
}

inline LinearSvmModel load_svm(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.at("kind") != "svm") throw std::runtime_error(path + ": not an svm checkpoint");
  LinearSvmModel m;
  m.n_classes = ck.header.at("n_classes").get<int>();
  m.dim = ck.header.at("dim").get<std::size_t>();
  m.feature_scale = ck.header.at("feature_scale").get<double>();
  m.mode = feature_mode_from_string(ck.header.at("feature_mode").get<std::string>());
  m.class_table = detail::class_table_from_json(ck.header.at("class_table"));
  m.directory = directory_from_json(ck.header.at("directory"));
  std::size_t off = 0;
  m.weights = detail::split_matrix(ck.blob, off, static_cast<std::size_t>(m.n_classes), m.dim, path);
  if (off + static_cast<std::size_t>(m.n_classes) != ck.blob.size())
    throw std::runtime_error(path + ": parameter blob size mismatch");
  m.bias.assign(ck.blob.begin() + static_cast<std::ptrdiff_t>(off), ck.blob.end());
  return m;
}

inline void save_subknn(const SubspaceKnnModel& m, const std::string& path) {
  nlohmann::json header;
  header["kind"] = "subknn";
  header["rows"] = m.base.train.size();
  header["dim"] = m.base.train.empty() ? 0 : m.base.train.front().size();
  header["labels"] = m.base.labels;
  header["subsets"] = m.subsets;
  header["feature_mode"] = to_string(m.base.mode);
  header["class_table"] = detail::class_table_to_json(m.class_table);
  header["directory"] = directory_to_json(m.directory);
  std::vector<double> blob;
  detail::append_matrix(blob, m.base.train);
  write_checkpoint(path, header, blob);
}

inline SubspaceKnnModel load_subknn(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.at("kind") != "subknn")
    throw std::runtime_error(path + ": not a subknn checkpoint");
  SubspaceKnnModel m;
  const auto rows = ck.header.at("rows").get<std::size_t>();
  const auto dim = ck.header.at("dim").get<std::size_t>();
  std::size_t off = 0;
  m.base.train = detail::split_matrix(ck.blob, off, rows, dim, path);
  if (off != ck.blob.size()) throw std::runtime_error(path + ": parameter blob too long");
  m.base.labels = ck.header.at("labels").get<std::vector<int>>();
  m.base.mode = feature_mode_from_string(ck.header.at("feature_mode").get<std::string>());
  m.subsets = ck.header.at("subsets").get<std::vector<std::vector<int>>>();
  m.class_table = detail::class_table_from_json(ck.header.at("class_table"));
  m.directory = directory_from_json(ck.header.at("directory"));
  return m;
}

}  // namespace wifinet

#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "wifinet/baselines.hpp"
#include "wifinet/dataset.hpp"
#include "wifinet/encoder.hpp"
#include "wifinet/synth.hpp"
#include "wifinet/wifinet.hpp"

namespace wifinet {

// ---------------------------------------------------------------------------
// Percentiles and box-plot summaries
// ---------------------------------------------------------------------------

// Linear-interpolation percentile on the sorted values (the rank h =
// (n-1) q/100 convention), fixed so golden files stay stable.
inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw std::invalid_argument("percentile of empty list");
  if (q < 0.0 || q > 100.0) throw std::invalid_argument("percentile q outside [0, 100]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  if (lo == hi) return values[lo];
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

// Tukey box: whiskers reach the farthest points within 1.5 IQR of the
// quartiles, everything beyond is listed as an outlier.
struct BoxSummary {
  double whisker_low = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;
};

inline BoxSummary box_summary(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("box summary of empty list");
  BoxSummary b;
  b.q1 = percentile(values, 25.0);
  b.median = percentile(values, 50.0);
  b.q3 = percentile(values, 75.0);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = std::numeric_limits<double>::infinity();
  b.whisker_high = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  std::sort(b.outliers.begin(), b.outliers.end());
  return b;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Prediction {
  int position_id = -1;
  Vec2 xy;
};

// A predictor sees both the encoded image and the raw scan so image-based
// and raw-RSS models share one evaluation path.
using PredictFn = std::function<Prediction(const FingerprintImage&, const RssSample&)>;

struct LatencyStats {
  double mean_s = 0.0;  // median of batch means, to damp scheduler noise
  double p95_s = 0.0;
};

struct EvalReport {
  int n_samples = 0;
  std::optional<double> accuracy;  // absent when the test set has no labels
  double rmse_m = 0.0;
  double mean_err_m = 0.0;
  double p50_m = 0.0;
  double p75_m = 0.0;
  BoxSummary box;
  std::optional<LatencyStats> latency;
  std::vector<double> errors_m;        // per sample
  std::vector<double> latencies_s;     // per sample (when measured)
  std::vector<Prediction> predictions;
};

struct EvalOptions {
  bool measure_latency = true;
  int warmup_predictions = 100;
  int latency_batches = 10;
};

inline LatencyStats summarize_latency(const std::vector<double>& latencies, int batches) {
  LatencyStats st;
  const auto chunks = make_chunks(static_cast<std::int64_t>(latencies.size()),
                                  std::max(1, batches));
  std::vector<double> means;
  means.reserve(chunks.size());
  for (const auto& c : chunks) {
    double s = 0.0;
    for (std::int64_t i = c.begin; i < c.end; ++i) s += latencies[static_cast<std::size_t>(i)];
    means.push_back(s / static_cast<double>(c.end - c.begin));
  }
  st.mean_s = percentile(means, 50.0);
  st.p95_s = percentile(latencies, 95.0);
  return st;
}

inline EvalReport evaluate(const PredictFn& predict_fn, const Dataset& test,
                           const ApDirectory& dir, const EvalOptions& opts = {}) {
  if (test.samples.empty()) throw std::invalid_argument("empty test set");
  for (const auto& s : test.samples)
    if (!s.location) throw std::invalid_argument("test sample missing ground-truth location");

  const auto images = encode_dataset(test, dir);

  if (opts.measure_latency) {
    for (int i = 0; i < opts.warmup_predictions; ++i) {
      const std::size_t j = i % images.size();
      (void)predict_fn(images[j], test.samples[j]);
    }
  }

  EvalReport rep;
  rep.n_samples = static_cast<int>(test.samples.size());
  rep.errors_m.reserve(images.size());
  rep.predictions.reserve(images.size());

  bool all_labelled = true;
  int correct = 0;
  double sq_sum = 0.0, abs_sum = 0.0;
  using clock = std::chrono::steady_clock;

  for (std::size_t i = 0; i < images.size(); ++i) {
    Prediction pred;
    if (opts.measure_latency) {
      const auto t0 = clock::now();
      pred = predict_fn(images[i], test.samples[i]);
      const auto t1 = clock::now();
      rep.latencies_s.push_back(std::chrono::duration<double>(t1 - t0).count());
    } else {
      pred = predict_fn(images[i], test.samples[i]);
    }
    const double err = distance(pred.xy, *test.samples[i].location);
    rep.errors_m.push_back(err);
    rep.predictions.push_back(pred);
    sq_sum += err * err;
    abs_sum += err;

    if (test.samples[i].position_id) {
      if (*test.samples[i].position_id == pred.position_id) ++correct;
    } else {
      all_labelled = false;
    }
  }

  const double n = static_cast<double>(rep.errors_m.size());
  rep.rmse_m = std::sqrt(sq_sum / n);
  rep.mean_err_m = abs_sum / n;
  rep.p50_m = percentile(rep.errors_m, 50.0);
  rep.p75_m = percentile(rep.errors_m, 75.0);
  rep.box = box_summary(rep.errors_m);
  if (all_labelled) rep.accuracy = correct / n;
  if (opts.measure_latency)
    rep.latency = summarize_latency(rep.latencies_s, opts.latency_batches);
  return rep;
}

// ---------------------------------------------------------------------------
// Predictor adapters (models must outlive the returned callable)
// ---------------------------------------------------------------------------

inline Vec2 class_xy(const std::map<int, Vec2>& table, int position_id) {
  auto it = table.find(position_id);
  if (it == table.end())
    throw std::runtime_error("class " + std::to_string(position_id) + " missing from class table");
  return it->second;
}

inline PredictFn make_predictor(const WiFiNetModel& m) {
  return [&m](const FingerprintImage& img, const RssSample&) {
    const auto p = predict(m, img, 1);
    return Prediction{p.position_id, class_xy(m.class_table, p.position_id)};
  };
}

inline PredictFn make_predictor(const KnnModel& m, const ApDirectory& dir) {
  if (m.mode == FeatureMode::raw_rss)
    return [&m, &dir](const FingerprintImage&, const RssSample& s) {
      const int label = knn_predict_features(m, raw_rss_features(s, dir));
      return Prediction{label, class_xy(m.class_table, label)};
    };
  return [&m](const FingerprintImage& img, const RssSample&) {
    const int label = knn_predict(m, img);
    return Prediction{label, class_xy(m.class_table, label)};
  };
}

inline PredictFn make_predictor(const LinearSvmModel& m, const ApDirectory& dir) {
  if (m.mode == FeatureMode::raw_rss)
    return [&m, &dir](const FingerprintImage&, const RssSample& s) {
      const int label = svm_predict_features(m, raw_rss_features(s, dir));
      return Prediction{label, class_xy(m.class_table, label)};
    };
  return [&m](const FingerprintImage& img, const RssSample&) {
    const int label = svm_predict(m, img);
    return Prediction{label, class_xy(m.class_table, label)};
  };
}

inline PredictFn make_predictor(const SubspaceKnnModel& m, const ApDirectory& dir) {
  if (m.base.mode == FeatureMode::raw_rss)
    return [&m, &dir](const FingerprintImage&, const RssSample& s) {
      const int label = subknn_predict_features(m, raw_rss_features(s, dir));
      return Prediction{label, class_xy(m.class_table, label)};
    };
  return [&m](const FingerprintImage& img, const RssSample&) {
    const int label = subknn_predict(m, img);
    return Prediction{label, class_xy(m.class_table, label)};
  };
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

inline constexpr int kMetricsSchemaVersion = 1;

// Published figures for this architecture on a real deployment, carried in
// reports for context only; nothing asserts against them.
struct ReferenceAnchor {
  const char* predictor;
  const char* protocol;
  double accuracy;   // negative: not applicable
  double error_m;    // known: RMSE; unknown/trajectory: mean error
  double p75_m;      // negative: not reported
};

inline const std::vector<ReferenceAnchor>& reference_anchors() {
  static const std::vector<ReferenceAnchor> anchors = {
      {"wifinet", "known", 0.9189, 0.28, -1.0},
      {"svm", "known", 0.8211, 0.727, -1.0},
      {"wifinet", "unknown", -1.0, 3.5, 5.1},
      {"svm", "unknown", -1.0, 4.0, 5.6},
      {"wifinet", "trajectory", -1.0, 3.3, 5.0},
      {"svm", "trajectory", -1.0, 4.3, 6.4},
  };
  return anchors;
}

inline nlohmann::json report_to_json(const EvalReport& rep, bool include_latency = true) {
  nlohmann::json j;
  j["schema_version"] = kMetricsSchemaVersion;
  j["n_samples"] = rep.n_samples;
  j["accuracy"] = rep.accuracy ? nlohmann::json(*rep.accuracy) : nlohmann::json(nullptr);
  j["rmse_m"] = rep.rmse_m;
  j["mean_err_m"] = rep.mean_err_m;
  j["p50_m"] = rep.p50_m;
  j["p75_m"] = rep.p75_m;
  j["box"] = {{"whisker_low", rep.box.whisker_low}, {"q1", rep.box.q1},
              {"median", rep.box.median},           {"q3", rep.box.q3},
              {"whisker_high", rep.box.whisker_high}, {"outliers", rep.box.outliers}};
  if (include_latency && rep.latency)
    j["latency"] = {{"mean_s", rep.latency->mean_s}, {"p95_s", rep.latency->p95_s}};
  else
    j["latency"] = nullptr;
  auto refs = nlohmann::json::array();
  for (const auto& a : reference_anchors())
    refs.push_back({{"predictor", a.predictor},
                    {"protocol", a.protocol},
                    {"accuracy", a.accuracy < 0 ? nlohmann::json(nullptr) : nlohmann::json(a.accuracy)},
                    {"error_m", a.error_m},
                    {"p75_m", a.p75_m < 0 ? nlohmann::json(nullptr) : nlohmann::json(a.p75_m)}});
  j["reference_results"] = std::move(refs);
  return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport rep;
  rep.n_samples = j.at("n_samples").get<int>();
  if (!j.at("accuracy").is_null()) rep.accuracy = j.at("accuracy").get<double>();
  rep.rmse_m = j.at("rmse_m").get<double>();
  rep.mean_err_m = j.at("mean_err_m").get<double>();
  rep.p50_m = j.at("p50_m").get<double>();
  rep.p75_m = j.at("p75_m").get<double>();
  const auto& b = j.at("box");
  rep.box.whisker_low = b.at("whisker_low").get<double>();
  rep.box.q1 = b.at("q1").get<double>();
  rep.box.median = b.at("median").get<double>();
  rep.box.q3 = b.at("q3").get<double>();
  rep.box.whisker_high = b.at("whisker_high").get<double>();
  rep.box.outliers = b.at("outliers").get<std::vector<double>>();
  if (!j.at("latency").is_null())
    rep.latency = LatencyStats{j.at("latency").at("mean_s").get<double>(),
                               j.at("latency").at("p95_s").get<double>()};
  return rep;
}

// Writes <prefix>_metrics.json, <prefix>_samples.csv and <prefix>_box.csv.
inline void report_to_files(const EvalReport& rep, const Dataset& test, const std::string& prefix,
                            bool include_latency = true) {
  if (rep.errors_m.empty()) throw std::invalid_argument("report has no per-sample errors");

  {
    std::ofstream out(prefix + "_metrics.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + prefix + "_metrics.json");
    out << report_to_json(rep, include_latency).dump(2) << '\n';
  }
  {
    std::ofstream out(prefix + "_samples.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + prefix + "_samples.csv");
    out << "sample_idx,true_x,true_y,pred_x,pred_y,error_m,latency_s\n";
    for (std::size_t i = 0; i < rep.errors_m.size(); ++i) {
      const auto& truth = *test.samples[i].location;
      out << i << ',' << detail::format_double(truth.x) << ',' << detail::format_double(truth.y)
          << ',' << detail::format_double(rep.predictions[i].xy.x) << ','
          << detail::format_double(rep.predictions[i].xy.y) << ','
          << detail::format_double(rep.errors_m[i]) << ',';
      if (include_latency && i < rep.latencies_s.size())
        out << detail::format_double(rep.latencies_s[i]);
      out << '\n';
    }
  }
  {
    std::ofstream out(prefix + "_box.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + prefix + "_box.csv");
    out << "whisker_low,q1,median,q3,whisker_high,n_outliers\n";
    out << detail::format_double(rep.box.whisker_low) << ',' << detail::format_double(rep.box.q1)
        << ',' << detail::format_double(rep.box.median) << ',' << detail::format_double(rep.box.q3)
        << ',' << detail::format_double(rep.box.whisker_high) << ',' << rep.box.outliers.size()
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Scaling benchmark
// ---------------------------------------------------------------------------

// Everything under the 250 ms WiFi scan interval can serve location requests
// at the scan rate.
inline constexpr double kRealTimeBudgetS = 0.250;

struct BenchConfig {
  int scans_per_point = 50;
  int n_predictions = 1000;
  int warmup = 100;
  RadioModel radio;
  std::array<int, 5> wifinet_widths{8, 12, 16, 20, 24};
  int wifinet_epochs = 1;
  int wifinet_minibatch = 120;
  SvmConfig svm;
  SubspaceKnnConfig subknn;
  int train_threads = 0;
};

struct BenchRow {
  std::string predictor;
  int n_ap = 0;
  int n_positions = 0;
  int n_train = 0;
  double latency_mean_s = 0.0;
  double latency_p95_s = 0.0;
  bool realtime = false;
};

namespace detail {

// Exact-grid environment sized to the bounds; the spacing profile is not the
// object of a latency benchmark.
inline Environment bench_environment(int n_ap, int n_positions, std::uint64_t seed) {
  EnvironmentSpec spec;
  spec.n_aps = n_ap;
  spec.n_positions = n_positions;
  spec.n_unknown = 2;
  const auto grid = grid_shape(n_positions);
  const double usable = std::min(spec.width_m, spec.height_m) * 0.9;
  const double pitch = std::min(4.46, usable / std::max(grid.cols - 1, 1));
  spec.spacing_min_m = pitch;
  spec.spacing_mean_m = pitch;
  return generate_environment(spec, seed);
}

inline LatencyStats measure_latency(const PredictFn& fn,
                                    const std::vector<FingerprintImage>& queries,
                                    const std::vector<RssSample>& samples, int warmup,
                                    int n_predictions, int batches) {
  using clock = std::chrono::steady_clock;
  for (int i = 0; i < warmup; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) % queries.size();
    (void)fn(queries[j], samples[j]);
  }
  std::vector<double> lat;
  lat.reserve(static_cast<std::size_t>(n_predictions));
  for (int i = 0; i < n_predictions; ++i) {
    const std::size_t j = static_cast<std::size_t>(i) % queries.size();
    const auto t0 = clock::now();
    (void)fn(queries[j], samples[j]);
    const auto t1 = clock::now();
    lat.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  return summarize_latency(lat, batches);
}

}  // namespace detail

// One row per (predictor, n_ap, n_positions) cell: build the environment,
// train the predictor, then time single-sample warm inference on one thread.
inline std::vector<BenchRow> scaling_benchmark(const std::vector<std::string>& predictors,
                                               const std::vector<int>& ap_counts,
                                               const std::vector<int>& position_counts,
                                               const BenchConfig& cfg, std::uint64_t seed) {
  if (predictors.empty() || ap_counts.empty() || position_counts.empty())
    throw std::invalid_argument("empty benchmark grid");

  std::vector<BenchRow> rows;
  for (int n_ap : ap_counts) {
    for (int n_pos : position_counts) {
      const Environment env =
          detail::bench_environment(n_ap, n_pos, mix_seed(seed, static_cast<std::uint64_t>(n_ap),
                                                          static_cast<std::uint64_t>(n_pos)));
      const Dataset train_ds =
          generate_dataset(env, cfg.radio, DatasetKind::train, cfg.scans_per_point,
                           mix_seed(seed, 0x7472, static_cast<std::uint64_t>(n_ap * 131 + n_pos)));
      const int query_scans = std::max(1, (200 + n_pos - 1) / n_pos);
      const Dataset query_ds =
          generate_dataset(env, cfg.radio, DatasetKind::test_known, query_scans,
                           mix_seed(seed, 0x7175, static_cast<std::uint64_t>(n_ap * 131 + n_pos)));

      const ApDirectory dir = build_directory(train_ds);
      const auto train_images = encode_dataset(train_ds, dir);
      const auto queries = encode_dataset(query_ds, dir);

      for (const auto& name : predictors) {
        BenchRow row;
        row.predictor = name;
        row.n_ap = n_ap;
        row.n_positions = n_pos;
        row.n_train = static_cast<int>(train_images.size());

        LatencyStats lat;
        if (name == "wifinet") {
          WiFiNetModel m = build_wifinet(dir.side, n_pos, cfg.wifinet_widths,
                                         mix_seed(seed, 0x6d6f64));
          m.directory = dir;
          for (const auto& [id, p] : train_ds.positions) m.class_table[id] = p;
          TrainConfig tc;
          tc.epochs = cfg.wifinet_epochs;
          tc.minibatch = cfg.wifinet_minibatch;
          tc.seed = mix_seed(seed, 0x747261);
          tc.threads = cfg.train_threads;
          train(m, train_images, tc);
          lat = detail::measure_latency(make_predictor(m), queries, query_ds.samples, cfg.warmup,
                                        cfg.n_predictions, 10);
        } else if (name == "knn") {
          KnnModel m = knn_train(train_images);
          m.class_table = train_ds.positions;
          lat = detail::measure_latency(make_predictor(m, dir), queries, query_ds.samples,
                                        cfg.warmup, cfg.n_predictions, 10);
        } else if (name == "svm") {
          SvmConfig sc = cfg.svm;
          sc.seed = mix_seed(seed, 0x73766d);
          LinearSvmModel m = svm_train(train_images, sc);
          m.class_table = train_ds.positions;
          lat = detail::measure_latency(make_predictor(m, dir), queries, query_ds.samples,
                                        cfg.warmup, cfg.n_predictions, 10);
        } else if (name == "subknn") {
          SubspaceKnnConfig kc = cfg.subknn;
          kc.seed = mix_seed(seed, 0x737562);
          SubspaceKnnModel m = subknn_train(train_images, kc);
          m.class_table = train_ds.positions;
          lat = detail::measure_latency(make_predictor(m, dir), queries, query_ds.samples,
                                        cfg.warmup, cfg.n_predictions, 10);
        } else {
          throw std::invalid_argument("unknown predictor: " + name);
        }

        row.latency_mean_s = lat.mean_s;
        row.latency_p95_s = lat.p95_s;
        row.realtime = lat.mean_s < kRealTimeBudgetS;
        rows.push_back(std::move(row));
      }
    }
  }
  std::sort(rows.begin(), rows.end(), [](const BenchRow& a, const BenchRow& b) {
    return std::tie(a.predictor, a.n_ap, a.n_positions) <
           std::tie(b.predictor, b.n_ap, b.n_positions);
  });
  return rows;
}

inline void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "predictor,n_ap,n_positions,n_train,latency_mean_ms,latency_p95_ms,realtime_250ms\n";
  for (const auto& r : rows)
    out << r.predictor << ',' << r.n_ap << ',' << r.n_positions << ',' << r.n_train << ','
        << detail::format_double(r.latency_mean_s * 1e3) << ','
        << detail::format_double(r.latency_p95_s * 1e3) << ',' << (r.realtime ? 1 : 0) << '\n';
}

}  // namespace wifinet

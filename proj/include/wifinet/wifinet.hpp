#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wifinet/checkpoint.hpp"
#include "wifinet/encoder.hpp"
#include "wifinet/nn.hpp"

namespace wifinet {

// WiFiNet: a stem Conv+BN+ReLU followed by four Conv+BN+Conv+BN+Conv+BN+ReLU
// blocks whose channel width grows with depth, closed by a flatten + dense +
// softmax head. 13 convolutions in total, stride 1 with same padding
// throughout, no pooling, so the spatial size never changes.
inline constexpr int kWifinetBlocks = 4;
inline constexpr int kWifinetConvsPerBlock = 3;
inline constexpr int kWifinetStages = 1 + kWifinetBlocks * kWifinetConvsPerBlock;

inline bool relu_after_stage(int stage) { return stage % kWifinetConvsPerBlock == 0; }

struct ConvBnStage {
  ConvLayer conv;
  BatchNormLayer bn;
};

// Input preprocessing applied inside the network: plain 1/255 scaling, or
// per-image zero-centre/unit-variance standardisation. Standardising removes
// common-mode intensity shifts (the bulk of day-to-day drift) before the
// first convolution.
enum class InputNorm { scale, standardize };

inline std::string to_string(InputNorm n) {
  return n == InputNorm::scale ? "scale" : "standardize";
}

inline InputNorm input_norm_from_string(std::string_view s) {
  if (s == "scale") return InputNorm::scale;
  if (s == "standardize") return InputNorm::standardize;
  throw std::invalid_argument("unknown input norm: " + std::string(s));
}

struct WiFiNetModel {
  int side = 0;
  int n_classes = 0;
  std::array<int, 5> widths{};  // stem + one per block
  int kernel = 3;
  InputNorm input_norm = InputNorm::standardize;
  std::vector<ConvBnStage> stages;  // kWifinetStages entries
  DenseLayer head;
  ApDirectory directory;            // frozen at train time
  std::map<int, Vec2> class_table;  // position_id -> coordinates
  std::uint64_t init_seed = 0;
  int trained_epochs = 0;

  int head_features() const { return side * side * widths[4]; }

  // Stable traversal order; also the checkpoint blob order for trainables.
  template <class Fn>
  void for_each_param(Fn&& fn) {
    for (std::size_t s = 0; s < stages.size(); ++s) {
      const std::string p = "stage" + std::to_string(s);
      fn(p + ".conv.w", stages[s].conv.weights);
      fn(p + ".conv.b", stages[s].conv.bias);
      fn(p + ".bn.gamma", stages[s].bn.gamma);
      fn(p + ".bn.beta", stages[s].bn.beta);
    }
    fn("head.w", head.weights);
    fn("head.b", head.bias);
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for_each_param([&](const std::string&, Tensor& t) { out.push_back(&t); });
    return out;
  }
};

inline int wifinet_stage_in_channels(const std::array<int, 5>& widths, int stage) {
  if (stage == 0) return 1;
  const int block = (stage - 1) / kWifinetConvsPerBlock;
  const int pos = (stage - 1) % kWifinetConvsPerBlock;
  return pos == 0 ? widths[block] : widths[block + 1];
}

inline int wifinet_stage_out_channels(const std::array<int, 5>& widths, int stage) {
  if (stage == 0) return widths[0];
  return widths[1 + (stage - 1) / kWifinetConvsPerBlock];
}

inline WiFiNetModel build_wifinet(int side, int n_classes, const std::array<int, 5>& widths,
                                  std::uint64_t seed, int kernel = 3) {
  if (side < 1) throw std::invalid_argument("side must be >= 1");
  if (n_classes < 2) throw std::invalid_argument("need at least 2 classes");
  for (int i = 1; i < 5; ++i)
    if (widths[i] <= widths[i - 1])
      throw std::invalid_argument("channel widths must be strictly increasing");
  if (widths[0] < 1) throw std::invalid_argument("channel widths must be positive");

  WiFiNetModel m;
  m.side = side;
  m.n_classes = n_classes;
  m.widths = widths;
  m.kernel = kernel;
  m.init_seed = seed;

  auto rng = make_rng(seed, 0x77696669);  // weight-init stream
  m.stages.reserve(kWifinetStages);
  for (int s = 0; s < kWifinetStages; ++s) {
    ConvBnStage stage;
    stage.conv = make_conv(wifinet_stage_in_channels(widths, s),
                           wifinet_stage_out_channels(widths, s), kernel, rng);
    stage.bn = make_batchnorm(wifinet_stage_out_channels(widths, s));
    m.stages.push_back(std::move(stage));
  }
  m.head = make_dense_zero(m.head_features(), n_classes);
  return m;
}

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

inline constexpr double kPixelScale = 1.0 / 255.0;

namespace detail {

inline void write_normalized(const std::vector<std::uint8_t>& px, double* dst, InputNorm norm) {
  if (norm == InputNorm::scale) {
    for (std::size_t i = 0; i < px.size(); ++i) dst[i] = px[i] * kPixelScale;
    return;
  }
  double mean = 0.0;
  for (std::uint8_t p : px) mean += p;
  mean /= static_cast<double>(px.size());
  double var = 0.0;
  for (std::uint8_t p : px) {
    const double d = p - mean;
    var += d * d;
  }
  var /= static_cast<double>(px.size());
  const double inv = 1.0 / std::sqrt(var + 1.0);  // +1 guards all-constant images
  for (std::size_t i = 0; i < px.size(); ++i) dst[i] = (px[i] - mean) * inv;
}

}  // namespace detail

inline Tensor image_to_tensor(const FingerprintImage& img,
                              InputNorm norm = InputNorm::standardize) {
  Tensor t({1, 1, img.side, img.side});
  detail::write_normalized(img.pixels, t.data.data(), norm);
  return t;
}

inline Tensor images_to_batch(const std::vector<FingerprintImage>& images,
                              std::span<const int> indices,
                              InputNorm norm = InputNorm::standardize) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  const int side = images[indices[0]].side;
  Tensor t({static_cast<int>(indices.size()), 1, side, side});
  double* dst = t.data.data();
  for (int idx : indices) {
    detail::write_normalized(images[idx].pixels, dst, norm);
    dst += images[idx].pixels.size();
  }
  return t;
}

inline Tensor wifinet_logits(const WiFiNetModel& m, const Tensor& x, int threads = 1) {
  Tensor a = conv2d_forward(x, m.stages[0].conv, threads);
  a = batchnorm_inference(a, m.stages[0].bn);
  relu_inplace(a);
  for (int s = 1; s < kWifinetStages; ++s) {
    a = conv2d_forward(a, m.stages[s].conv, threads);
    a = batchnorm_inference(a, m.stages[s].bn);
    if (relu_after_stage(s)) relu_inplace(a);
  }
  return dense_forward(a, m.head);
}

struct WifinetGrads {
  double loss = 0.0;
  std::vector<Tensor> grads;  // for_each_param order
};

// Train-mode forward + full backward pass. Running statistics are updated
// only when update_running is set (gradient checking needs a side-effect-free
// objective).
inline WifinetGrads wifinet_loss_and_gradients(WiFiNetModel& m, const Tensor& x,
                                               const std::vector<int>& labels, int threads,
                                               bool update_running) {
  const int S = kWifinetStages;
  std::vector<Tensor> conv_out(S);  // BN inputs
  std::vector<Tensor> act(S);       // stage outputs (post-BN, post-ReLU where applicable)

  const Tensor* cur = &x;
  for (int s = 0; s < S; ++s) {
    conv_out[s] = conv2d_forward(*cur, m.stages[s].conv, threads);
    act[s] = batchnorm_forward(conv_out[s], m.stages[s].bn, BnMode::train, update_running);
    if (relu_after_stage(s)) relu_inplace(act[s]);
    cur = &act[s];
  }
  const Tensor logits = dense_forward(act[S - 1], m.head);
  auto sm = softmax_xent(logits, labels);

  DenseGrads head_g = dense_backward(act[S - 1], m.head, sm.grad_logits);

  std::vector<Tensor> gw(S), gb(S), ggamma(S), gbeta(S);
  Tensor g = std::move(head_g.grad_x);
  for (int s = S - 1; s >= 0; --s) {
    if (relu_after_stage(s)) relu_backward_inplace(act[s], g);
    auto bn_g = batchnorm_backward(conv_out[s], m.stages[s].bn, g);
    ggamma[s] = std::move(bn_g.grad_gamma);
    gbeta[s] = std::move(bn_g.grad_beta);
    auto conv_g = conv2d_backward(s == 0 ? x : act[s - 1], m.stages[s].conv, bn_g.grad_x, threads);
    gw[s] = std::move(conv_g.grad_w);
    gb[s] = std::move(conv_g.grad_b);
    g = std::move(conv_g.grad_x);
  }

  WifinetGrads out;
  out.loss = sm.loss;
  out.grads.reserve(4 * S + 2);
  for (int s = 0; s < S; ++s) {
    out.grads.push_back(std::move(gw[s]));
    out.grads.push_back(std::move(gb[s]));
    out.grads.push_back(std::move(ggamma[s]));
    out.grads.push_back(std::move(gbeta[s]));
  }
  out.grads.push_back(std::move(head_g.grad_w));
  out.grads.push_back(std::move(head_g.grad_b));
  return out;
}

// Train-mode objective without side effects, for finite differences.
inline double wifinet_loss(WiFiNetModel& m, const Tensor& x, const std::vector<int>& labels,
                           int threads = 1) {
  const int S = kWifinetStages;
  Tensor a = x;
  for (int s = 0; s < S; ++s) {
    a = conv2d_forward(a, m.stages[s].conv, threads);
    a = batchnorm_forward(a, m.stages[s].bn, BnMode::train, /*update_running=*/false);
    if (relu_after_stage(s)) relu_inplace(a);
  }
  const Tensor logits = dense_forward(a, m.head);
  return softmax_xent(logits, labels).loss;
}

inline GradCheckReport wifinet_grad_check(WiFiNetModel& m, const Tensor& x,
                                          const std::vector<int>& labels, double h, double tol,
                                          int max_per_tensor, std::mt19937_64& rng) {
  auto lg = wifinet_loss_and_gradients(m, x, labels, 1, /*update_running=*/false);
  std::vector<NamedParam> params;
  m.for_each_param([&](const std::string& name, Tensor& t) { params.push_back({name, &t}); });
  std::vector<const Tensor*> analytic;
  for (const auto& g : lg.grads) analytic.push_back(&g);
  return grad_check(std::span<const NamedParam>(params),
                    std::span<const Tensor* const>(analytic),
                    [&] { return wifinet_loss(m, x, labels, 1); }, h, tol, max_per_tensor, rng);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  int minibatch = 120;
  int epochs = 30;
  std::uint64_t seed = 1;
  bool shuffle = true;
  int threads = 0;  // 0: all hardware threads
};

struct TrainResult {
  std::vector<double> epoch_loss;  // sample-weighted mean loss per epoch
};

inline TrainResult train(WiFiNetModel& m, const std::vector<FingerprintImage>& images,
                         const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("epochs must be >= 1");
  if (cfg.minibatch < 2) throw std::invalid_argument("minibatch must be >= 2");
  if (images.empty()) throw std::invalid_argument("no training images");
  for (const auto& img : images) {
    if (img.side != m.side)
      throw std::invalid_argument("image side " + std::to_string(img.side) +
                                  " does not match model side " + std::to_string(m.side));
    if (!img.label) throw std::invalid_argument("unlabelled training image");
    if (*img.label < 0 || *img.label >= m.n_classes)
      throw std::invalid_argument("label " + std::to_string(*img.label) + " out of range [0, " +
                                  std::to_string(m.n_classes) + ")");
  }
  const int n = static_cast<int>(images.size());
  if (n < 2) throw std::invalid_argument("batch normalisation needs at least 2 samples");
  const int threads = resolve_threads(cfg.threads);

  SgdmState opt;
  opt.learning_rate = cfg.learning_rate;
  opt.momentum = cfg.momentum;

  std::vector<Tensor*> params = m.parameters();

  std::vector<int> order(images.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  result.epoch_loss.reserve(cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.shuffle) {
      auto rng = make_rng(cfg.seed, 0x73687566, static_cast<std::uint64_t>(epoch));
      std::shuffle(order.begin(), order.end(), rng);
    }

    double loss_sum = 0.0;
    int pos = 0;
    while (pos < n) {
      int take = std::min(cfg.minibatch, n - pos);
      // a trailing single sample cannot be batch-normalised; fold it into
      // the previous batch instead
      if (n - (pos + take) == 1) take += 1;
      std::span<const int> batch_idx(order.data() + pos, static_cast<std::size_t>(take));

      Tensor x = images_to_batch(images, batch_idx, m.input_norm);
      std::vector<int> labels(batch_idx.size());
      for (std::size_t i = 0; i < batch_idx.size(); ++i) labels[i] = *images[batch_idx[i]].label;

      auto lg = wifinet_loss_and_gradients(m, x, labels, threads, /*update_running=*/true);
      if (!std::isfinite(lg.loss))
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                 " offset " + std::to_string(pos));

      std::vector<const Tensor*> grads;
      grads.reserve(lg.grads.size());
      for (const auto& g : lg.grads) grads.push_back(&g);
      sgdm_step(std::span<Tensor* const>(params), std::span<const Tensor* const>(grads), opt);

#ifndef NDEBUG
      for (const Tensor* p : params)
        if (!p->all_finite())
          throw std::runtime_error("non-finite parameter after step at epoch " +
                                   std::to_string(epoch));
#endif
      loss_sum += lg.loss * take;
      pos += take;
    }
    result.epoch_loss.push_back(loss_sum / n);
    ++m.trained_epochs;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

struct WifinetPrediction {
  int position_id = -1;
  std::vector<double> probabilities;
};

inline WifinetPrediction predict(const WiFiNetModel& m, const FingerprintImage& img,
                                 int threads = 1) {
  if (img.side != m.side)
    throw std::invalid_argument("image side " + std::to_string(img.side) +
                                " does not match model side " + std::to_string(m.side));
  const Tensor logits = wifinet_logits(m, image_to_tensor(img, m.input_norm), threads);
  const Tensor probs = softmax(logits);

  WifinetPrediction out;
  out.probabilities.assign(probs.data.begin(), probs.data.end());
  int best = 0;
  for (int c = 1; c < m.n_classes; ++c)
    if (out.probabilities[c] > out.probabilities[best]) best = c;  // ties keep lowest index
  out.position_id = best;
  return out;
}

inline Vec2 predict_xy(const WiFiNetModel& m, const FingerprintImage& img, int threads = 1) {
  const auto p = predict(m, img, threads);
  auto it = m.class_table.find(p.position_id);
  if (it == m.class_table.end())
    throw std::runtime_error("class " + std::to_string(p.position_id) + " missing from class table");
  return it->second;
}

// ---------------------------------------------------------------------------
// Architecture audit
// ---------------------------------------------------------------------------

struct ArchitectureAudit {
  int conv_layers = 0;
  int batchnorm_layers = 0;
  int relu_layers = 0;
  int dense_layers = 0;
  int softmax_layers = 0;
  int pooling_layers = 0;
  bool widths_strictly_increasing = false;
  bool spatial_preserved = false;
  int head_features = 0;
};

inline ArchitectureAudit audit(const WiFiNetModel& m) {
  ArchitectureAudit a;
  a.conv_layers = static_cast<int>(m.stages.size());
  a.batchnorm_layers = static_cast<int>(m.stages.size());
  for (int s = 0; s < static_cast<int>(m.stages.size()); ++s)
    if (relu_after_stage(s)) ++a.relu_layers;
  a.dense_layers = 1;
  a.softmax_layers = 1;
  a.pooling_layers = 0;

  a.widths_strictly_increasing = true;
  for (int i = 1; i < 5; ++i)
    if (m.widths[i] <= m.widths[i - 1]) a.widths_strictly_increasing = false;

  // stride 1 + odd kernel + same padding keeps height/width at every stage
  a.spatial_preserved = true;
  for (const auto& st : m.stages)
    if (st.conv.k % 2 == 0) a.spatial_preserved = false;

  a.head_features = m.head.in_features;
  return a;
}

// ---------------------------------------------------------------------------
// Save / load
// ---------------------------------------------------------------------------

inline void save_wifinet(const WiFiNetModel& m, const std::string& path) {
  nlohmann::json header;
  header["kind"] = "wifinet";
  header["side"] = m.side;
  header["n_classes"] = m.n_classes;
  header["widths"] = m.widths;
  header["kernel"] = m.kernel;
  header["input_norm"] = to_string(m.input_norm);
  header["seed"] = m.init_seed;
  header["epochs"] = m.trained_epochs;
  header["directory"] = directory_to_json(m.directory);
  auto table = nlohmann::json::array();
  for (const auto& [id, p] : m.class_table) table.push_back({id, p.x, p.y});
  header["class_table"] = table;

  std::vector<double> blob;
  auto& mut = const_cast<WiFiNetModel&>(m);
  for (auto& st : mut.stages) {
    blob.insert(blob.end(), st.conv.weights.data.begin(), st.conv.weights.data.end());
    blob.insert(blob.end(), st.conv.bias.data.begin(), st.conv.bias.data.end());
    blob.insert(blob.end(), st.bn.gamma.data.begin(), st.bn.gamma.data.end());
    blob.insert(blob.end(), st.bn.beta.data.begin(), st.bn.beta.data.end());
    blob.insert(blob.end(), st.bn.running_mean.data.begin(), st.bn.running_mean.data.end());
    blob.insert(blob.end(), st.bn.running_var.data.begin(), st.bn.running_var.data.end());
  }
  blob.insert(blob.end(), mut.head.weights.data.begin(), mut.head.weights.data.end());
  blob.insert(blob.end(), mut.head.bias.data.begin(), mut.head.bias.data.end());

  write_checkpoint(path, header, blob);
}

inline WiFiNetModel load_wifinet(const std::string& path) {
  const Checkpoint ck = read_checkpoint(path);
  if (ck.header.at("kind") != "wifinet")
    throw std::runtime_error(path + ": not a wifinet checkpoint");

  const auto widths = ck.header.at("widths").get<std::array<int, 5>>();
  WiFiNetModel m = build_wifinet(ck.header.at("side").get<int>(),
                                 ck.header.at("n_classes").get<int>(), widths,
                                 ck.header.at("seed").get<std::uint64_t>(),
                                 ck.header.at("kernel").get<int>());
  m.trained_epochs = ck.header.at("epochs").get<int>();
  m.input_norm = input_norm_from_string(ck.header.at("input_norm").get<std::string>());
  m.directory = directory_from_json(ck.header.at("directory"));
  for (const auto& row : ck.header.at("class_table"))
    m.class_table[row.at(0).get<int>()] = Vec2{row.at(1).get<double>(), row.at(2).get<double>()};

  std::size_t off = 0;
  auto take = [&](Tensor& t) {
    if (off + t.data.size() > ck.blob.size())
      throw std::runtime_error(path + ": parameter blob too short");
    std::copy_n(ck.blob.begin() + static_cast<std::ptrdiff_t>(off), t.data.size(),
                t.data.begin());
    off += t.data.size();
  };
  for (auto& st : m.stages) {
    take(st.conv.weights);
    take(st.conv.bias);
    take(st.bn.gamma);
    take(st.bn.beta);
    take(st.bn.running_mean);
    take(st.bn.running_var);
  }
  take(m.head.weights);
  take(m.head.bias);
  if (off != ck.blob.size()) throw std::runtime_error(path + ": parameter blob too long");
  return m;
}

}  // namespace wifinet

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "wifinet/parallel.hpp"
#include "wifinet/rng.hpp"
#include "wifinet/tensor.hpp"

namespace wifinet {

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

// 2-D cross-correlation, stride 1, same padding (k/2) so spatial size is
// preserved and border pixels keep full weight.
struct ConvLayer {
  int in_ch = 0;
  int out_ch = 0;
  int k = 3;
  Tensor weights;  // (out_ch, in_ch, k, k)
  Tensor bias;     // (out_ch)
};

inline ConvLayer make_conv(int in_ch, int out_ch, int k, std::mt19937_64& rng) {
  if (k % 2 == 0) throw std::invalid_argument("conv kernel size must be odd");
  ConvLayer layer;
  layer.in_ch = in_ch;
  layer.out_ch = out_ch;
  layer.k = k;
  layer.weights = Tensor({out_ch, in_ch, k, k});
  layer.bias = Tensor({out_ch});
  // He fan-in scaling
  fill_normal(layer.weights, rng, std::sqrt(2.0 / (in_ch * k * k)));
  return layer;
}

struct BatchNormLayer {
  Tensor gamma;         // (C)
  Tensor beta;          // (C)
  Tensor running_mean;  // (C)
  Tensor running_var;   // (C)
  double momentum_stat = 0.1;
  double eps = 1e-5;
};

inline BatchNormLayer make_batchnorm(int channels) {
  BatchNormLayer bn;
  bn.gamma = Tensor({channels});
  bn.beta = Tensor({channels});
  bn.running_mean = Tensor({channels});
  bn.running_var = Tensor({channels});
  std::fill(bn.gamma.data.begin(), bn.gamma.data.end(), 1.0);
  std::fill(bn.running_var.data.begin(), bn.running_var.data.end(), 1.0);
  return bn;
}

struct DenseLayer {
  int in_features = 0;
  int out_features = 0;
  Tensor weights;  // (out, in)
  Tensor bias;     // (out)
};

// Zero-initialised head: class rows start symmetric, so relabelling classes
// by a permutation and retraining with the same seed permutes the model
// exactly (class-specific gradients break the symmetry from step one).
inline DenseLayer make_dense_zero(int in_features, int out_features) {
  DenseLayer d;
  d.in_features = in_features;
  d.out_features = out_features;
  d.weights = Tensor({out_features, in_features});
  d.bias = Tensor({out_features});
  return d;
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

inline void check_conv_input(const Tensor& x, const ConvLayer& layer) {
  if (x.rank() != 4) throw std::invalid_argument("conv input must be rank 4");
  if (x.c() != layer.in_ch)
    throw std::invalid_argument("conv channel mismatch: input " + std::to_string(x.c()) +
                                " vs layer " + std::to_string(layer.in_ch));
}

namespace detail {

// Zero-padded copy of one input plane; turns every kernel tap into a
// full-width shifted row operation with no boundary branches inside the hot
// loops.
inline void pad_plane(const double* src, double* dst, int H, int W, int pad) {
  const int PW = W + 2 * pad;
  std::fill(dst, dst + (H + 2 * pad) * PW, 0.0);
  for (int y = 0; y < H; ++y) {
    double* row = dst + (y + pad) * PW + pad;
    const double* s = src + y * W;
    for (int i = 0; i < W; ++i) row[i] = s[i];
  }
}

}  // namespace detail

inline Tensor conv2d_forward(const Tensor& x, const ConvLayer& layer, int threads = 1) {
  check_conv_input(x, layer);
  const int N = x.n(), H = x.h(), W = x.w();
  const int CO = layer.out_ch, CI = layer.in_ch, K = layer.k, pad = layer.k / 2;
  const int PW = W + 2 * pad;

  Tensor out({N, CO, H, W});
  parallel_for(N, threads, [&](std::int64_t n) {
    const int bn = static_cast<int>(n);
    std::vector<double> padded(static_cast<std::size_t>(CI) * (H + 2 * pad) * PW);
    for (int ci = 0; ci < CI; ++ci)
      detail::pad_plane(x.plane(bn, ci), padded.data() + static_cast<std::size_t>(ci) * (H + 2 * pad) * PW,
                        H, W, pad);
    for (int co = 0; co < CO; ++co) {
      double* __restrict dst0 = out.plane(bn, co);
      const double b = layer.bias.data[co];
      for (int i = 0; i < H * W; ++i) dst0[i] = b;
      for (int ci = 0; ci < CI; ++ci) {
        const double* plane = padded.data() + static_cast<std::size_t>(ci) * (H + 2 * pad) * PW;
        const double* wrow = layer.weights.plane(co, ci);
        for (int ky = 0; ky < K; ++ky) {
          for (int kx = 0; kx < K; ++kx) {
            const double wv = wrow[ky * K + kx];
            for (int y = 0; y < H; ++y) {
              const double* __restrict src = plane + (y + ky) * PW + kx;
              double* __restrict dst = dst0 + y * W;
              for (int i = 0; i < W; ++i) dst[i] += wv * src[i];
            }
          }
        }
      }
    }
  });
  return out;
}

struct ConvGrads {
  Tensor grad_x;
  Tensor grad_w;
  Tensor grad_b;
};

inline ConvGrads conv2d_backward(const Tensor& x, const ConvLayer& layer, const Tensor& grad_out,
                                 int threads = 1) {
  check_conv_input(x, layer);
  if (grad_out.shape != std::vector<int>{x.n(), layer.out_ch, x.h(), x.w()})
    throw std::invalid_argument("conv grad_out shape mismatch");

  const int N = x.n(), H = x.h(), W = x.w();
  const int CO = layer.out_ch, CI = layer.in_ch, K = layer.k, pad = layer.k / 2;

  ConvGrads g;
  g.grad_x = Tensor(x.shape);
  g.grad_w = Tensor(layer.weights.shape);
  g.grad_b = Tensor(layer.bias.shape);

  const int PH = H + 2 * pad, PW = W + 2 * pad;

  // grad_x: batches are independent; accumulate into a padded buffer so the
  // inner loops run full-width, then crop.
  parallel_for(N, threads, [&](std::int64_t n) {
    const int bn = static_cast<int>(n);
    std::vector<double> pgx(static_cast<std::size_t>(PH) * PW);
    for (int ci = 0; ci < CI; ++ci) {
      std::fill(pgx.begin(), pgx.end(), 0.0);
      for (int co = 0; co < CO; ++co) {
        const double* go0 = grad_out.plane(bn, co);
        const double* wrow = layer.weights.plane(co, ci);
        for (int ky = 0; ky < K; ++ky) {
          for (int kx = 0; kx < K; ++kx) {
            const double wv = wrow[ky * K + kx];
            for (int y = 0; y < H; ++y) {
              double* __restrict dst = pgx.data() + (y + ky) * PW + kx;
              const double* __restrict go = go0 + y * W;
              for (int i = 0; i < W; ++i) dst[i] += wv * go[i];
            }
          }
        }
      }
      double* gx0 = g.grad_x.plane(bn, ci);
      for (int y = 0; y < H; ++y) {
        const double* row = pgx.data() + (y + pad) * PW + pad;
        for (int i = 0; i < W; ++i) gx0[y * W + i] = row[i];
      }
    }
  });

  // grad_w / grad_b: reduce over the batch with per-chunk accumulators,
  // combined in chunk order (result independent of thread count).
  const auto chunks = make_chunks(N);
  std::vector<Tensor> gw_parts(chunks.size(), Tensor(layer.weights.shape));
  std::vector<Tensor> gb_parts(chunks.size(), Tensor(layer.bias.shape));
  run_chunks(chunks, threads, [&](int chunk, std::int64_t b0, std::int64_t b1) {
    Tensor& gw = gw_parts[chunk];
    Tensor& gb = gb_parts[chunk];
    std::vector<double> padded(static_cast<std::size_t>(CI) * PH * PW);
    for (std::int64_t n = b0; n < b1; ++n) {
      const int bn = static_cast<int>(n);
      for (int ci = 0; ci < CI; ++ci)
        detail::pad_plane(x.plane(bn, ci),
                          padded.data() + static_cast<std::size_t>(ci) * PH * PW, H, W, pad);
      for (int co = 0; co < CO; ++co) {
        const double* go0 = grad_out.plane(bn, co);
        double acc_b = 0.0;
        for (int i = 0; i < H * W; ++i) acc_b += go0[i];
        gb.data[co] += acc_b;
        for (int ci = 0; ci < CI; ++ci) {
          const double* plane = padded.data() + static_cast<std::size_t>(ci) * PH * PW;
          double* gwrow = gw.plane(co, ci);
          for (int ky = 0; ky < K; ++ky) {
            for (int kx = 0; kx < K; ++kx) {
              double acc = 0.0;
              for (int y = 0; y < H; ++y) {
                const double* __restrict src = plane + (y + ky) * PW + kx;
                const double* __restrict go = go0 + y * W;
                for (int i = 0; i < W; ++i) acc += go[i] * src[i];
              }
              gwrow[ky * K + kx] += acc;
            }
          }
        }
      }
    }
  });
  for (std::size_t c = 0; c < chunks.size(); ++c) {
    for (std::int64_t i = 0; i < g.grad_w.size(); ++i) g.grad_w.data[i] += gw_parts[c].data[i];
    for (std::int64_t i = 0; i < g.grad_b.size(); ++i) g.grad_b.data[i] += gb_parts[c].data[i];
  }
  return g;
}

// ---------------------------------------------------------------------------
// Batch normalisation
// ---------------------------------------------------------------------------

enum class BnMode { train, inference };

namespace detail {

// Per-channel mean and biased variance over (batch, h, w).
inline void batch_stats(const Tensor& x, std::vector<double>& mean, std::vector<double>& var) {
  const int N = x.n(), C = x.c(), HW = x.h() * x.w();
  const double m = static_cast<double>(N) * HW;
  mean.assign(C, 0.0);
  var.assign(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double s = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* p = x.plane(n, c);
      for (int i = 0; i < HW; ++i) s += p[i];
    }
    mean[c] = s / m;
    double sq = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* p = x.plane(n, c);
      for (int i = 0; i < HW; ++i) {
        const double d = p[i] - mean[c];
        sq += d * d;
      }
    }
    var[c] = sq / m;
  }
}

}  // namespace detail

// In train mode normalises with batch statistics and, when update_running is
// set, folds them into the running averages; inference mode uses the stored
// running statistics. Training batches of one sample are rejected.
inline Tensor batchnorm_forward(const Tensor& x, BatchNormLayer& layer, BnMode mode,
                                bool update_running = true) {
  if (x.rank() != 4) throw std::invalid_argument("batchnorm input must be rank 4");
  const int N = x.n(), C = x.c(), HW = x.h() * x.w();
  if (C != layer.gamma.dim(0)) throw std::invalid_argument("batchnorm channel mismatch");
  if (mode == BnMode::train && N < 2)
    throw std::invalid_argument("batchnorm train mode needs batch >= 2");

  std::vector<double> mean(C), var(C);
  if (mode == BnMode::train) {
    detail::batch_stats(x, mean, var);
    if (update_running) {
      const double m = layer.momentum_stat;
      for (int c = 0; c < C; ++c) {
        layer.running_mean.data[c] = (1.0 - m) * layer.running_mean.data[c] + m * mean[c];
        layer.running_var.data[c] = (1.0 - m) * layer.running_var.data[c] + m * var[c];
      }
    }
  } else {
    mean.assign(layer.running_mean.data.begin(), layer.running_mean.data.end());
    var.assign(layer.running_var.data.begin(), layer.running_var.data.end());
  }

  Tensor out(x.shape);
  for (int c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + layer.eps);
    const double gamma = layer.gamma.data[c], beta = layer.beta.data[c];
    const double mu = mean[c];
    for (int n = 0; n < N; ++n) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int i = 0; i < HW; ++i) dst[i] = gamma * (src[i] - mu) * inv + beta;
    }
  }
  return out;
}

// Read-only inference path (running statistics, no state change).
inline Tensor batchnorm_inference(const Tensor& x, const BatchNormLayer& layer) {
  if (x.rank() != 4) throw std::invalid_argument("batchnorm input must be rank 4");
  const int N = x.n(), C = x.c(), HW = x.h() * x.w();
  if (C != layer.gamma.dim(0)) throw std::invalid_argument("batchnorm channel mismatch");
  Tensor out(x.shape);
  for (int c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(layer.running_var.data[c] + layer.eps);
    const double gamma = layer.gamma.data[c], beta = layer.beta.data[c];
    const double mu = layer.running_mean.data[c];
    for (int n = 0; n < N; ++n) {
      const double* src = x.plane(n, c);
      double* dst = out.plane(n, c);
      for (int i = 0; i < HW; ++i) dst[i] = gamma * (src[i] - mu) * inv + beta;
    }
  }
  return out;
}

struct BatchNormGrads {
  Tensor grad_x;
  Tensor grad_gamma;
  Tensor grad_beta;
};

// Gradients for train-mode batch statistics (recomputed from x).
inline BatchNormGrads batchnorm_backward(const Tensor& x, const BatchNormLayer& layer,
                                         const Tensor& grad_out) {
  if (!x.same_shape(grad_out)) throw std::invalid_argument("batchnorm grad shape mismatch");
  const int N = x.n(), C = x.c(), HW = x.h() * x.w();
  const double m = static_cast<double>(N) * HW;

  std::vector<double> mean, var;
  detail::batch_stats(x, mean, var);

  BatchNormGrads g;
  g.grad_x = Tensor(x.shape);
  g.grad_gamma = Tensor(layer.gamma.shape);
  g.grad_beta = Tensor(layer.beta.shape);

  for (int c = 0; c < C; ++c) {
    const double inv = 1.0 / std::sqrt(var[c] + layer.eps);
    const double mu = mean[c];
    double sum_go = 0.0, sum_go_xhat = 0.0;
    for (int n = 0; n < N; ++n) {
      const double* xp = x.plane(n, c);
      const double* gp = grad_out.plane(n, c);
      for (int i = 0; i < HW; ++i) {
        sum_go += gp[i];
        sum_go_xhat += gp[i] * (xp[i] - mu) * inv;
      }
    }
    g.grad_beta.data[c] = sum_go;
    g.grad_gamma.data[c] = sum_go_xhat;

    const double gamma = layer.gamma.data[c];
    for (int n = 0; n < N; ++n) {
      const double* xp = x.plane(n, c);
      const double* gp = grad_out.plane(n, c);
      double* dst = g.grad_x.plane(n, c);
      for (int i = 0; i < HW; ++i) {
        const double xhat = (xp[i] - mu) * inv;
        dst[i] = gamma * inv * (gp[i] - sum_go / m - xhat * sum_go_xhat / m);
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

inline Tensor relu(const Tensor& x) {
  Tensor out(x.shape);
  for (std::int64_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
  return out;
}

inline void relu_inplace(Tensor& x) {
  for (auto& v : x.data) v = v > 0.0 ? v : 0.0;
}

// Gradient mask x > 0; `x` may be either the layer input or its output
// (they share the same sign pattern).
inline Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  if (!x.same_shape(grad_out)) throw std::invalid_argument("relu grad shape mismatch");
  Tensor g(x.shape);
  for (std::int64_t i = 0; i < x.size(); ++i) g.data[i] = x.data[i] > 0.0 ? grad_out.data[i] : 0.0;
  return g;
}

inline void relu_backward_inplace(const Tensor& x, Tensor& grad) {
  for (std::int64_t i = 0; i < x.size(); ++i)
    if (!(x.data[i] > 0.0)) grad.data[i] = 0.0;
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

inline std::int64_t flat_features(const Tensor& x) {
  std::int64_t f = 1;
  for (int i = 1; i < x.rank(); ++i) f *= x.dim(i);
  return f;
}

// y = W * flatten(x) + b per batch element. Accepts rank-2 or rank-4 input.
inline Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
  const int N = x.dim(0);
  const std::int64_t F = flat_features(x);
  if (F != layer.in_features)
    throw std::invalid_argument("dense input features " + std::to_string(F) + " != " +
                                std::to_string(layer.in_features));
  Tensor y({N, layer.out_features});
  for (int n = 0; n < N; ++n) {
    const double* xs = x.data.data() + n * F;
    for (int o = 0; o < layer.out_features; ++o) {
      const double* wr = layer.weights.data.data() + static_cast<std::int64_t>(o) * F;
      double acc = layer.bias.data[o];
      for (std::int64_t i = 0; i < F; ++i) acc += wr[i] * xs[i];
      y.at2(n, o) = acc;
    }
  }
  return y;
}

struct DenseGrads {
  Tensor grad_x;  // same shape as the forward input
  Tensor grad_w;
  Tensor grad_b;
};

inline DenseGrads dense_backward(const Tensor& x, const DenseLayer& layer,
                                 const Tensor& grad_out) {
  const int N = x.dim(0);
  const std::int64_t F = flat_features(x);
  if (grad_out.shape != std::vector<int>{N, layer.out_features})
    throw std::invalid_argument("dense grad_out shape mismatch");

  DenseGrads g;
  g.grad_x = Tensor(x.shape);
  g.grad_w = Tensor(layer.weights.shape);
  g.grad_b = Tensor(layer.bias.shape);

  for (int n = 0; n < N; ++n) {
    const double* xs = x.data.data() + n * F;
    double* gx = g.grad_x.data.data() + n * F;
    for (int o = 0; o < layer.out_features; ++o) {
      const double go = grad_out.at2(n, o);
      const double* wr = layer.weights.data.data() + static_cast<std::int64_t>(o) * F;
      double* gw = g.grad_w.data.data() + static_cast<std::int64_t>(o) * F;
      g.grad_b.data[o] += go;
      for (std::int64_t i = 0; i < F; ++i) {
        gw[i] += go * xs[i];
        gx[i] += go * wr[i];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

// Row-stabilised softmax probabilities.
inline Tensor softmax(const Tensor& logits) {
  const int N = logits.dim(0), C = logits.dim(1);
  Tensor p(logits.shape);
  for (int n = 0; n < N; ++n) {
    double mx = logits.at2(n, 0);
    for (int c = 1; c < C; ++c) mx = std::max(mx, logits.at2(n, c));
    double sum = 0.0;
    for (int c = 0; c < C; ++c) {
      const double e = std::exp(logits.at2(n, c) - mx);
      p.at2(n, c) = e;
      sum += e;
    }
    for (int c = 0; c < C; ++c) p.at2(n, c) /= sum;
  }
  return p;
}

struct SoftmaxXentResult {
  double loss = 0.0;
  Tensor grad_logits;
};

// Mean cross-entropy over the batch; gradient (softmax - onehot) / batch.
inline SoftmaxXentResult softmax_xent(const Tensor& logits, const std::vector<int>& labels) {
  const int N = logits.dim(0), C = logits.dim(1);
  if (static_cast<int>(labels.size()) != N)
    throw std::invalid_argument("softmax_xent label count mismatch");
  for (int y : labels)
    if (y < 0 || y >= C) throw std::invalid_argument("label out of range: " + std::to_string(y));

  SoftmaxXentResult r;
  r.grad_logits = softmax(logits);
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const double p = std::max(r.grad_logits.at2(n, labels[n]), 1e-300);
    loss -= std::log(p);
    r.grad_logits.at2(n, labels[n]) -= 1.0;
  }
  for (auto& v : r.grad_logits.data) v /= N;
  r.loss = loss / N;
  return r;
}

// ---------------------------------------------------------------------------
// SGD with momentum
// ---------------------------------------------------------------------------

struct SgdmState {
  double learning_rate = 1e-3;
  double momentum = 0.9;
  std::vector<Tensor> velocity;  // sized to the parameter list on first step
};

// v <- mu * v - lr * g;  p <- p + v
inline void sgdm_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads,
                      SgdmState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("param/grad count mismatch");
  if (state.velocity.empty()) {
    state.velocity.reserve(params.size());
    for (const Tensor* p : params) state.velocity.emplace_back(p->shape);
  }
  if (state.velocity.size() != params.size())
    throw std::invalid_argument("optimizer state does not match parameter list");

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& v = state.velocity[i];
    if (!p.same_shape(g) || !p.same_shape(v))
      throw std::invalid_argument("sgdm shape mismatch at parameter " + std::to_string(i));
    for (std::int64_t j = 0; j < p.size(); ++j) {
      v.data[j] = state.momentum * v.data[j] - state.learning_rate * g.data[j];
      p.data[j] += v.data[j];
    }
  }
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking
// ---------------------------------------------------------------------------

struct NamedParam {
  std::string name;
  Tensor* tensor = nullptr;
};

struct GradCheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::int64_t worst_index = -1;
  int n_checked = 0;
};

// Central differences against the analytic gradients, on a random subset of
// at most max_per_tensor coordinates per parameter tensor. `loss` must
// re-evaluate the objective with the current (perturbed) parameter values and
// be free of side effects.
template <class LossFn>
GradCheckReport grad_check(std::span<const NamedParam> params,
                           std::span<const Tensor* const> analytic, LossFn&& loss, double h,
                           double tol, int max_per_tensor, std::mt19937_64& rng) {
  if (params.size() != analytic.size())
    throw std::invalid_argument("grad_check param/grad count mismatch");

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& t = *params[pi].tensor;
    const Tensor& g = *analytic[pi];
    if (!t.same_shape(g)) throw std::invalid_argument("grad_check shape mismatch");

    std::vector<std::int64_t> idx(static_cast<std::size_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) idx[static_cast<std::size_t>(i)] = i;
    if (static_cast<int>(idx.size()) > max_per_tensor) {
      // partial Fisher-Yates: first max_per_tensor entries are the sample
      for (int i = 0; i < max_per_tensor; ++i) {
        std::uniform_int_distribution<std::size_t> d(i, idx.size() - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[d(rng)]);
      }
      idx.resize(static_cast<std::size_t>(max_per_tensor));
    }

    for (std::int64_t j : idx) {
      const double saved = t.data[j];
      t.data[j] = saved + h;
      const double up = loss();
      t.data[j] = saved - h;
      const double down = loss();
      t.data[j] = saved;

      const double numeric = (up - down) / (2.0 * h);
      const double analytic_v = g.data[j];
      const double rel = std::abs(analytic_v - numeric) / std::max(1.0, std::abs(analytic_v));
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_param = params[pi].name;
        report.worst_index = j;
      }
      ++report.n_checked;
    }
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace wifinet

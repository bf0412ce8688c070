// Fully connected sigmoid network with a softmax output layer, trained by
// minibatch SGD on cross-entropy. Supports per-layer dropconnect, random
// feedback alignment, post-training dilution, path-product statistics and
// Gaussian-moment inference for a dropconnect layer.
//
// Layer l (0-based) maps activations a_l (width n_l) to a_{l+1}. Its weight
// matrix W_l is n_{l+1} x (n_l + 1); the last column is the bias, driven by a
// constant 1 appended to a_l. Masks and dilution never touch the bias column.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rapnet/common.hpp"
#include "rapnet/data_io.hpp"
#include "rapnet/parallel.hpp"
#include "rapnet/table.hpp"

namespace rapnet {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NetArchitecture {
  std::vector<std::size_t> widths;  // n_0 (input) ... n_{L-1} (classes)

  std::size_t num_layers() const noexcept { return widths.size(); }
  std::size_t num_weight_layers() const noexcept { return widths.empty() ? 0 : widths.size() - 1; }
  std::size_t input_width() const { return widths.front(); }
  std::size_t num_classes() const { return widths.back(); }

  void validate() const {
    if (widths.size() < 2) throw ParameterError("NetArchitecture: need at least 2 layers");
    for (std::size_t w : widths)
      if (w < 1) throw ParameterError("NetArchitecture: layer widths must be >= 1");
  }

  /// "784-100-200-10"
  std::string to_string() const {
    std::string s;
    for (std::size_t k = 0; k < widths.size(); ++k) s += (k ? "-" : "") + std::to_string(widths[k]);
    return s;
  }

  static NetArchitecture parse(const std::string& text) {
    NetArchitecture a;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      const std::size_t dash = std::min(text.find('-', pos), text.size());
      const std::string tok = text.substr(pos, dash - pos);
      if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw ParameterError("NetArchitecture: cannot parse '" + text + "'");
      a.widths.push_back(std::stoull(tok));
      pos = dash + 1;
    }
    a.validate();
    return a;
  }

  bool operator==(const NetArchitecture&) const = default;
};

struct Mlp {
  std::vector<MatrixXd> weights;

  std::size_t num_weight_layers() const noexcept { return weights.size(); }
  NetArchitecture architecture() const {
    NetArchitecture a;
    if (weights.empty()) return a;
    a.widths.push_back(static_cast<std::size_t>(weights.front().cols() - 1));
    for (const auto& w : weights) a.widths.push_back(static_cast<std::size_t>(w.rows()));
    return a;
  }
  bool operator==(const Mlp& o) const {
    if (weights.size() != o.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l)
      if (weights[l].rows() != o.weights[l].rows() || weights[l].cols() != o.weights[l].cols() ||
          weights[l] != o.weights[l])
        return false;
    return true;
  }
};

/// Gaussian N(0, 1/fan_in) weights, zero bias. Layer l draws from sub-seed
/// ("init", l).
inline Mlp init_mlp(const NetArchitecture& arch, std::uint64_t seed) {
  arch.validate();
  Mlp net;
  for (std::size_t l = 0; l + 1 < arch.widths.size(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(arch.widths[l]);
    const auto fan_out = static_cast<Eigen::Index>(arch.widths[l + 1]);
    MatrixXd w = MatrixXd::Zero(fan_out, fan_in + 1);
    Rng rng(derive_seed(seed, "init", l));
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (Eigen::Index r = 0; r < fan_out; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) w(r, c) = scale * standard_normal(rng);
    net.weights.push_back(std::move(w));
  }
  return net;
}

// ---------------------------------------------------------------------------
// Configuration

struct DropconnectLayer {
  bool enabled = false;
  double keep = 1.0;  // p_dc, probability a connection is kept
};

struct DropconnectConfig {
  std::vector<DropconnectLayer> layers;  // empty = no dropconnect anywhere

  static DropconnectConfig none(std::size_t num_weight_layers) {
    return {std::vector<DropconnectLayer>(num_weight_layers)};
  }
  static DropconnectConfig single(std::size_t num_weight_layers, std::size_t layer, double keep) {
    auto c = none(num_weight_layers);
    c.layers.at(layer) = {true, keep};
    return c;
  }
  bool active(std::size_t l) const {
    return l < layers.size() && layers[l].enabled && layers[l].keep < 1.0;
  }
  double keep(std::size_t l) const {
    return l < layers.size() && layers[l].enabled ? layers[l].keep : 1.0;
  }
  void validate(std::size_t num_weight_layers) const {
    if (!layers.empty() && layers.size() != num_weight_layers)
      throw ParameterError("DropconnectConfig: one entry per weight layer required");
    for (const auto& d : layers)
      if (!(d.keep >= 0.0 && d.keep <= 1.0))
        throw ParameterError("DropconnectConfig: p_dc must lie in [0,1]");
  }
};

/// Fixed random feedback matrices. matrices[l] (n_l x n_{l+1}) replaces the
/// transpose of W_l when carrying the error from layer l+1 down to layer l.
struct FeedbackConfig {
  std::vector<bool> enabled;
  double bound = 0.5;
  std::vector<MatrixXd> matrices;  // empty matrix where disabled

  bool uses(std::size_t l) const { return l < enabled.size() && enabled[l]; }

  static FeedbackConfig none(std::size_t num_weight_layers) {
    FeedbackConfig f;
    f.enabled.assign(num_weight_layers, false);
    f.matrices.resize(num_weight_layers);
    return f;
  }
};

/// Draws B_l uniform on [-bound, bound] (sub-seed ("feedback", l)) for every
/// flagged layer.
inline FeedbackConfig make_feedback(const NetArchitecture& arch, std::vector<bool> enabled,
                                    double bound, std::uint64_t seed) {
  arch.validate();
  if (enabled.size() != arch.num_weight_layers())
    throw ParameterError("make_feedback: one flag per weight layer required");
  if (!(bound > 0.0)) throw ParameterError("make_feedback: bound u must be > 0");
  FeedbackConfig f;
  f.enabled = std::move(enabled);
  f.bound = bound;
  f.matrices.resize(arch.num_weight_layers());
  for (std::size_t l = 0; l < arch.num_weight_layers(); ++l) {
    if (!f.enabled[l]) continue;
    MatrixXd b(static_cast<Eigen::Index>(arch.widths[l]), static_cast<Eigen::Index>(arch.widths[l + 1]));
    Rng rng(derive_seed(seed, "feedback", l));
    for (Eigen::Index k = 0; k < b.size(); ++k) b.data()[k] = bound * (2.0 * uniform01(rng) - 1.0);
    f.matrices[l] = std::move(b);
  }
  return f;
}

struct DilutionConfig {
  std::vector<double> removal;  // p_l per weight layer
  std::uint64_t seed = 0;
};

struct RateSpan {
  std::size_t epochs = 0;
  double rate = 0.1;
  bool operator==(const RateSpan&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 1;
  std::vector<RateSpan> schedule{{1, 0.1}};
  std::size_t minibatch = 10;
  std::uint64_t seed = 0;

  double rate_at(std::size_t epoch) const {
    std::size_t end = 0;
    for (const auto& s : schedule) {
      end += s.epochs;
      if (epoch < end) return s.rate;
    }
    throw ParameterError("TrainConfig: schedule does not cover epoch " + std::to_string(epoch));
  }
  void validate() const {
    std::size_t total = 0;
    for (const auto& s : schedule) {
      if (!(s.rate >= 0.0) || !std::isfinite(s.rate))
        throw ParameterError("TrainConfig: learning rates must be finite and >= 0");
      total += s.epochs;
    }
    if (total != epochs)
      throw ParameterError("TrainConfig: schedule spans " + std::to_string(total) +
                           " epochs, expected " + std::to_string(epochs));
    if (minibatch < 1) throw ParameterError("TrainConfig: minibatch must be >= 1");
  }
  static TrainConfig constant(std::size_t epochs, double rate, std::uint64_t seed,
                              std::size_t minibatch = 10) {
    return {epochs, {{epochs, rate}}, minibatch, seed};
  }
};

// ---------------------------------------------------------------------------
// Forward / backward

/// Per-layer binary masks; an empty (0x0) matrix means "no mask".
using LayerMasks = std::vector<MatrixXd>;

inline bool has_mask(const LayerMasks& masks, std::size_t l) {
  return l < masks.size() && masks[l].size() > 0;
}

struct Activations {
  std::vector<VectorXd> layers;  // layers[0] = input, back() = softmax output
  const VectorXd& output() const { return layers.back(); }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// In-place max-subtracted softmax.
inline void softmax_inplace(VectorXd& z) {
  z.array() -= z.maxCoeff();
  z = z.array().exp();
  z /= z.sum();
}

namespace detail {

/// z = W[:, :n] a + W[:, n], optionally with W masked elementwise.
inline VectorXd affine(const MatrixXd& w, const VectorXd& a, const MatrixXd* mask) {
  const Eigen::Index n = w.cols() - 1;
  if (a.size() != n) throw ParameterError("forward: input width does not match layer");
  if (mask) {
    if (mask->rows() != w.rows() || mask->cols() != w.cols())
      throw ParameterError("forward: mask shape does not match weights");
    return w.leftCols(n).cwiseProduct(mask->leftCols(n)) * a + w.col(n);
  }
  VectorXd z = w.col(n);
  z.noalias() += w.leftCols(n) * a;
  return z;
}

inline void activate(VectorXd& z, bool top) {
  if (top)
    softmax_inplace(z);
  else
    z = z.unaryExpr([](double x) { return sigmoid(x); });
}

}  // namespace detail

inline Activations forward(const Mlp& net, const VectorXd& input, const LayerMasks& masks = {}) {
  Activations act;
  act.layers.reserve(net.weights.size() + 1);
  act.layers.push_back(input);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    VectorXd z = detail::affine(net.weights[l], act.layers.back(),
                                has_mask(masks, l) ? &masks[l] : nullptr);
    detail::activate(z, l + 1 == net.weights.size());
    act.layers.push_back(std::move(z));
  }
  return act;
}

/// -ln yhat_label, with yhat clamped below at 1e-30.
inline double cross_entropy(const VectorXd& output, int label) {
  return -std::log(std::max(output[label], 1e-30));
}

/// General one-hot form: -sum_c t_c ln yhat_c.
inline double cross_entropy(const VectorXd& output, const VectorXd& target) {
  double c = 0.0;
  for (Eigen::Index k = 0; k < output.size(); ++k)
    if (target[k] != 0.0) c -= target[k] * std::log(std::max(output[k], 1e-30));
  return c;
}

using Gradients = std::vector<MatrixXd>;

/// Gradients of the cross-entropy for one example. The top delta is
/// yhat - target; the error reaches layer l through (W_l o mask_l)^T, or
/// through the fixed B_l when layer l uses feedback alignment (the mask is
/// then not consulted), and is multiplied by a (1 - a). The weight gradient
/// of a masked layer is masked.
inline Gradients backward(const Mlp& net, const Activations& act, const VectorXd& target,
                          const FeedbackConfig& feedback, const LayerMasks& masks = {}) {
  const std::size_t num = net.weights.size();
  if (act.layers.size() != num + 1) throw ParameterError("backward: activations do not match net");
  if (target.size() != act.output().size())
    throw ParameterError("backward: target width does not match output");
  Gradients grads(num);
  VectorXd delta = act.output() - target;
  for (std::size_t l = num; l-- > 0;) {
    const MatrixXd& w = net.weights[l];
    const Eigen::Index n = w.cols() - 1;
    const VectorXd& below = act.layers[l];
    MatrixXd g(w.rows(), w.cols());
    g.leftCols(n).noalias() = delta * below.transpose();
    g.col(n) = delta;
    const bool masked = has_mask(masks, l);
    if (masked) g.leftCols(n).array() *= masks[l].leftCols(n).array();
    if (l > 0) {
      VectorXd err;
      if (feedback.uses(l)) {
        const MatrixXd& b = feedback.matrices[l];
        if (b.rows() != n || b.cols() != w.rows())
          throw ParameterError("backward: feedback matrix shape mismatch");
        err.noalias() = b * delta;
      } else if (masked) {
        err.noalias() = w.leftCols(n).cwiseProduct(masks[l].leftCols(n)).transpose() * delta;
      } else {
        err.noalias() = w.leftCols(n).transpose() * delta;
      }
      delta = err.array() * below.array() * (1.0 - below.array());
    }
    grads[l] = std::move(g);
  }
  return grads;
}

inline Gradients backward(const Mlp& net, const Activations& act, int label,
                          const FeedbackConfig& feedback, const LayerMasks& masks = {}) {
  VectorXd t = VectorXd::Zero(act.output().size());
  t[label] = 1.0;
  return backward(net, act, t, feedback, masks);
}

/// Bernoulli(keep) connection mask with the bias column fixed at 1.
inline MatrixXd sample_mask(Eigen::Index rows, Eigen::Index cols, double keep, Rng& rng) {
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c + 1 < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = uniform01(rng) < keep ? 1.0 : 0.0;
  m.col(cols - 1).setOnes();
  return m;
}

inline LayerMasks sample_masks(const Mlp& net, const DropconnectConfig& dc, Rng& rng) {
  LayerMasks masks(net.weights.size());
  for (std::size_t l = 0; l < net.weights.size(); ++l)
    if (dc.active(l))
      masks[l] = sample_mask(net.weights[l].rows(), net.weights[l].cols(), dc.keep(l), rng);
  return masks;
}

// ---------------------------------------------------------------------------
// Prediction

/// Index of the largest entry; ties go to the lowest index.
inline int argmax(const VectorXd& v) {
  int best = 0;
  for (Eigen::Index k = 1; k < v.size(); ++k)
    if (v[k] > v[best]) best = static_cast<int>(k);
  return best;
}

/// Deterministic pass with each dropconnect layer replaced by its expected
/// weights keep * W (bias unscaled).
inline VectorXd forward_mean_field(const Mlp& net, const VectorXd& input,
                                   const DropconnectConfig& dc) {
  VectorXd a = input;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const MatrixXd& w = net.weights[l];
    const Eigen::Index n = w.cols() - 1;
    VectorXd z = w.col(n);
    z.noalias() += dc.keep(l) * (w.leftCols(n) * a);
    detail::activate(z, l + 1 == net.weights.size());
    a = std::move(z);
  }
  return a;
}

/// Model averaging over the dropconnect layer: its pre-activation is drawn
/// per unit from N(p W a + b, p(1-p) (W o W)(a o a)), the rest of the pass is
/// deterministic, and the softmax outputs of num_samples draws are averaged.
/// Exactly one layer must be flagged in `dc`.
inline VectorXd gaussian_inference(const Mlp& net, const VectorXd& input,
                                   const DropconnectConfig& dc, std::size_t num_samples,
                                   std::uint64_t seed) {
  std::optional<std::size_t> layer;
  for (std::size_t l = 0; l < dc.layers.size(); ++l) {
    if (!dc.layers[l].enabled) continue;
    if (layer) throw ConfigError("gaussian_inference: more than one dropconnect layer flagged");
    layer = l;
  }
  if (!layer) throw ConfigError("gaussian_inference: no dropconnect layer flagged");
  if (num_samples == 0) throw ParameterError("gaussian_inference: num_samples must be >= 1");
  const std::size_t k = *layer;
  const std::size_t num = net.weights.size();
  const double p = dc.layers[k].keep;

  VectorXd a = input;
  for (std::size_t l = 0; l < k; ++l) {
    VectorXd z = detail::affine(net.weights[l], a, nullptr);
    detail::activate(z, false);
    a = std::move(z);
  }
  const MatrixXd& w = net.weights[k];
  const Eigen::Index n = w.cols() - 1;
  if (a.size() != n) throw ParameterError("gaussian_inference: input width mismatch");
  const VectorXd mean = p * (w.leftCols(n) * a) + w.col(n);
  const VectorXd sd =
      (p * (1.0 - p) * (w.leftCols(n).array().square().matrix() * a.array().square().matrix()))
          .array()
          .sqrt();

  Rng rng(seed);
  VectorXd avg = VectorXd::Zero(net.weights.back().rows());
  for (std::size_t s = 0; s < num_samples; ++s) {
    VectorXd z(mean.size());
    for (Eigen::Index u = 0; u < z.size(); ++u) z[u] = mean[u] + sd[u] * standard_normal(rng);
    detail::activate(z, k + 1 == num);
    for (std::size_t l = k + 1; l < num; ++l) {
      VectorXd next = detail::affine(net.weights[l], z, nullptr);
      detail::activate(next, l + 1 == num);
      z = std::move(next);
    }
    avg += z;
  }
  return avg / static_cast<double>(num_samples);
}

enum class InferenceMode { kPlain, kMeanField, kGaussian };

struct InferenceSpec {
  InferenceMode mode = InferenceMode::kPlain;
  DropconnectConfig dropconnect;
  std::size_t samples = 100;
  std::uint64_t seed = 0;  // Gaussian mode: example k uses sub-seed ("gauss", k)
};

inline VectorXd predict_proba(const Mlp& net, const VectorXd& x, const InferenceSpec& spec,
                              std::size_t example_index = 0) {
  switch (spec.mode) {
    case InferenceMode::kMeanField:
      return forward_mean_field(net, x, spec.dropconnect);
    case InferenceMode::kGaussian:
      return gaussian_inference(net, x, spec.dropconnect, spec.samples,
                                derive_seed(spec.seed, "gauss", example_index));
    case InferenceMode::kPlain:
    default:
      return forward(net, x).output();
  }
}

/// Predicted class per example.
inline std::vector<int> predict(const Mlp& net, const Dataset& data, const InferenceSpec& spec = {},
                                unsigned threads = 1) {
  std::vector<int> out(data.size());
  parallel_for(data.size(), threads, [&](std::size_t r) {
    const VectorXd x = data.inputs.row(static_cast<Eigen::Index>(r)).transpose();
    out[r] = argmax(predict_proba(net, x, spec, r));
  });
  return out;
}

/// Fraction of misclassified examples.
inline double test_error(const Mlp& net, const Dataset& data, const InferenceSpec& spec = {},
                         unsigned threads = 1) {
  if (data.empty()) throw ParameterError("test_error: empty dataset");
  const auto pred = predict(net, data, spec, threads);
  std::size_t wrong = 0;
  for (std::size_t r = 0; r < pred.size(); ++r) wrong += pred[r] != data.labels[r] ? 1 : 0;
  return static_cast<double>(wrong) / static_cast<double>(data.size());
}

/// Mean cross-entropy over a dataset under the given inference mode.
inline double mean_loss(const Mlp& net, const Dataset& data, const InferenceSpec& spec = {}) {
  CompensatedSum s;
  for (std::size_t r = 0; r < data.size(); ++r) {
    const VectorXd x = data.inputs.row(static_cast<Eigen::Index>(r)).transpose();
    s += cross_entropy(predict_proba(net, x, spec, r), data.labels[r]);
  }
  return s.value() / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Training

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double test_error = 0.0;
};

struct TrainResult {
  Mlp net;
  std::vector<EpochStats> curve;
};

/// Minibatch SGD, W <- W - rate * (mean gradient over the batch). Epoch e
/// shuffles with sub-seed ("epoch", e) and draws dropconnect masks (one set
/// per example, shared by its forward and backward pass) from ("masks", e).
/// After every epoch the curve records the training loss and the test error,
/// both in mean-field inference mode. A non-finite loss aborts with
/// NumericalError.
inline TrainResult train(Mlp net, const Dataset& train_set, const Dataset* test_set,
                         const TrainConfig& config, const DropconnectConfig& dropconnect,
                         const FeedbackConfig& feedback) {
  config.validate();
  if (train_set.empty()) throw ParameterError("train: empty training set");
  const auto arch = net.architecture();
  dropconnect.validate(net.num_weight_layers());
  if (train_set.dim() != arch.input_width())
    throw ParameterError("train: input width does not match architecture");
  if (train_set.num_classes() > static_cast<int>(arch.num_classes()))
    throw ParameterError("train: labels exceed the output width");

  const auto n_out = static_cast<Eigen::Index>(arch.num_classes());
  InferenceSpec eval{InferenceMode::kMeanField, dropconnect, 0, 0};
  TrainResult result;
  Gradients acc(net.weights.size());
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double rate = config.rate_at(epoch);
    Rng shuffle_rng(derive_seed(config.seed, "epoch", epoch));
    shuffle(std::span(order), shuffle_rng);
    Rng mask_rng(derive_seed(config.seed, "masks", epoch));

    for (std::size_t start = 0; start < order.size(); start += config.minibatch) {
      const std::size_t stop = std::min(order.size(), start + config.minibatch);
      for (std::size_t l = 0; l < acc.size(); ++l) acc[l].setZero(net.weights[l].rows(), net.weights[l].cols());
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t r = order[k];
        const LayerMasks masks = sample_masks(net, dropconnect, mask_rng);
        const VectorXd x = train_set.inputs.row(static_cast<Eigen::Index>(r)).transpose();
        const Activations act = forward(net, x, masks);
        VectorXd target = VectorXd::Zero(n_out);
        target[train_set.labels[r]] = 1.0;
        const Gradients g = backward(net, act, target, feedback, masks);
        for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += g[l];
      }
      if (rate != 0.0) {
        const double step = rate / static_cast<double>(stop - start);
        for (std::size_t l = 0; l < acc.size(); ++l) net.weights[l] -= step * acc[l];
      }
    }

    EpochStats st;
    st.epoch = epoch + 1;
    st.train_loss = mean_loss(net, train_set, eval);
    st.test_error = (test_set && !test_set->empty()) ? test_error(net, *test_set, eval) : NAN;
    if (!std::isfinite(st.train_loss))
      throw NumericalError("train: loss became non-finite at epoch " + std::to_string(epoch + 1));
    result.curve.push_back(st);
  }
  result.net = std::move(net);
  return result;
}

inline Table curve_table(const std::vector<EpochStats>& curve) {
  Table t({"epoch", "train_loss", "test_error"});
  for (const auto& s : curve)
    t.add_row() << static_cast<std::uint64_t>(s.epoch) << s.train_loss << s.test_error;
  return t;
}

// ---------------------------------------------------------------------------
// Dilution

/// Copy of `net` with each connection of layer l zeroed independently with
/// probability removal[l] (sub-seed ("dilute", l) of cfg.seed). Bias columns
/// are kept.
inline Mlp dilute(const Mlp& net, const DilutionConfig& cfg) {
  if (cfg.removal.size() != net.weights.size())
    throw ParameterError("dilute: one removal probability per weight layer required");
  Mlp out = net;
  for (std::size_t l = 0; l < out.weights.size(); ++l) {
    const double p = cfg.removal[l];
    if (!(p >= 0.0 && p <= 1.0)) throw ParameterError("dilute: probabilities must lie in [0,1]");
    if (p == 0.0) continue;
    MatrixXd& w = out.weights[l];
    Rng rng(derive_seed(cfg.seed, "dilute", l));
    for (Eigen::Index c = 0; c + 1 < w.cols(); ++c)
      for (Eigen::Index r = 0; r < w.rows(); ++r)
        if (uniform01(rng) < p) w(r, c) = 0.0;
  }
  return out;
}

struct DilutionRow {
  std::vector<double> removal;
  MeanStderr error;
  std::size_t replicates = 0;
};

/// Test error averaged over independent dilution replicates per grid point.
/// Replicate k of grid point g uses dilution seed ("dilution", g, k).
inline std::vector<DilutionRow> dilution_sweep(const Mlp& net,
                                               const std::vector<std::vector<double>>& grid,
                                               std::size_t replicates, const Dataset& data,
                                               std::uint64_t seed, unsigned threads = 1) {
  if (replicates == 0) throw ParameterError("dilution_sweep: need at least one replicate");
  std::vector<double> errors(grid.size() * replicates);
  parallel_for(errors.size(), threads, [&](std::size_t task) {
    const std::size_t g = task / replicates, k = task % replicates;
    const Mlp diluted = dilute(net, {grid[g], derive_seed(seed, "dilution", g, k)});
    errors[task] = test_error(diluted, data);
  });
  std::vector<DilutionRow> rows;
  for (std::size_t g = 0; g < grid.size(); ++g)
    rows.push_back({grid[g],
                    mean_stderr(std::span<const double>(errors).subspan(g * replicates, replicates)),
                    replicates});
  return rows;
}

inline Table dilution_table(const std::vector<DilutionRow>& rows, std::size_t num_weight_layers) {
  std::vector<std::string> header;
  for (std::size_t l = 0; l < num_weight_layers; ++l) header.push_back("p" + std::to_string(l + 1));
  for (const char* c : {"err_mean", "err_stderr", "replicates"}) header.emplace_back(c);
  Table t(std::move(header));
  for (const auto& r : rows) {
    auto row = t.add_row();
    for (double p : r.removal) row << p;
    row << r.error.mean << r.error.sem << static_cast<std::uint64_t>(r.replicates);
  }
  return t;
}

// ---------------------------------------------------------------------------
// Path products

struct PathStats {
  std::vector<double> products;
  double min = 0.0, max = 0.0;
  std::vector<double> bin_edges;  // num_bins + 1 edges over [min, max]
  std::vector<std::uint64_t> counts;
  double sign_balance = 0.0;  // fraction of strictly positive products

  /// Fraction of products with |x| <= half_width_fraction * (max - min).
  double fraction_near_zero(double half_width_fraction) const {
    const double hw = half_width_fraction * (max - min);
    std::size_t k = 0;
    for (double x : products) k += std::abs(x) <= hw ? 1 : 0;
    return products.empty() ? 0.0 : static_cast<double>(k) / static_cast<double>(products.size());
  }
};

/// Samples uniform input-to-output paths (one unit per layer) and records the
/// product of the connection weights along each (biases excluded).
inline PathStats path_product_histogram(const Mlp& net, std::size_t num_paths,
                                        std::size_t num_bins, std::uint64_t seed) {
  if (num_paths == 0 || num_bins == 0)
    throw ParameterError("path_product_histogram: need paths and bins");
  const auto arch = net.architecture();
  Rng rng(derive_seed(seed, "paths"));
  PathStats st;
  st.products.reserve(num_paths);
  std::size_t positive = 0;
  for (std::size_t k = 0; k < num_paths; ++k) {
    auto unit = static_cast<Eigen::Index>(uniform_index(rng, arch.widths[0]));
    double prod = 1.0;
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
      const auto next = static_cast<Eigen::Index>(uniform_index(rng, arch.widths[l + 1]));
      prod *= net.weights[l](next, unit);
      unit = next;
    }
    positive += prod > 0.0 ? 1 : 0;
    st.products.push_back(prod);
  }
  st.sign_balance = static_cast<double>(positive) / static_cast<double>(num_paths);
  const auto [lo, hi] = std::minmax_element(st.products.begin(), st.products.end());
  st.min = *lo;
  st.max = *hi;
  const double width = (st.max > st.min) ? (st.max - st.min) / static_cast<double>(num_bins) : 1.0;
  st.bin_edges.resize(num_bins + 1);
  for (std::size_t b = 0; b <= num_bins; ++b) st.bin_edges[b] = st.min + width * static_cast<double>(b);
  st.counts.assign(num_bins, 0);
  for (double x : st.products) {
    auto b = static_cast<std::size_t>((x - st.min) / width);
    ++st.counts[std::min(b, num_bins - 1)];
  }
  return st;
}

inline Table path_table(const PathStats& st) {
  Table t({"bin_lo", "bin_hi", "count"});
  for (std::size_t b = 0; b < st.counts.size(); ++b)
    t.add_row() << st.bin_edges[b] << st.bin_edges[b + 1] << st.counts[b];
  return t;
}

// ---------------------------------------------------------------------------
// Checkpoints: text, hex-float entries so a save/load cycle is exact.
//
//   RAPNET-MLP v1
//   arch 784-100-200-10
//   layer <l> <rows> <cols>
//   <cols hex floats per line, one line per row>

inline std::string save_checkpoint(const Mlp& net) {
  std::string out = "RAPNET-MLP v1\narch " + net.architecture().to_string() + "\n";
  char buf[40];
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    const MatrixXd& w = net.weights[l];
    out += "layer " + std::to_string(l) + " " + std::to_string(w.rows()) + " " +
           std::to_string(w.cols()) + "\n";
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        std::snprintf(buf, sizeof buf, "%a", w(r, c));
        if (c) out += ' ';
        out += buf;
      }
      out += '\n';
    }
  }
  return out;
}

inline Mlp load_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string magic, version, key, arch_text;
  if (!(in >> magic >> version) || magic != "RAPNET-MLP")
    throw ParseError(ParseError::Kind::kBadMagic, "checkpoint: missing RAPNET-MLP header");
  if (version != "v1") throw ParseError(ParseError::Kind::kSyntax, "checkpoint: unknown version");
  if (!(in >> key >> arch_text) || key != "arch")
    throw ParseError(ParseError::Kind::kSyntax, "checkpoint: missing arch line");
  NetArchitecture arch;
  try {
    arch = NetArchitecture::parse(arch_text);
  } catch (const ParameterError& e) {
    throw ParseError(ParseError::Kind::kSyntax, std::string("checkpoint: ") + e.what());
  }
  Mlp net;
  for (std::size_t l = 0; l < arch.num_weight_layers(); ++l) {
    std::size_t idx = 0, rows = 0, cols = 0;
    if (!(in >> key >> idx >> rows >> cols) || key != "layer" || idx != l)
      throw ParseError(ParseError::Kind::kTruncated, "checkpoint: missing layer " + std::to_string(l));
    if (rows != arch.widths[l + 1] || cols != arch.widths[l] + 1)
      throw ParseError(ParseError::Kind::kSyntax, "checkpoint: layer shape disagrees with arch");
    MatrixXd w(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    std::string tok;
    for (Eigen::Index k = 0; k < w.size(); ++k) {
      if (!(in >> tok)) throw ParseError(ParseError::Kind::kTruncated, "checkpoint: short layer");
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0')
        throw ParseError(ParseError::Kind::kSyntax, "checkpoint: bad number '" + tok + "'");
      w(k / w.cols(), k % w.cols()) = v;
    }
    net.weights.push_back(std::move(w));
  }
  return net;
}

}  // namespace rapnet

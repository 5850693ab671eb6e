// sasv/backends.hpp

// Copyright 2026  The sasv-toolkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Countermeasure back-ends.  Both map a T x D feature sequence to a fixed
// size embedding and a two-way (bona fide, spoof) classifier output:
//
//   ASP: scalar frame attention -> weighted mean || weighted std -> linear
//        projection to the embedding -> classifier
//   MLP: temporal mean -> 3 x (FC + leaky ReLU) -> classifier

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sasv/errors.hpp"
#include "sasv/metrics.hpp"
#include "sasv/tensor.hpp"
#include "sasv/types.hpp"

namespace sasv {

inline constexpr std::size_t kBonafideClass = 0;
inline constexpr std::size_t kSpoofClass = 1;
inline constexpr double kDefaultSigmaFloor = 1e-9;

// ---------------------------------------------------------------------------
// Attentive statistics pooling

/// Frame scorer: s_t = w2 . tanh(W1 h_t + b1) + b2.
struct AspAttention {
  DenseLayer hidden;  // D -> A
  DenseLayer out;     // A -> 1

  ParamList params() {
    ParamList p = hidden.params();
    for (auto s : out.params()) p.push_back(s);
    return p;
  }
  AspAttention zeros_like() const { return {hidden.zeros_like(), out.zeros_like()}; }
  friend bool operator==(const AspAttention&, const AspAttention&) = default;
};

struct AspPoolTrace {
  Matrix activations;  // T x A, tanh outputs
  Vector weights;      // T, softmax over frames
  Vector mean;         // D
  Vector variance;     // D, before the floor
  Vector stats;        // 2D, mean || std
};

inline AspPoolTrace asp_pool_forward(const Matrix& features, const AspAttention& attention,
                                     double sigma_floor = kDefaultSigmaFloor) {
  if (features.cols() != attention.hidden.in_dim())
    throw ShapeError("asp_pool: features " + features.shape() + " do not match attention input " +
                     std::to_string(attention.hidden.in_dim()));
  const std::size_t frames = features.rows(), dim = features.cols();
  AspPoolTrace tr;
  tr.activations = dense_apply(attention.hidden, features);
  for (double& a : tr.activations.data()) a = std::tanh(a);
  Vector scores(frames);
  for (std::size_t t = 0; t < frames; ++t)
    scores[t] = dense_apply(attention.out, tr.activations.row(t))[0];
  tr.weights = softmax(scores);

  tr.mean.assign(dim, 0.0);
  Vector second(dim, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto h = features.row(t);
    for (std::size_t j = 0; j < dim; ++j) {
      tr.mean[j] += tr.weights[t] * h[j];
      second[j] += tr.weights[t] * h[j] * h[j];
    }
  }
  tr.variance.resize(dim);
  tr.stats.resize(2 * dim);
  for (std::size_t j = 0; j < dim; ++j) {
    tr.variance[j] = second[j] - tr.mean[j] * tr.mean[j];
    tr.stats[j] = tr.mean[j];
    tr.stats[dim + j] = std::sqrt(std::max(tr.variance[j], sigma_floor));
  }
  return tr;
}

/// Weighted mean || weighted standard deviation, length 2D.
inline Vector asp_pool(const Matrix& features, const AspAttention& attention,
                       double sigma_floor = kDefaultSigmaFloor) {
  return asp_pool_forward(features, attention, sigma_floor).stats;
}

/// Accumulates scorer gradients for dL/dstats into `grad`.
inline void asp_pool_backward(const Matrix& features, const AspAttention& attention,
                              const AspPoolTrace& tr, std::span<const double> dstats,
                              AspAttention& grad, double sigma_floor = kDefaultSigmaFloor) {
  const std::size_t frames = features.rows(), dim = features.cols();
  if (dstats.size() != 2 * dim) throw ShapeError("asp_pool_backward: gradient length mismatch");

  // sigma = sqrt(max(var, floor)); the floor branch has zero slope.
  Vector dvar(dim, 0.0), dmean(dim, 0.0);
  for (std::size_t j = 0; j < dim; ++j) {
    if (tr.variance[j] > sigma_floor) dvar[j] = dstats[dim + j] * 0.5 / tr.stats[dim + j];
    // var = E[h^2] - mean^2
    dmean[j] = dstats[j] - 2.0 * tr.mean[j] * dvar[j];
  }
  Vector dweights(frames, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto h = features.row(t);
    double g = 0.0;
    for (std::size_t j = 0; j < dim; ++j) g += dmean[j] * h[j] + dvar[j] * h[j] * h[j];
    dweights[t] = g;
  }
  const Vector dscores = softmax_backward(tr.weights, dweights);
  for (std::size_t t = 0; t < frames; ++t) {
    const double ds = dscores[t];
    const auto a = tr.activations.row(t);
    const Vector da = dense_backward(attention.out, a, std::span<const double>(&ds, 1), grad.out);
    Vector dz(da.size());
    for (std::size_t k = 0; k < da.size(); ++k) dz[k] = da[k] * (1.0 - a[k] * a[k]);
    dense_backward(attention.hidden, features.row(t), dz, grad.hidden);
  }
}

struct AspDims {
  std::size_t feature_dim = 1024;
  std::size_t attention_dim = 128;
  std::size_t embedding_dim = 160;
};

struct AspBackend {
  AspAttention attention;
  DenseLayer projection;  // 2D -> E
  DenseLayer classifier;  // E -> 2
  double sigma_floor = kDefaultSigmaFloor;

  static constexpr BackendKind kind = BackendKind::kAsp;

  static AspBackend init(const AspDims& d, Rng& rng) {
    AspBackend b;
    b.attention.hidden = make_dense(d.feature_dim, d.attention_dim, rng);
    b.attention.out = make_dense(d.attention_dim, 1, rng);
    b.projection = make_dense(2 * d.feature_dim, d.embedding_dim, rng);
    b.classifier = make_dense(d.embedding_dim, 2, rng);
    return b;
  }

  std::size_t feature_dim() const { return attention.hidden.in_dim(); }
  std::size_t embedding_dim() const { return projection.out_dim(); }

  ParamList params() {
    ParamList p = attention.params();
    for (auto s : projection.params()) p.push_back(s);
    for (auto s : classifier.params()) p.push_back(s);
    return p;
  }
  AspBackend zeros_like() const {
    return {attention.zeros_like(), projection.zeros_like(), classifier.zeros_like(), sigma_floor};
  }
  friend bool operator==(const AspBackend&, const AspBackend&) = default;
};

// ---------------------------------------------------------------------------
// MLP

struct MlpDims {
  std::size_t feature_dim = 1024;
  std::size_t hidden_dim = 1024;
};

struct MlpBackend {
  std::array<DenseLayer, 3> layers;  // D -> H -> H -> H
  DenseLayer classifier;             // H -> 2
  double slope = kDefaultLeakySlope;

  static constexpr BackendKind kind = BackendKind::kMlp;

  static MlpBackend init(const MlpDims& d, Rng& rng, double slope = kDefaultLeakySlope) {
    MlpBackend b;
    b.layers[0] = make_dense(d.feature_dim, d.hidden_dim, rng);
    b.layers[1] = make_dense(d.hidden_dim, d.hidden_dim, rng);
    b.layers[2] = make_dense(d.hidden_dim, d.hidden_dim, rng);
    b.classifier = make_dense(d.hidden_dim, 2, rng);
    b.slope = slope;
    return b;
  }

  std::size_t feature_dim() const { return layers[0].in_dim(); }
  std::size_t embedding_dim() const { return layers[2].out_dim(); }

  ParamList params() {
    ParamList p;
    for (auto& l : layers)
      for (auto s : l.params()) p.push_back(s);
    for (auto s : classifier.params()) p.push_back(s);
    return p;
  }
  MlpBackend zeros_like() const {
    return {{layers[0].zeros_like(), layers[1].zeros_like(), layers[2].zeros_like()},
            classifier.zeros_like(),
            slope};
  }
  friend bool operator==(const MlpBackend&, const MlpBackend&) = default;
};

inline Vector temporal_mean(const Matrix& features) {
  Vector m(features.cols(), 0.0);
  for (std::size_t t = 0; t < features.rows(); ++t) {
    const auto h = features.row(t);
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += h[j];
  }
  for (double& v : m) v /= static_cast<double>(features.rows());
  return m;
}

// ---------------------------------------------------------------------------
// Embedding, scoring, loss

template <class Backend>
void check_feature_dim(const Backend& b, const Matrix& features) {
  if (features.cols() != b.feature_dim())
    throw ShapeError("cm_embed: features " + features.shape() + " but back-end expects dim " +
                     std::to_string(b.feature_dim()));
}

inline Vector embed(const AspBackend& b, const Matrix& features) {
  check_feature_dim(b, features);
  return dense_apply(b.projection, asp_pool(features, b.attention, b.sigma_floor));
}

inline Vector embed(const MlpBackend& b, const Matrix& features) {
  check_feature_dim(b, features);
  Vector x = temporal_mean(features);
  for (const auto& l : b.layers) x = leaky_relu(dense_apply(l, x), b.slope);
  return x;
}

template <class Backend>
CmEmbedding cm_embed(const Backend& b, const FeatureMatrix& features) {
  return {features.utterance_id, embed(b, features.values), Backend::kind};
}

/// logit(bona fide) - logit(spoof).
template <class Backend>
double cm_score(const Backend& b, std::span<const double> embedding) {
  if (embedding.size() != b.classifier.in_dim())
    throw ShapeError("cm_score: embedding length " + std::to_string(embedding.size()) +
                     " but classifier expects " + std::to_string(b.classifier.in_dim()));
  const Vector logits = dense_apply(b.classifier, embedding);
  return logits[kBonafideClass] - logits[kSpoofClass];
}

template <class Backend>
double cm_score(const Backend& b, const CmEmbedding& e) {
  return cm_score(b, std::span<const double>(e.values));
}

struct CmClassWeights {
  double bonafide = 0.9;
  double spoof = 0.1;

  double of(Label l) const { return is_bona_fide(l) ? bonafide : spoof; }
};

/// -log softmax(logits)[target]; writes dL/dlogits scaled by `scale`.
inline double cross_entropy(std::span<const double> logits, std::size_t target, double scale,
                            Vector& dlogits) {
  const Vector p = softmax(logits);
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - m);
  const double loss = -(logits[target] - m - std::log(z));
  dlogits.resize(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) dlogits[k] = scale * (p[k] - (k == target ? 1.0 : 0.0));
  return loss;
}

/**
   Unnormalized cross-entropy of one utterance.  When `grad` is set,
   accumulates `scale` * dCE/dparams into it.
*/
inline double cm_example_loss(const AspBackend& b, const Matrix& features, Label label,
                              double scale, AspBackend* grad) {
  check_feature_dim(b, features);
  const AspPoolTrace tr = asp_pool_forward(features, b.attention, b.sigma_floor);
  const Vector emb = dense_apply(b.projection, tr.stats);
  const Vector logits = dense_apply(b.classifier, emb);
  Vector dlogits;
  const double loss =
      cross_entropy(logits, is_bona_fide(label) ? kBonafideClass : kSpoofClass, scale, dlogits);
  if (grad) {
    const Vector demb = dense_backward(b.classifier, emb, dlogits, grad->classifier);
    const Vector dstats = dense_backward(b.projection, tr.stats, demb, grad->projection);
    asp_pool_backward(features, b.attention, tr, dstats, grad->attention, b.sigma_floor);
  }
  return loss;
}

inline double cm_example_loss(const MlpBackend& b, const Matrix& features, Label label,
                              double scale, MlpBackend* grad) {
  check_feature_dim(b, features);
  std::array<Vector, 4> inputs;  // input of each FC layer
  std::array<Vector, 3> pre;     // pre-activations
  inputs[0] = temporal_mean(features);
  for (std::size_t k = 0; k < 3; ++k) {
    pre[k] = dense_apply(b.layers[k], inputs[k]);
    inputs[k + 1] = leaky_relu(pre[k], b.slope);
  }
  const Vector logits = dense_apply(b.classifier, inputs[3]);
  Vector dlogits;
  const double loss =
      cross_entropy(logits, is_bona_fide(label) ? kBonafideClass : kSpoofClass, scale, dlogits);
  if (grad) {
    Vector d = dense_backward(b.classifier, inputs[3], dlogits, grad->classifier);
    for (std::size_t k = 3; k-- > 0;) {
      d = leaky_relu_backward(pre[k], d, b.slope);
      d = dense_backward(b.layers[k], inputs[k], d, grad->layers[k]);
    }
  }
  return loss;
}

struct CmExample {
  FeatureMatrix features;
  Label label = Label::kBonafide;
  std::optional<std::string> attack;
};

/**
   Class-weighted mean cross-entropy sum_i w_i CE_i / sum_i w_i over a batch.
   When `grad` is set it receives the gradient of that quantity (it is
   zeroed first).  `inputs` may override each example's feature matrix
   (e.g. with a crop); otherwise the stored features are used.
*/
template <class Backend>
double cm_batch_loss(const Backend& b, std::span<const CmExample* const> batch,
                     const CmClassWeights& weights, Backend* grad,
                     std::span<const Matrix> inputs = {}) {
  if (batch.empty()) throw DataError("cm_batch_loss: empty batch");
  double total_weight = 0.0;
  for (const CmExample* ex : batch) total_weight += weights.of(ex->label);
  if (!(total_weight > 0.0)) throw DataError("cm_batch_loss: class weights sum to zero");
  if (grad) zero_fill(grad->params());
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double w = weights.of(batch[i]->label) / total_weight;
    const Matrix& x = inputs.empty() ? batch[i]->features.values : inputs[i];
    loss += w * cm_example_loss(b, x, batch[i]->label, w, grad);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Training

/// Random window of `frames` rows; shorter inputs are tiled up to length.
inline Matrix crop_or_tile(const Matrix& features, std::size_t frames, Rng& rng) {
  if (frames == 0 || features.rows() == frames) return features;
  Matrix out(frames, features.cols());
  std::size_t start = 0;
  if (features.rows() > frames) {
    std::uniform_int_distribution<std::size_t> pick(0, features.rows() - frames);
    start = pick(rng);
  }
  for (std::size_t t = 0; t < frames; ++t) {
    const auto src = features.row((start + t) % features.rows());
    std::copy(src.begin(), src.end(), out.row(t).begin());
  }
  return out;
}

struct CmTrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1234;
  CmClassWeights class_weights;
  std::size_t crop_frames = 200;  // 0 disables cropping
};

struct CmEpochRecord {
  std::size_t epoch;
  double train_loss;  // mean over minibatches
  double dev_eer;     // percent
};

template <class Backend>
struct CmTrainResult {
  Backend model;  // checkpoint with the lowest dev EER
  std::size_t best_epoch = 0;
  std::vector<CmEpochRecord> history;
};

template <class Backend>
std::vector<ScoreRecord> score_cm_examples(const Backend& b, std::span<const CmExample> examples) {
  std::vector<ScoreRecord> out;
  out.reserve(examples.size());
  for (const auto& ex : examples)
    out.push_back({std::nullopt, ex.features.utterance_id, cm_score(b, embed(b, ex.features.values)),
                   ex.label, ex.attack});
  return out;
}

template <class Backend>
double cm_pooled_eer(const Backend& b, std::span<const CmExample> examples) {
  const auto scores = score_cm_examples(b, examples);
  std::vector<double> bona, spoof;
  for (const auto& r : scores) (is_bona_fide(r.label) ? bona : spoof).push_back(r.score);
  return compute_eer(bona, spoof).eer;
}

inline void check_cm_set(std::span<const CmExample> set, const char* name) {
  if (set.empty()) throw DataError(std::string("train_cm: ") + name + " set is empty");
  bool has_bona = false, has_spoof = false;
  for (const auto& ex : set) (is_bona_fide(ex.label) ? has_bona : has_spoof) = true;
  if (!has_bona || !has_spoof)
    throw DataError(std::string("train_cm: ") + name + " set needs both bona fide and spoof");
}

/**
   Minibatch Adam on the class-weighted cross-entropy.  Every epoch
   reshuffles the training set, draws a fresh crop per utterance, and scores
   the full-length dev set; the model from the epoch with the lowest dev
   pooled EER is returned (earliest on ties).
*/
template <class Backend>
CmTrainResult<Backend> train_cm(Backend model, std::span<const CmExample> train,
                                std::span<const CmExample> dev, const CmTrainConfig& cfg) {
  check_cm_set(train, "training");
  check_cm_set(dev, "dev");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_cm: batch size must be >= 1");

  Rng rng(cfg.seed);
  Backend grad = model.zeros_like();
  AdamState adam(model.params());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  CmTrainResult<Backend> result{model, 0, {}};
  double best_eer = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<const CmExample*> batch;
      std::vector<Matrix> inputs;
      for (std::size_t i = start; i < stop; ++i) {
        batch.push_back(&train[order[i]]);
        inputs.push_back(crop_or_tile(train[order[i]].features.values, cfg.crop_frames, rng));
      }
      const double loss = cm_batch_loss<Backend>(model, batch, cfg.class_weights, &grad, inputs);
      if (!std::isfinite(loss))
        throw TrainingError("train_cm: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches) + " (first utterance " +
                            batch.front()->features.utterance_id + ")");
      adam_update(model.params(), grad.params(), adam, cfg.learning_rate);
      loss_sum += loss;
      ++batches;
    }
    const double dev_eer = cm_pooled_eer(model, dev);
    result.history.push_back({epoch, loss_sum / static_cast<double>(batches), dev_eer});
    if (dev_eer < best_eer) {
      best_eer = dev_eer;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace sasv

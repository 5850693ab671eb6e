// sasv/rssd.hpp

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

/*
   Representation selective self-distillation.

   A countermeasure embedding c_t of the test utterance is mapped by a small
   MLP f to a mask u with the speaker embedding's dimension.  The test
   speaker embedding is gated elementwise, g = u (*) e_t, and a trial is
   scored by cosine(e_e, g).  Training only touches f; the speaker and
   countermeasure embeddings are fixed inputs.

     bona fide test (target or nontarget):  L = -cos(e_t, g)
     spoofed test:                          L = +cos(e_e, g)
*/

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sasv/embedding_store.hpp"
#include "sasv/errors.hpp"
#include "sasv/metrics.hpp"
#include "sasv/tensor.hpp"
#include "sasv/types.hpp"

namespace sasv {

enum class GateKind : std::uint32_t { kHadamard = 1 };

struct RssdDims {
  std::size_t cm_dim = 160;
  std::size_t hidden_dim = 256;
  std::size_t speaker_dim = 192;
};

struct RssdModel {
  std::array<DenseLayer, 3> layers;  // E -> H -> H -> S, no activation on the output
  double slope = kDefaultLeakySlope;
  GateKind gate = GateKind::kHadamard;

  static RssdModel init(const RssdDims& d, Rng& rng, double slope = kDefaultLeakySlope) {
    RssdModel m;
    m.layers[0] = make_dense(d.cm_dim, d.hidden_dim, rng);
    m.layers[1] = make_dense(d.hidden_dim, d.hidden_dim, rng);
    m.layers[2] = make_dense(d.hidden_dim, d.speaker_dim, rng);
    m.slope = slope;
    return m;
  }

  std::size_t cm_dim() const { return layers[0].in_dim(); }
  std::size_t speaker_dim() const { return layers[2].out_dim(); }

  ParamList params() {
    ParamList p;
    for (auto& l : layers)
      for (auto s : l.params()) p.push_back(s);
    return p;
  }
  RssdModel zeros_like() const {
    return {{layers[0].zeros_like(), layers[1].zeros_like(), layers[2].zeros_like()}, slope, gate};
  }
  friend bool operator==(const RssdModel&, const RssdModel&) = default;
};

/// f(c_t).
inline Vector transform(const RssdModel& m, std::span<const double> cm) {
  if (cm.size() != m.cm_dim())
    throw ShapeError("transform: countermeasure embedding length " + std::to_string(cm.size()) +
                     " but model expects " + std::to_string(m.cm_dim()));
  Vector x = dense_apply(m.layers[0], cm);
  x = dense_apply(m.layers[1], leaky_relu(x, m.slope));
  return dense_apply(m.layers[2], leaky_relu(x, m.slope));
}

inline Vector gate(std::span<const double> mask, std::span<const double> speaker) {
  if (mask.size() != speaker.size())
    throw ShapeError("gate: mask length " + std::to_string(mask.size()) +
                     " vs speaker embedding length " + std::to_string(speaker.size()));
  Vector g(mask.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = mask[i] * speaker[i];
  return g;
}

/// Counts trials whose similarity fell back to -1 because an operand had zero norm.
struct ScoreDiagnostics {
  std::size_t zero_norm = 0;
};

inline double cosine(std::span<const double> a, std::span<const double> b,
                     ScoreDiagnostics* diag = nullptr) {
  const double na = l2_norm(a), nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    if (diag) ++diag->zero_norm;
    return -1.0;
  }
  return dot(a, b) / (na * nb);
}

/// cosine(e_e, f(c_t) (*) e_t).
inline double sasv_score(const RssdModel& m, std::span<const double> enroll,
                         std::span<const double> test, std::span<const double> cm,
                         ScoreDiagnostics* diag = nullptr) {
  if (enroll.size() != test.size())
    throw ShapeError("sasv_score: enrollment length " + std::to_string(enroll.size()) +
                     " vs test length " + std::to_string(test.size()));
  return cosine(enroll, gate(transform(m, cm), test), diag);
}

inline double loss_rdistill(const RssdModel& m, std::span<const double> test,
                            std::span<const double> cm) {
  return -cosine(test, gate(transform(m, cm), test));
}

inline double loss_spoof(const RssdModel& m, std::span<const double> enroll,
                         std::span<const double> test, std::span<const double> cm) {
  return sasv_score(m, enroll, test, cm);
}

/**
   Loss of one trial with optional gradient.  `reference` is e_t for the
   bona fide branch and e_e for the spoof branch; `sign` is -1 and +1
   respectively.  Accumulates `scale` * dL/dparams into `grad` if set.
*/
inline double rssd_branch_loss(const RssdModel& m, std::span<const double> reference,
                               std::span<const double> test, std::span<const double> cm,
                               double sign, double scale, RssdModel* grad) {
  if (cm.size() != m.cm_dim() || test.size() != m.speaker_dim() ||
      reference.size() != m.speaker_dim())
    throw ShapeError("rssd loss: embedding lengths (" + std::to_string(reference.size()) + ", " +
                     std::to_string(test.size()) + ", " + std::to_string(cm.size()) +
                     ") do not match model (" + std::to_string(m.speaker_dim()) + ", " +
                     std::to_string(m.cm_dim()) + ")");
  std::array<Vector, 3> inputs;
  std::array<Vector, 2> pre;
  inputs[0].assign(cm.begin(), cm.end());
  for (std::size_t k = 0; k < 2; ++k) {
    pre[k] = dense_apply(m.layers[k], inputs[k]);
    inputs[k + 1] = leaky_relu(pre[k], m.slope);
  }
  const Vector mask = dense_apply(m.layers[2], inputs[2]);
  const Vector g = gate(mask, test);
  const double nr = l2_norm(reference), ng = l2_norm(g);
  if (nr == 0.0 || ng == 0.0) return sign * -1.0;
  const double c = dot(reference, g) / (nr * ng);
  if (grad) {
    Vector dmask(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double dg = reference[i] / (nr * ng) - c * g[i] / (ng * ng);
      dmask[i] = scale * sign * dg * test[i];
    }
    Vector d = dense_backward(m.layers[2], inputs[2], dmask, grad->layers[2]);
    for (std::size_t k = 2; k-- > 0;) {
      d = leaky_relu_backward(pre[k], d, m.slope);
      d = dense_backward(m.layers[k], inputs[k], d, grad->layers[k]);
    }
  }
  return sign * c;
}

/// Embedding lookup for one trial set: enrollment models, test speaker
/// embeddings and test countermeasure embeddings.
struct SasvEmbeddings {
  const EmbeddingStore* enrollment = nullptr;
  const EmbeddingStore* speaker = nullptr;
  const EmbeddingStore* cm = nullptr;

  const Vector& enrollment_of(const std::string& id) const { return enrollment->at(id); }
  const Vector& speaker_of(const std::string& id) const { return speaker->at(id); }
  const Vector& cm_of(const std::string& id) const { return cm->at(id); }
};

/// Any type with enrollment_of / speaker_of / cm_of returning vectors.
template <class L>
concept TrialLookup = requires(const L& l, const std::string& id) {
  { l.enrollment_of(id) } -> std::convertible_to<std::span<const double>>;
  { l.speaker_of(id) } -> std::convertible_to<std::span<const double>>;
  { l.cm_of(id) } -> std::convertible_to<std::span<const double>>;
};

/**
   Per-trial objective: the self-distillation term when the test utterance
   is bona fide (target or nontarget), the spoof term otherwise.  The bona
   fide branch never looks up the enrollment embedding.
*/
template <TrialLookup Lookup>
double loss_total(const RssdModel& m, const SasvTrial& trial, const Lookup& lookup,
                  double scale = 1.0, RssdModel* grad = nullptr) {
  const auto& test = lookup.speaker_of(trial.test_id);
  const auto& cm = lookup.cm_of(trial.test_id);
  if (is_bona_fide(trial.label)) return rssd_branch_loss(m, test, test, cm, -1.0, scale, grad);
  const auto& enroll = lookup.enrollment_of(trial.enrollment_id);
  return rssd_branch_loss(m, enroll, test, cm, +1.0, scale, grad);
}

/// Mean loss over a batch; `grad` (zeroed first) receives its gradient.
template <TrialLookup Lookup>
double rssd_batch_loss(const RssdModel& m, std::span<const SasvTrial* const> batch,
                       const Lookup& lookup, RssdModel* grad) {
  if (batch.empty()) throw DataError("rssd_batch_loss: empty batch");
  if (grad) zero_fill(grad->params());
  const double w = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const SasvTrial* t : batch) loss += w * loss_total(m, *t, lookup, w, grad);
  return loss;
}

/// Mean of the utterance embeddings, l2-normalized.
inline SpeakerEmbedding enroll_speaker(std::span<const SpeakerEmbedding> utterances,
                                       std::string model_id = {}) {
  if (utterances.empty()) throw DataError("enroll_speaker: no enrollment utterances");
  Vector mean(utterances[0].values.size(), 0.0);
  for (const auto& u : utterances) {
    if (u.values.size() != mean.size())
      throw ShapeError("enroll_speaker: utterance " + u.id + " has length " +
                       std::to_string(u.values.size()) + ", expected " + std::to_string(mean.size()));
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += u.values[i];
  }
  for (double& v : mean) v /= static_cast<double>(utterances.size());
  const double n = l2_norm(mean);
  if (n == 0.0) throw DataError("enroll_speaker: mean embedding of " + model_id + " is zero");
  for (double& v : mean) v /= n;
  return {std::move(model_id), std::move(mean)};
}

// ---------------------------------------------------------------------------
// Scoring and training

template <TrialLookup Lookup>
std::vector<ScoreRecord> score_trials(const RssdModel& m, std::span<const SasvTrial> trials,
                                      const Lookup& lookup, ScoreDiagnostics* diag = nullptr) {
  std::vector<ScoreRecord> out;
  out.reserve(trials.size());
  for (const auto& t : trials)
    out.push_back({t.enrollment_id, t.test_id,
                   sasv_score(m, lookup.enrollment_of(t.enrollment_id), lookup.speaker_of(t.test_id),
                              lookup.cm_of(t.test_id), diag),
                   t.label, t.attack});
  return out;
}

/// Plain cosine(e_e, e_t): the scoring that results when the mask is all ones.
template <TrialLookup Lookup>
std::vector<ScoreRecord> score_trials_cosine(std::span<const SasvTrial> trials, const Lookup& lookup,
                                             ScoreDiagnostics* diag = nullptr) {
  std::vector<ScoreRecord> out;
  out.reserve(trials.size());
  for (const auto& t : trials)
    out.push_back({t.enrollment_id, t.test_id,
                   cosine(lookup.enrollment_of(t.enrollment_id), lookup.speaker_of(t.test_id), diag),
                   t.label, t.attack});
  return out;
}

/// Ids each trial needs that `lookup` cannot resolve, as "kind id" strings.
inline std::vector<std::string> missing_embeddings(std::span<const SasvTrial> trials,
                                                   const SasvEmbeddings& lookup) {
  std::vector<std::string> missing;
  auto note = [&](const EmbeddingStore* s, const char* kind, const std::string& id) {
    if (s == nullptr || !s->contains(id)) {
      std::string entry = std::string(kind) + " " + id;
      if (std::find(missing.begin(), missing.end(), entry) == missing.end())
        missing.push_back(std::move(entry));
    }
  };
  for (const auto& t : trials) {
    note(lookup.enrollment, "enrollment", t.enrollment_id);
    note(lookup.speaker, "speaker", t.test_id);
    note(lookup.cm, "cm", t.test_id);
  }
  return missing;
}

struct RssdTrainConfig {
  double learning_rate = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::uint64_t seed = 1234;
  std::size_t spoof_oversample = 1;  // each spoof trial appears this many times per epoch
};

struct RssdEpochRecord {
  std::size_t epoch;
  double train_loss;
  double dev_sv_eer;
  double dev_spf_eer;
  double dev_sasv_eer;
};

struct RssdTrainResult {
  RssdModel model;  // checkpoint with the lowest dev SASV-EER
  std::size_t best_epoch = 0;
  std::vector<RssdEpochRecord> history;
};

/**
   Adam on the mean per-trial objective.  Coverage of every train and dev
   trial is verified before any update; the model from the epoch with the
   lowest dev SASV-EER is returned (earliest on ties).
*/
inline RssdTrainResult train_rssd(RssdModel model, std::span<const SasvTrial> train,
                                  std::span<const SasvTrial> dev, const SasvEmbeddings& lookup,
                                  const RssdTrainConfig& cfg) {
  if (train.empty()) throw DataError("train_rssd: training trial list is empty");
  if (dev.empty()) throw DataError("train_rssd: dev trial list is empty");
  if (cfg.batch_size == 0) throw std::invalid_argument("train_rssd: batch size must be >= 1");
  {
    auto missing = missing_embeddings(train, lookup);
    for (auto& m : missing_embeddings(dev, lookup))
      if (std::find(missing.begin(), missing.end(), m) == missing.end()) missing.push_back(m);
    if (!missing.empty()) {
      std::string msg = "train_rssd: " + std::to_string(missing.size()) + " missing embeddings:";
      for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg += " [" + missing[i] + "]";
      throw MissingEntryError(msg, missing.front());
    }
  }

  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::size_t copies = train[i].label == Label::kSpoof ? std::max<std::size_t>(1, cfg.spoof_oversample) : 1;
    for (std::size_t c = 0; c < copies; ++c) pool.push_back(i);
  }

  Rng rng(cfg.seed);
  RssdModel grad = model.zeros_like();
  AdamState adam(model.params());
  RssdTrainResult result{model, 0, {}};
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(pool.begin(), pool.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < pool.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(pool.size(), start + cfg.batch_size);
      std::vector<const SasvTrial*> batch;
      for (std::size_t i = start; i < stop; ++i) batch.push_back(&train[pool[i]]);
      const double loss = rssd_batch_loss(model, batch, lookup, &grad);
      if (!std::isfinite(loss))
        throw TrainingError("train_rssd: non-finite loss at epoch " + std::to_string(epoch) +
                            ", batch " + std::to_string(batches) + " (first trial " +
                            batch.front()->enrollment_id + " " + batch.front()->test_id + ")");
      adam_update(model.params(), grad.params(), adam, cfg.learning_rate);
      loss_sum += loss;
      ++batches;
    }
    const auto scores = score_trials(model, dev, lookup);
    const SasvEers e = sasv_eer_suite(scores);
    result.history.push_back(
        {epoch, loss_sum / static_cast<double>(batches), e.sv.eer, e.spf.eer, e.sasv.eer});
    if (e.sasv.eer < best) {
      best = e.sasv.eer;
      result.model = model;
      result.best_epoch = epoch;
    }
  }
  return result;
}

}  // namespace sasv

// sasv/experiment.hpp

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

// Experiment plumbing shared by the command-line tool: loading labelled
// feature sets, training / scoring either back-end, enrollment, and the
// per-layer sweep.

#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "sasv/backends.hpp"
#include "sasv/checkpoint.hpp"
#include "sasv/dataio.hpp"
#include "sasv/metrics.hpp"
#include "sasv/rssd.hpp"

namespace sasv {

/// Reads `<dir>/<utt>.layer<k>.w2vf` for every protocol record.
inline std::vector<CmExample> load_cm_examples(std::span<const CmProtocolRecord> protocol,
                                               const fs::path& dir, std::uint32_t layer) {
  std::vector<CmExample> out;
  out.reserve(protocol.size());
  std::size_t dim = 0;
  for (const auto& rec : protocol) {
    const fs::path path = feature_path(dir, rec.utterance_id, layer);
    if (!fs::exists(path))
      throw MissingEntryError("missing feature file for " + rec.utterance_id + " (" + path.string() + ")",
                              rec.utterance_id);
    FeatureMatrix f = read_feature_file(path, rec.utterance_id);
    if (f.layer != layer)
      throw DataError(path.string() + ": header declares layer " + std::to_string(f.layer) +
                      ", expected " + std::to_string(layer));
    if (dim != 0 && f.dim() != dim)
      throw DataError(path.string() + ": feature dim " + std::to_string(f.dim()) +
                      " differs from " + std::to_string(dim));
    dim = f.dim();
    out.push_back({std::move(f), rec.key, rec.attack});
  }
  return out;
}

struct CmModelConfig {
  BackendKind kind = BackendKind::kAsp;
  std::size_t attention_dim = 128;
  std::size_t embedding_dim = 160;
  std::size_t mlp_hidden_dim = 1024;
  double leaky_slope = kDefaultLeakySlope;
};

inline CmModel make_cm_model(const CmModelConfig& cfg, std::size_t feature_dim, std::uint64_t seed) {
  Rng rng(seed);
  if (cfg.kind == BackendKind::kAsp)
    return AspBackend::init({feature_dim, cfg.attention_dim, cfg.embedding_dim}, rng);
  return MlpBackend::init({feature_dim, cfg.mlp_hidden_dim}, rng, cfg.leaky_slope);
}

inline BackendKind kind_of(const CmModel& m) {
  return std::holds_alternative<AspBackend>(m) ? BackendKind::kAsp : BackendKind::kMlp;
}

struct CmTrainOutcome {
  CmModel model;
  std::size_t best_epoch;
  std::vector<CmEpochRecord> history;
};

inline CmTrainOutcome train_cm_model(const CmModel& init, std::span<const CmExample> train,
                                     std::span<const CmExample> dev, const CmTrainConfig& cfg) {
  return std::visit(
      [&](const auto& b) -> CmTrainOutcome {
        auto r = train_cm(b, train, dev, cfg);
        return {std::move(r.model), r.best_epoch, std::move(r.history)};
      },
      init);
}

inline std::vector<ScoreRecord> score_cm_model(const CmModel& m, std::span<const CmExample> examples) {
  return std::visit([&](const auto& b) { return score_cm_examples(b, examples); }, m);
}

inline CmEmbedding cm_embed_model(const CmModel& m, const FeatureMatrix& f) {
  return std::visit([&](const auto& b) { return cm_embed(b, f); }, m);
}

inline std::size_t feature_dim_of(const CmModel& m) {
  return std::visit([](const auto& b) { return b.feature_dim(); }, m);
}

inline std::string percent2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::vector<MetricLine> breakdown_metrics(const CmBreakdown& b, const std::string& prefix = "") {
  std::vector<MetricLine> lines{{prefix + "cm_eer", "pooled", b.pooled.eer}};
  for (const auto& [attack, r] : b.per_attack) lines.push_back({prefix + "cm_eer", attack, r.eer});
  return lines;
}

// ---------------------------------------------------------------------------
// Layer sweep

struct LayerSweepConfig {
  fs::path feature_root;  // contains layer<k>/ for every listed layer
  std::vector<std::uint32_t> layers;
  std::vector<CmProtocolRecord> train;
  std::vector<CmProtocolRecord> dev;
  std::vector<CmProtocolRecord> eval;  // empty: report on dev
  CmModelConfig model;
  CmTrainConfig training;
};

struct LayerSweepRow {
  std::uint32_t layer;
  std::size_t best_epoch;
  CmBreakdown breakdown;
  CmModel model;
};

struct LayerSweepReport {
  std::vector<LayerSweepRow> rows;
  std::size_t best = 0;  // index into rows of the lowest pooled EER (first on ties)
};

inline fs::path layer_dir(const fs::path& root, std::uint32_t layer) {
  return root / ("layer" + std::to_string(layer));
}

/**
   Trains and evaluates the configured back-end once per layer, with the
   same initialization seed and training seed for every layer, and marks
   the layer with the lowest pooled EER.
*/
inline LayerSweepReport layer_sweep(const LayerSweepConfig& cfg) {
  if (cfg.layers.empty()) throw DataError("layer_sweep: no layers listed");
  for (auto layer : cfg.layers)
    if (!fs::is_directory(layer_dir(cfg.feature_root, layer)))
      throw MissingEntryError("layer_sweep: missing layer directory " +
                                  layer_dir(cfg.feature_root, layer).string(),
                              "layer" + std::to_string(layer));
  LayerSweepReport report;
  for (auto layer : cfg.layers) {
    const fs::path dir = layer_dir(cfg.feature_root, layer);
    const auto train = load_cm_examples(cfg.train, dir, layer);
    const auto dev = load_cm_examples(cfg.dev, dir, layer);
    const auto eval = cfg.eval.empty() ? dev : load_cm_examples(cfg.eval, dir, layer);
    const CmModel init = make_cm_model(cfg.model, train.front().features.dim(), cfg.training.seed);
    auto trained = train_cm_model(init, train, dev, cfg.training);
    const auto scores = score_cm_model(trained.model, eval);
    report.rows.push_back({layer, trained.best_epoch, cm_breakdown(scores, evaluation_attacks()),
                           std::move(trained.model)});
  }
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    if (report.rows[i].breakdown.pooled.eer < report.rows[report.best].breakdown.pooled.eer)
      report.best = i;
  return report;
}

/// Human-readable table: one row per layer, pooled EER then A07-A19 (2 dp).
inline void write_sweep_table(std::ostream& os, const LayerSweepReport& report) {
  const auto attacks = evaluation_attacks();
  os << "layer\tpooled";
  for (const auto& a : attacks) os << '\t' << a;
  os << "\tbest\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    os << row.layer << '\t' << percent2(row.breakdown.pooled.eer);
    for (const auto& a : attacks) {
      const EerResult* r = row.breakdown.find(a);
      os << '\t' << (r ? percent2(r->eer) : std::string("-"));
    }
    os << '\t' << (i == report.best ? "*" : "") << '\n';
  }
}

inline std::vector<MetricLine> sweep_metrics(const LayerSweepReport& report) {
  std::vector<MetricLine> lines;
  for (const auto& row : report.rows)
    for (auto l : breakdown_metrics(row.breakdown, "layer" + std::to_string(row.layer) + "_"))
      lines.push_back(std::move(l));
  lines.push_back({"best_layer", "pooled", static_cast<double>(report.rows[report.best].layer)});
  return lines;
}

// ---------------------------------------------------------------------------
// Enrollment

/// Enrollment models from a model -> utterances list over a speaker store.
inline EmbeddingStore build_enrollment_store(
    const std::vector<std::pair<std::string, std::vector<std::string>>>& enrollment,
    const EmbeddingStore& speaker) {
  EmbeddingStore out;
  for (const auto& [model, utts] : enrollment) {
    std::vector<SpeakerEmbedding> embs;
    for (const auto& u : utts) embs.push_back({u, speaker.at(u)});
    out.insert(model, enroll_speaker(embs, model).values);
  }
  return out;
}

inline std::vector<MetricLine> sasv_metrics(const SasvEers& e) {
  return {{"sv_eer", "all", e.sv.eer}, {"spf_eer", "all", e.spf.eer}, {"sasv_eer", "all", e.sasv.eer}};
}

}  // namespace sasv

// tests/acceptance.cpp

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

// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <numeric>

#include "sasv/sasv.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

namespace {

using namespace sasv;

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double time_limit;  // seconds
  std::function<Outcome()> check;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1 ------------------------------------------------------------------------

Outcome eer_oracle() {
  Rng rng(101);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  double worst = 0.0;
  std::size_t tied_sets = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t levels = rep % 4 == 0 ? 0 : 1 + rep % 12;
    auto pos = synthetic::random_scores(size(rng), rng, 0.8, levels);
    auto neg = synthetic::random_scores(size(rng), rng, 0.0, levels);
    if (rep % 10 == 5) neg.insert(neg.end(), pos.begin(), pos.begin() + pos.size() / 2);  // cross-class duplicates
    std::vector<double> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    if (std::adjacent_find(all.begin(), all.end()) != all.end()) ++tied_sets;
    worst = std::max(worst, std::abs(compute_eer(pos, neg).eer - oracle::eer_percent(pos, neg)));
  }
  return {worst <= 1e-9 && tied_sets > 0,
          fmt("200 sets (%zu with ties), max |diff| %.2e (limit 1e-9)", tied_sets, worst)};
}

// 2 ------------------------------------------------------------------------

Outcome eer_monotone() {
  Rng rng(202);
  std::uniform_int_distribution<std::size_t> size(2, 200);
  double worst = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    const std::size_t levels = rep % 2 ? 0 : 3 + rep % 9;
    const auto pos = synthetic::random_scores(size(rng), rng, 0.6, levels);
    const auto neg = synthetic::random_scores(size(rng), rng, 0.0, levels);
    const double base = compute_eer(pos, neg).eer;
    for (auto f : {+[](double x) { return 2 * x + 1; }, +[](double x) { return std::tanh(x); }}) {
      auto p = pos, n = neg;
      for (double& v : p) v = f(v);
      for (double& v : n) v = f(v);
      worst = std::max(worst, std::abs(compute_eer(p, n).eer - base));
    }
  }
  return {worst <= 1e-10, fmt("200 sets x {2x+1, tanh}, max |diff| %.2e (limit 1e-10)", worst)};
}

// 3 ------------------------------------------------------------------------

Outcome asp_oracle() {
  Rng rng(303);
  std::uniform_int_distribution<std::size_t> frames(1, 10), dims(1, 8), att(1, 6);
  double worst = 0.0, worst_sum = 0.0, worst_perm = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t t = frames(rng), d = dims(rng), a = att(rng);
    const AspAttention attention{synthetic::random_dense(d, a, rng), synthetic::random_dense(a, 1, rng)};
    const Matrix h = synthetic::random_matrix(t, d, rng);
    const AspPoolTrace tr = asp_pool_forward(h, attention);
    const auto ref = oracle::asp(h, attention, kDefaultSigmaFloor);
    for (std::size_t i = 0; i < t; ++i) worst = std::max(worst, std::abs(tr.weights[i] - ref.weights[i]));
    for (std::size_t j = 0; j < d; ++j) {
      worst = std::max(worst, std::abs(tr.stats[j] - ref.mean[j]));
      worst = std::max(worst, std::abs(tr.stats[d + j] - ref.stddev[j]));
    }
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(tr.weights.begin(), tr.weights.end(), 0.0) - 1.0));
    std::vector<std::size_t> idx(t);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    Matrix shuffled(t, d);
    for (std::size_t i = 0; i < t; ++i)
      for (std::size_t j = 0; j < d; ++j) shuffled(i, j) = h(idx[i], j);
    const Vector s2 = asp_pool(shuffled, attention);
    for (std::size_t j = 0; j < s2.size(); ++j) worst_perm = std::max(worst_perm, std::abs(s2[j] - tr.stats[j]));
  }
  return {worst <= 1e-10 && worst_sum <= 1e-12 && worst_perm <= 1e-10,
          fmt("100 instances, oracle %.2e, |sum w - 1| %.2e, permutation %.2e (limit 1e-10)", worst, worst_sum,
              worst_perm)};
}

// 4 ------------------------------------------------------------------------

Outcome gradient_suite() {
  Rng rng(404);
  double cm_worst = 0.0, bona_worst = 0.0, spoof_worst = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    AspBackend b;
    b.attention = {synthetic::random_dense(4, 3, rng), synthetic::random_dense(3, 1, rng)};
    b.projection = synthetic::random_dense(8, 5, rng, 0.3);
    b.classifier = synthetic::random_dense(5, 2, rng);
    std::vector<CmExample> xs;
    for (int i = 0; i < 3; ++i)
      xs.push_back({{"u" + std::to_string(i), 0, synthetic::random_matrix(3 + i, 4, rng, 1.0 + i)},
                    i == 1 ? Label::kBonafide : Label::kSpoof,
                    i == 1 ? std::nullopt : std::optional<std::string>("A07")});
    std::vector<const CmExample*> batch;
    for (const auto& x : xs) batch.push_back(&x);
    const CmClassWeights w;
    AspBackend grad = b.zeros_like();
    cm_batch_loss<AspBackend>(b, batch, w, &grad);
    cm_worst = std::max(cm_worst, grad_check([&] { return cm_batch_loss<AspBackend>(b, batch, w, nullptr); },
                                             b.params(), grad.params(), 1e-4));

    RssdModel m;
    m.layers = {synthetic::random_dense(4, 6, rng), synthetic::random_dense(6, 6, rng),
                synthetic::random_dense(6, 5, rng)};
    EmbeddingStore enroll, speaker, cm;
    enroll.insert("m", synthetic::random_vector(5, rng));
    speaker.insert("u", synthetic::random_vector(5, rng));
    cm.insert("u", synthetic::random_vector(4, rng));
    const SasvEmbeddings lookup{&enroll, &speaker, &cm};
    for (Label label : {Label::kTarget, Label::kSpoof}) {
      const SasvTrial trial{"m", "u", label, label == Label::kSpoof ? std::optional<std::string>("A07") : std::nullopt};
      RssdModel g = m.zeros_like();
      loss_total(m, trial, lookup, 1.0, &g);
      const double err = grad_check([&] { return loss_total(m, trial, lookup); }, m.params(), g.params(), 1e-4);
      (label == Label::kSpoof ? spoof_worst : bona_worst) = std::max(label == Label::kSpoof ? spoof_worst : bona_worst, err);
    }
  }
  const double worst = std::max({cm_worst, bona_worst, spoof_worst});
  return {worst < 1e-4, fmt("5 instances each: CM loss %.2e, bona fide branch %.2e, spoof branch %.2e (limit 1e-4)",
                            cm_worst, bona_worst, spoof_worst)};
}

// 5 ------------------------------------------------------------------------

Outcome gate_identity() {
  Rng rng(505);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const RssdModel m = synthetic::ones_mask_model({6, 8, 10}, rng);
    const Vector e = synthetic::random_vector(10, rng), t = synthetic::random_vector(10, rng);
    const Vector c = synthetic::random_vector(6, rng);
    worst = std::max(worst, std::abs(sasv_score(m, e, t, c) - oracle::cosine(e, t)));
  }
  return {worst <= 1e-12, fmt("1000 trials, max |diff| %.2e (limit 1e-12)", worst)};
}

// 6 ------------------------------------------------------------------------

Outcome cm_training() {
  synthetic::CmTaskSpec spec;
  const auto train = synthetic::cm_task(spec, 100);
  spec.prefix = "dev";
  const auto dev = synthetic::cm_task(spec, 200);
  auto run = [&] {
    Rng rng(1);
    return train_cm(AspBackend::init({8, 128, 160}, rng), train, dev, synthetic::cm_task_config());
  };
  const auto a = run();
  const auto b = run();
  bool same = a.model == b.model && a.history.size() == b.history.size();
  for (std::size_t i = 0; same && i < a.history.size(); ++i)
    same = a.history[i].train_loss == b.history[i].train_loss && a.history[i].dev_eer == b.history[i].dev_eer;
  const double eer = a.history[a.best_epoch - 1].dev_eer;
  return {eer < 5.0 && same && a.history.size() == 20,
          fmt("dev CM-EER %.2f%% at epoch %zu of %zu (limit 5%%), repeat run %s", eer, a.best_epoch,
              a.history.size(), same ? "bit-identical" : "DIFFERS")};
}

// 7 ------------------------------------------------------------------------

Outcome rssd_training() {
  const auto task = synthetic::sasv_task({}, 5);
  const auto lookup = task.lookup();
  Rng rng(1);
  const auto result = train_rssd(RssdModel::init({8, 256, 16}, rng), task.train, task.dev, lookup,
                                 synthetic::rssd_task_config());
  const auto rssd = sasv_eer_suite(score_trials(result.model, task.eval, lookup));
  const auto plain = sasv_eer_suite(score_trials_cosine(task.eval, lookup));
  return {rssd.sasv.eer < 5.0 && rssd.sv.eer <= plain.sv.eer + 1.0 && result.history.size() == 20,
          fmt("held-out SASV-EER %.2f%% (limit 5%%); SV-EER %.2f%% vs plain cosine %.2f%% (limit +1); "
              "SPF-EER %.2f%% vs %.2f%%",
              rssd.sasv.eer, rssd.sv.eer, plain.sv.eer, rssd.spf.eer, plain.spf.eer)};
}

// 8 ------------------------------------------------------------------------

Outcome layer_sweep_ordering() {
  fixtures::TempDir dir("sasv-accept");
  const auto fx = synthetic::write_layer_features(dir.path(), 3, 1.15, 10);  // B: barely separated
  synthetic::write_layer_features(dir.path(), 8, 4.0, 10);                   // A: well separated
  std::string detail;
  bool pass = true;
  for (const auto& layers : {std::vector<std::uint32_t>{3, 8}, std::vector<std::uint32_t>{8, 3}}) {
    LayerSweepConfig cfg;
    cfg.feature_root = dir.path();
    cfg.layers = layers;
    cfg.train = fx.train;
    cfg.dev = fx.dev;
    cfg.training = synthetic::cm_task_config();
    const auto report = layer_sweep(cfg);
    const auto& best = report.rows[report.best];
    pass = pass && best.layer == 8;
    detail += fmt("%sorder %u,%u: ", detail.empty() ? "" : "; ", layers[0], layers[1]);
    for (const auto& row : report.rows) detail += fmt("layer %u %.2f%% ", row.layer, row.breakdown.pooled.eer);
    detail += fmt("-> argmin layer %u", best.layer);
  }
  return {pass, detail};
}

// 9 ------------------------------------------------------------------------

Outcome io_round_trips() {
  Rng rng(909);
  std::size_t ok = 0, total = 0;
  auto same_bits = [](double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); };
  for (int rep = 0; rep < 100; ++rep) {
    const FeatureMatrix f = fixtures::random_features(rng);
    const std::string fb = encode_feature_file(f);
    const FeatureMatrix f2 = decode_feature_file(fb, "mem");
    bool good = f2.layer == f.layer && f2.values.shape() == f.values.shape() && encode_feature_file(f2) == fb;
    for (std::size_t i = 0; good && i < f.values.size(); ++i) good = same_bits(f.values.data()[i], f2.values.data()[i]);
    ok += good;

    const Vector e = fixtures::random_embedding(rng);
    const std::string eb = encode_embedding_file(e);
    const Vector e2 = decode_embedding_file(eb, "mem");
    good = e2.size() == e.size() && encode_embedding_file(e2) == eb;
    for (std::size_t i = 0; good && i < e.size(); ++i) good = same_bits(e[i], e2[i]);
    ok += good;

    std::uniform_int_distribution<std::size_t> dim(1, 9);
    const AspBackend asp = AspBackend::init({dim(rng), dim(rng), dim(rng)}, rng);
    const MlpBackend mlp = MlpBackend::init({dim(rng), dim(rng)}, rng, 0.01 * static_cast<double>(dim(rng)));
    const RssdModel rssd = RssdModel::init({dim(rng), dim(rng), dim(rng)}, rng);
    const std::string ab = encode_checkpoint(asp), mb = encode_checkpoint(mlp), rb = encode_checkpoint(rssd);
    const CmModel asp2 = decode_cm_checkpoint(ab, "mem"), mlp2 = decode_cm_checkpoint(mb, "mem");
    const RssdModel rssd2 = decode_rssd_checkpoint(rb, "mem");
    ok += std::get<AspBackend>(asp2) == asp && encode_checkpoint(asp2) == ab;
    ok += std::get<MlpBackend>(mlp2) == mlp && encode_checkpoint(mlp2) == mb;
    ok += rssd2 == rssd && encode_checkpoint(rssd2) == rb;

    std::vector<ScoreRecord> scores;
    for (int i = 0; i < 20; ++i)
      scores.push_back({i % 2 ? std::optional<std::string>("m") : std::nullopt, "u" + std::to_string(i),
                        std::normal_distribution<double>(0, 1e3)(rng), i % 2 ? Label::kTarget : Label::kSpoof,
                        i % 2 ? std::nullopt : std::optional<std::string>("A1" + std::to_string(i % 10))});
    std::stringstream ss;
    write_scores(ss, scores);
    ok += read_scores(ss) == scores;
    total += 6;
  }

  std::size_t rejected = 0, fixtures_seen = 0;
  std::string failures;
  for (const auto& f : fixtures::malformed()) {
    ++fixtures_seen;
    try {
      fixtures::parse_with(f.parser, f.path);
      failures += " accepted:" + f.path.filename().string();
    } catch (const ParseError& e) {
      if (e.line() == f.line && std::string(e.what()).find("line " + std::to_string(f.line)) == 0) ++rejected;
      else failures += " wrong-line:" + f.path.filename().string();
    }
  }
  return {ok == total && rejected == fixtures_seen && fixtures_seen > 0,
          fmt("%zu/%zu bit-exact round trips (features, embeddings, 3 checkpoint kinds, scores); "
              "%zu/%zu malformed fixtures rejected at the right line%s",
              ok, total, rejected, fixtures_seen, failures.c_str())};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "EER oracle equivalence", 10, eer_oracle},
      {2, "EER monotone-transform invariance", 5, eer_monotone},
      {3, "ASP oracle equivalence", 5, asp_oracle},
      {4, "gradient suite", 30, gradient_suite},
      {5, "gate-identity reduction", 5, gate_identity},
      {6, "synthetic CM training", 120, cm_training},
      {7, "synthetic SASV training", 120, rssd_training},
      {8, "layer-sweep ordering", 120, layer_sweep_ordering},
      {9, "I/O round trips", 30, io_round_trips},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = o.pass && secs < c.time_limit;
    failed += !pass;
    std::printf("%s  %d  %s: %s; %.2f s (limit %.0f s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs, c.time_limit);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}

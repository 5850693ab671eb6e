// tools/sasv_cli.cpp

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

// Command-line front end.  Every subcommand writes its outputs and a
// re-runnable manifest.txt under --out (default $SASV_OUTPUT_ROOT/<command>).

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "sasv/experiment.hpp"
#include "sasv/sasv.hpp"

namespace {

using namespace sasv;

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

// ---------------------------------------------------------------------------
// Config file and manifest

/// Splices `key = value` lines from --config in right after the subcommand,
/// skipping keys the user also gave as flags, so flags win over the file.
std::vector<std::string> apply_config(std::vector<std::string> args) {
  if (args.empty() || args[0].starts_with("-")) return args;
  std::string path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (!args[i].starts_with("--")) continue;
    const std::string flag = args[i].substr(2, args[i].find('=') - 2);
    given.insert(flag);
    if (flag != "config") continue;
    if (args[i].find('=') != std::string::npos) path = args[i].substr(args[i].find('=') + 1);
    else if (i + 1 < args.size()) path = args[i + 1];
  }
  if (path.empty()) return args;
  if (!fs::is_regular_file(path)) throw DataError("config file not found: " + path);
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_file(path);
  } catch (const CLI::Error& e) {
    throw DataError("cannot read config " + path + ": " + e.what());
  }
  std::vector<std::string> injected;
  for (const auto& item : items) {
    if (!item.parents.empty() && item.parents != std::vector<std::string>{args[0]}) continue;
    if (item.name == "config" || item.name.empty() || given.count(item.name)) continue;
    if (item.inputs.size() == 1) {
      injected.push_back("--" + item.name + "=" + item.inputs[0]);
    } else {
      injected.push_back("--" + item.name);
      injected.insert(injected.end(), item.inputs.begin(), item.inputs.end());
    }
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

std::string config_value(const std::string& v) {
  const bool plain = !v.empty() && v.find_first_of(" \t#=\"'[],") == std::string::npos;
  return plain ? v : "\"" + v + "\"";
}

void write_manifest(const fs::path& out, const CLI::App& sub, double seconds) {
  std::ostringstream m;
  m << "# sasv " << kVersion << " (" << __VERSION__ << ")\n";
  m << "# command: " << sub.get_name() << "\n";
  m << "# working directory: " << fs::current_path().string() << "\n";
  m << "# re-run: sasv " << sub.get_name() << " --config " << (out / "manifest.txt").string() << "\n";
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "config" || name == "help") continue;
    std::vector<std::string> values = opt->count() ? opt->results() : std::vector<std::string>{};
    if (values.empty()) {
      if (opt->get_default_str().empty()) continue;
      values = {opt->get_default_str()};
    }
    if (opt->get_items_expected_max() > 1) {
      std::string joined;
      for (const auto& v : values) joined += (joined.empty() ? "" : ",") + v;
      values = {joined};
    }
    m << name << " = " << config_value(values.front()) << "\n";
  }
  char wall[64];
  std::snprintf(wall, sizeof wall, "%.3f", seconds);
  m << "# wall_time_seconds = " << wall << "\n";
  write_file_bytes(out / "manifest.txt", m.str());
}

// ---------------------------------------------------------------------------
// Helpers

fs::path default_out(const std::string& command) {
  const char* root = std::getenv("SASV_OUTPUT_ROOT");
  return fs::path(root && *root ? root : "sasv-out") / command;
}

void require_file(const std::string& p, const char* what) {
  if (p.empty()) throw DataError(std::string(what) + " not given");
  if (!fs::is_regular_file(p)) throw DataError(std::string(what) + " not found: " + p);
}

void require_dir(const std::string& p, const char* what) {
  if (p.empty()) throw DataError(std::string(what) + " not given");
  if (!fs::is_directory(p)) throw DataError(std::string(what) + " not found: " + p);
}

void write_metrics_file(const fs::path& path, const std::vector<MetricLine>& lines) {
  std::ostringstream os;
  write_metrics(os, lines);
  write_file_bytes(path, os.str());
}

std::vector<std::uint32_t> parse_layers(const std::vector<std::string>& items) {
  std::vector<std::uint32_t> layers;
  for (const auto& item : items) {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || v > 0xFFFFFFFFul)
      throw DataError("bad layer index '" + item + "'");
    layers.push_back(static_cast<std::uint32_t>(v));
  }
  return layers;
}

void warn_missing_attacks(const CmBreakdown& b) {
  if (b.warnings.empty() || b.per_attack.empty()) return;
  std::string ids;
  for (const auto& a : evaluation_attacks())
    if (!b.find(a)) ids += " " + a;
  std::cerr << "warning: no records for" << ids << "; omitted from the breakdown\n";
}

void print_breakdown(const CmBreakdown& b) {
  std::cout << "pooled EER " << percent2(b.pooled.eer) << "\n";
  for (const auto& a : evaluation_attacks())
    if (const EerResult* r = b.find(a)) std::cout << a << " EER " << percent2(r->eer) << "\n";
  for (const auto& [a, r] : b.per_attack)
    if (std::find(evaluation_attacks().begin(), evaluation_attacks().end(), a) == evaluation_attacks().end())
      std::cout << a << " EER " << percent2(r.eer) << "\n";
}

// ---------------------------------------------------------------------------
// Options shared by train-cm and layer-sweep

struct CmOptions {
  std::string backend = "asp";
  std::size_t attention_dim = 128;
  std::size_t embedding_dim = 160;
  std::size_t mlp_hidden_dim = 1024;
  double leaky_slope = kDefaultLeakySlope;
  double lr = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  double bonafide_weight = 0.9;
  double spoof_weight = 0.1;
  std::size_t crop = 200;

  void add(CLI::App* s) {
    s->add_option("--backend", backend, "back-end: asp or mlp")->check(CLI::IsMember({"asp", "mlp"}));
    s->add_option("--attention-dim", attention_dim, "ASP attention hidden size");
    s->add_option("--embedding-dim", embedding_dim, "ASP embedding size");
    s->add_option("--mlp-hidden-dim", mlp_hidden_dim, "MLP hidden size");
    s->add_option("--leaky-slope", leaky_slope, "MLP leaky ReLU slope");
    s->add_option("--lr", lr, "Adam learning rate");
    s->add_option("--epochs", epochs, "training epochs");
    s->add_option("--batch-size", batch_size, "minibatch size");
    s->add_option("--bonafide-weight", bonafide_weight, "cross-entropy weight of bona fide");
    s->add_option("--spoof-weight", spoof_weight, "cross-entropy weight of spoof");
    s->add_option("--crop", crop, "training crop length in frames (0: none)");
  }

  CmModelConfig model() const {
    CmModelConfig c;
    c.kind = *parse_backend_kind(backend);
    c.attention_dim = attention_dim;
    c.embedding_dim = embedding_dim;
    c.mlp_hidden_dim = mlp_hidden_dim;
    c.leaky_slope = leaky_slope;
    return c;
  }

  CmTrainConfig training(std::uint64_t seed) const {
    CmTrainConfig c;
    c.learning_rate = lr;
    c.epochs = epochs;
    c.batch_size = batch_size;
    c.seed = seed;
    c.class_weights = {bonafide_weight, spoof_weight};
    c.crop_frames = crop;
    return c;
  }
};

/// Speaker, CM and enrollment embeddings for SASV commands.
struct SasvOptions {
  std::string speaker_dir;
  std::string cm_dir;
  std::string enrollment_dir;
  std::string enrollment_list;

  void add(CLI::App* s) {
    s->add_option("--speaker-emb", speaker_dir, "directory of test speaker embeddings (*.emb)");
    s->add_option("--cm-emb", cm_dir, "directory of test countermeasure embeddings (*.emb)");
    s->add_option("--enrollment-emb", enrollment_dir, "directory of enrollment model embeddings");
    s->add_option("--enrollment-list", enrollment_list,
                  "file of 'model utt1 utt2 ...' lines; utterances come from --speaker-emb");
  }

  void check() const {
    require_dir(speaker_dir, "--speaker-emb directory");
    require_dir(cm_dir, "--cm-emb directory");
    if (enrollment_dir.empty() == enrollment_list.empty())
      throw DataError("give exactly one of --enrollment-emb and --enrollment-list");
    if (!enrollment_dir.empty()) require_dir(enrollment_dir, "--enrollment-emb directory");
    else require_file(enrollment_list, "--enrollment-list file");
  }
};

struct SasvStores {
  EmbeddingStore enrollment, speaker, cm;
  SasvEmbeddings lookup() const { return {&enrollment, &speaker, &cm}; }
};

SasvStores load_stores(const SasvOptions& o) {
  SasvStores s;
  s.speaker = load_embedding_store(o.speaker_dir);
  s.cm = load_embedding_store(o.cm_dir);
  s.enrollment = o.enrollment_dir.empty()
                     ? build_enrollment_store(parse_file(o.enrollment_list, parse_enrollment_list), s.speaker)
                     : load_embedding_store(o.enrollment_dir);
  return s;
}

void require_coverage(std::span<const SasvTrial> trials, const SasvEmbeddings& lookup, const std::string& what) {
  const auto missing = missing_embeddings(trials, lookup);
  if (missing.empty()) return;
  std::string msg = what + ": " + std::to_string(missing.size()) + " missing embeddings:";
  for (std::size_t i = 0; i < missing.size() && i < 10; ++i) msg += " [" + missing[i] + "]";
  throw MissingEntryError(msg, missing.front());
}

// ---------------------------------------------------------------------------
// Commands

struct Common {
  std::string out;
  std::uint64_t seed = 1234;
  std::string config;

  void add(CLI::App* s) {
    s->add_option("--config", config, "flat 'key = value' file; flags override it");
    s->add_option("--out", out, "output directory (default $SASV_OUTPUT_ROOT/<command>)");
    s->add_option("--seed", seed, "random seed");
  }
};

struct Command {
  Common common;
  CLI::App* app = nullptr;

  virtual ~Command() = default;
  virtual CLI::App* attach(CLI::App& parent) = 0;
  virtual void run(const fs::path& out) = 0;
};

struct TrainCm : Command {
  CmOptions cm;
  std::string features, train_protocol, dev_protocol;
  std::uint32_t layer = 0;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("train-cm", "train a CM back-end on one layer's features");
    common.add(s);
    s->add_option("--features", features, "directory of <utt>.layer<k>.w2vf files")->required();
    s->add_option("--layer", layer, "layer index k of the feature files");
    s->add_option("--train-protocol", train_protocol, "training CM protocol")->required();
    s->add_option("--dev-protocol", dev_protocol, "development CM protocol")->required();
    cm.add(s);
    return s;
  }

  void run(const fs::path& out) override {
    require_dir(features, "--features directory");
    require_file(train_protocol, "--train-protocol file");
    require_file(dev_protocol, "--dev-protocol file");
    const auto train = load_cm_examples(parse_file(train_protocol, parse_cm_protocol), features, layer);
    const auto dev = load_cm_examples(parse_file(dev_protocol, parse_cm_protocol), features, layer);
    if (train.empty()) throw DataError("training protocol is empty");
    const CmModel init = make_cm_model(cm.model(), train.front().features.dim(), common.seed);
    const auto result = train_cm_model(init, train, dev, cm.training(common.seed));
    save_checkpoint(out / "model.ckpt", result.model);

    std::ostringstream h;
    h << "epoch\ttrain_loss\tdev_eer\n";
    for (const auto& r : result.history)
      h << r.epoch << '\t' << format_real(r.train_loss) << '\t' << format_real(r.dev_eer) << '\n';
    write_file_bytes(out / "history.tsv", h.str());

    const auto b = cm_breakdown(score_cm_model(result.model, dev));
    auto lines = breakdown_metrics(b, "dev_");
    lines.push_back({"best_epoch", "dev", static_cast<double>(result.best_epoch)});
    lines.push_back({"seed", "config", static_cast<double>(common.seed)});
    write_metrics_file(out / "metrics.tsv", lines);
    std::cout << "best epoch " << result.best_epoch << ", dev pooled EER " << percent2(b.pooled.eer) << "\n";
  }
};

struct EvalCm : Command {
  std::string scores, model, features, protocol;
  std::uint32_t layer = 0;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("eval-cm", "pooled and per-attack CM EER from a model or a score file");
    common.add(s);
    s->add_option("--scores", scores, "existing score file (instead of --model)");
    s->add_option("--model", model, "CM checkpoint");
    s->add_option("--features", features, "feature directory for --model");
    s->add_option("--layer", layer, "layer index of the feature files");
    s->add_option("--protocol", protocol, "CM protocol to score with --model");
    return s;
  }

  void run(const fs::path& out) override {
    std::vector<ScoreRecord> records;
    if (!scores.empty()) {
      if (!model.empty()) throw DataError("give either --scores or --model, not both");
      require_file(scores, "--scores file");
      records = read_scores_file(scores);
    } else {
      if (model.empty()) throw DataError("give --scores or --model");
      require_file(model, "--model checkpoint");
      require_dir(features, "--features directory");
      require_file(protocol, "--protocol file");
      const CmModel m = load_cm_checkpoint(model);
      records = score_cm_model(m, load_cm_examples(parse_file(protocol, parse_cm_protocol), features, layer));
      write_scores_file(out / "scores.txt", records);
    }
    const auto b = cm_breakdown(records, evaluation_attacks());
    warn_missing_attacks(b);
    auto lines = breakdown_metrics(b);
    lines.push_back({"seed", "config", static_cast<double>(common.seed)});
    write_metrics_file(out / "metrics.tsv", lines);
    print_breakdown(b);
  }
};

struct LayerSweep : Command {
  CmOptions cm;
  std::string feature_root, train_protocol, dev_protocol, eval_protocol;
  std::vector<std::string> layers;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("layer-sweep", "train and evaluate one CM back-end per feature layer");
    common.add(s);
    s->add_option("--feature-root", feature_root, "directory holding layer<k>/ subdirectories")->required();
    s->add_option("--layers", layers, "layer indices, comma separated")->required()->delimiter(',');
    s->add_option("--train-protocol", train_protocol, "training CM protocol")->required();
    s->add_option("--dev-protocol", dev_protocol, "development CM protocol")->required();
    s->add_option("--eval-protocol", eval_protocol, "evaluation CM protocol (default: report on dev)");
    cm.add(s);
    return s;
  }

  void run(const fs::path& out) override {
    require_dir(feature_root, "--feature-root directory");
    require_file(train_protocol, "--train-protocol file");
    require_file(dev_protocol, "--dev-protocol file");
    LayerSweepConfig cfg;
    cfg.feature_root = feature_root;
    cfg.layers = parse_layers(layers);
    cfg.train = parse_file(train_protocol, parse_cm_protocol);
    cfg.dev = parse_file(dev_protocol, parse_cm_protocol);
    if (!eval_protocol.empty()) {
      require_file(eval_protocol, "--eval-protocol file");
      cfg.eval = parse_file(eval_protocol, parse_cm_protocol);
    }
    cfg.model = cm.model();
    cfg.training = cm.training(common.seed);
    const auto report = layer_sweep(cfg);
    for (const auto& row : report.rows)
      save_checkpoint(out / "models" / ("layer" + std::to_string(row.layer) + ".ckpt"), row.model);
    std::ostringstream table;
    write_sweep_table(table, report);
    write_file_bytes(out / "sweep.tsv", table.str());
    auto lines = sweep_metrics(report);
    lines.push_back({"seed", "config", static_cast<double>(common.seed)});
    write_metrics_file(out / "metrics.tsv", lines);
    std::cout << table.str();
  }
};

struct DumpCmEmbeddings : Command {
  std::string model, features, protocol;
  std::uint32_t layer = 0;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("dump-cm-embeddings", "write one CM embedding file per utterance");
    common.add(s);
    s->add_option("--model", model, "CM checkpoint")->required();
    s->add_option("--features", features, "directory of <utt>.layer<k>.w2vf files")->required();
    s->add_option("--layer", layer, "layer index of the feature files");
    s->add_option("--protocol", protocol, "CM protocol listing utterances (default: every file)");
    return s;
  }

  void run(const fs::path& out) override {
    require_file(model, "--model checkpoint");
    require_dir(features, "--features directory");
    const CmModel m = load_cm_checkpoint(model);
    std::vector<std::string> ids;
    if (!protocol.empty()) {
      require_file(protocol, "--protocol file");
      for (const auto& r : parse_file(protocol, parse_cm_protocol)) ids.push_back(r.utterance_id);
    } else {
      const std::string suffix = ".layer" + std::to_string(layer) + ".w2vf";
      for (const auto& e : fs::directory_iterator(features)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && name.size() > suffix.size() && name.ends_with(suffix))
          ids.push_back(name.substr(0, name.size() - suffix.size()));
      }
      std::sort(ids.begin(), ids.end());
    }
    for (const auto& id : ids) {
      const fs::path path = feature_path(features, id, layer);
      if (!fs::exists(path)) throw MissingEntryError("missing feature file for " + id + " (" + path.string() + ")", id);
      const CmEmbedding e = cm_embed_model(m, read_feature_file(path, id));
      write_embedding_file(embedding_path(out / "embeddings", id), e.values);
    }
    std::cout << "wrote " << ids.size() << " embeddings to " << (out / "embeddings").string() << "\n";
  }
};

struct TrainRssd : Command {
  SasvOptions stores;
  std::string train_trials, dev_trials;
  std::size_t hidden_dim = 256;
  double leaky_slope = kDefaultLeakySlope;
  double lr = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;
  std::size_t spoof_oversample = 1;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("train-rssd", "train the RSSD mask network on fixed embeddings");
    common.add(s);
    stores.add(s);
    s->add_option("--train-trials", train_trials, "training SASV trial list")->required();
    s->add_option("--dev-trials", dev_trials, "development SASV trial list")->required();
    s->add_option("--hidden-dim", hidden_dim, "mask network hidden size");
    s->add_option("--leaky-slope", leaky_slope, "leaky ReLU slope");
    s->add_option("--lr", lr, "Adam learning rate");
    s->add_option("--epochs", epochs, "training epochs");
    s->add_option("--batch-size", batch_size, "minibatch size");
    s->add_option("--spoof-oversample", spoof_oversample, "copies of each spoof trial per epoch");
    return s;
  }

  void run(const fs::path& out) override {
    stores.check();
    require_file(train_trials, "--train-trials file");
    require_file(dev_trials, "--dev-trials file");
    const SasvStores s = load_stores(stores);
    const auto train = parse_file(train_trials, parse_sasv_trials);
    const auto dev = parse_file(dev_trials, parse_sasv_trials);
    require_coverage(train, s.lookup(), "training trials");
    require_coverage(dev, s.lookup(), "dev trials");
    Rng rng(common.seed);
    const RssdModel init = RssdModel::init({s.cm.dim(), hidden_dim, s.speaker.dim()}, rng, leaky_slope);
    RssdTrainConfig cfg;
    cfg.learning_rate = lr;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.seed = common.seed;
    cfg.spoof_oversample = spoof_oversample;
    const auto result = train_rssd(init, train, dev, s.lookup(), cfg);
    save_checkpoint(out / "rssd.ckpt", result.model);

    std::ostringstream h;
    h << "epoch\ttrain_loss\tdev_sv_eer\tdev_spf_eer\tdev_sasv_eer\n";
    for (const auto& r : result.history)
      h << r.epoch << '\t' << format_real(r.train_loss) << '\t' << format_real(r.dev_sv_eer) << '\t'
        << format_real(r.dev_spf_eer) << '\t' << format_real(r.dev_sasv_eer) << '\n';
    write_file_bytes(out / "history.tsv", h.str());
    const auto& best = result.history[result.best_epoch - 1];
    write_metrics_file(out / "metrics.tsv", {{"sv_eer", "dev", best.dev_sv_eer},
                                             {"spf_eer", "dev", best.dev_spf_eer},
                                             {"sasv_eer", "dev", best.dev_sasv_eer},
                                             {"best_epoch", "dev", static_cast<double>(result.best_epoch)},
                                             {"seed", "config", static_cast<double>(common.seed)}});
    std::cout << "best epoch " << result.best_epoch << ", dev SASV-EER " << percent2(best.dev_sasv_eer) << "\n";
  }
};

struct EvalSasv : Command {
  SasvOptions stores;
  std::string model, trials;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("eval-sasv", "SV-, SPF- and SASV-EER of RSSD or plain cosine scoring");
    common.add(s);
    stores.add(s);
    s->add_option("--model", model, "RSSD checkpoint (default: plain cosine scoring)");
    s->add_option("--trials", trials, "SASV trial list")->required();
    return s;
  }

  void run(const fs::path& out) override {
    stores.check();
    require_file(trials, "--trials file");
    const SasvStores s = load_stores(stores);
    const auto ts = parse_file(trials, parse_sasv_trials);
    require_coverage(ts, s.lookup(), "trials");
    ScoreDiagnostics diag;
    std::vector<ScoreRecord> records;
    if (model.empty()) {
      records = score_trials_cosine(ts, s.lookup(), &diag);
    } else {
      require_file(model, "--model checkpoint");
      records = score_trials(load_rssd_checkpoint(model), ts, s.lookup(), &diag);
    }
    write_scores_file(out / "scores.txt", records);
    const SasvEers e = sasv_eer_suite(records);
    auto lines = sasv_metrics(e);
    lines.push_back({"zero_norm_trials", "all", static_cast<double>(diag.zero_norm)});
    lines.push_back({"seed", "config", static_cast<double>(common.seed)});
    write_metrics_file(out / "metrics.tsv", lines);
    if (diag.zero_norm) std::cerr << "warning: " << diag.zero_norm << " trials had a zero-norm operand; scored -1\n";
    std::cout << "SV-EER " << percent2(e.sv.eer) << "\nSPF-EER " << percent2(e.spf.eer) << "\nSASV-EER "
              << percent2(e.sasv.eer) << "\n";
  }
};

struct PlotScores : Command {
  std::string scores;
  std::size_t bins = 50;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("plot-scores", "export score histograms and DET points");
    common.add(s);
    s->add_option("--scores", scores, "score file")->required();
    s->add_option("--bins", bins, "histogram bin count (>= 2)");
    return s;
  }

  static void det(const fs::path& path, const std::vector<double>& pos, const std::vector<double>& neg) {
    if (pos.empty() || neg.empty()) return;
    std::ostringstream os;
    os << "threshold\tfar\tfrr\n";
    write_det_points(os, det_points(pos, neg));
    write_file_bytes(path, os.str());
  }

  void run(const fs::path& out) override {
    require_file(scores, "--scores file");
    if (bins < 2) throw DataError("--bins must be at least 2");
    const auto records = read_scores_file(scores);
    const Histogram h = score_histogram(records, bins);
    if (h.degenerate) std::cerr << "warning: all scores are identical; one degenerate bin written\n";
    std::ostringstream hist;
    hist << "bin_low\tbin_high\tlabel\tcount\n";
    write_histogram(hist, h);
    write_file_bytes(out / "histogram.tsv", hist.str());

    auto where = [&](auto pred) { return scores_where(records, pred); };
    const auto target = where([](const ScoreRecord& r) { return r.label == Label::kTarget; });
    if (target.empty()) {
      det(out / "det_cm.tsv", where([](const ScoreRecord& r) { return is_bona_fide(r.label); }),
          where([](const ScoreRecord& r) { return r.label == Label::kSpoof; }));
    } else {
      const auto non = where([](const ScoreRecord& r) { return r.label == Label::kNontarget; });
      const auto spoof = where([](const ScoreRecord& r) { return r.label == Label::kSpoof; });
      auto both = non;
      both.insert(both.end(), spoof.begin(), spoof.end());
      det(out / "det_sv.tsv", target, non);
      det(out / "det_spf.tsv", target, spoof);
      det(out / "det_sasv.tsv", target, both);
    }
    std::cout << "wrote " << h.bins.size() << " bins for " << records.size() << " scores to " << out.string() << "\n";
  }
};

struct CheckData : Command {
  SasvOptions stores;
  std::string protocol, features, trials;
  std::uint32_t layer = 0;

  CLI::App* attach(CLI::App& app) override {
    auto* s = app.add_subcommand("check-data", "verify that protocols, features and embeddings line up");
    common.add(s);
    s->add_option("--protocol", protocol, "CM protocol to check against --features");
    s->add_option("--features", features, "feature directory");
    s->add_option("--layer", layer, "layer index of the feature files");
    s->add_option("--trials", trials, "SASV trial list to check against the embedding stores");
    stores.add(s);
    return s;
  }

  void run(const fs::path& out) override {
    if (protocol.empty() && trials.empty()) throw DataError("give --protocol and/or --trials");
    std::vector<std::string> problems;
    std::ostringstream report;
    if (!protocol.empty()) {
      require_file(protocol, "--protocol file");
      require_dir(features, "--features directory");
      const auto records = parse_file(protocol, parse_cm_protocol);
      std::size_t dim = 0;
      for (const auto& r : records) {
        const fs::path path = feature_path(features, r.utterance_id, layer);
        if (!fs::exists(path)) {
          problems.push_back("missing feature " + r.utterance_id);
          continue;
        }
        try {
          const FeatureMatrix f = read_feature_file(path, r.utterance_id);
          if (f.layer != layer) problems.push_back("layer mismatch " + r.utterance_id);
          else if (dim && f.dim() != dim) problems.push_back("dim mismatch " + r.utterance_id);
          dim = dim ? dim : f.dim();
        } catch (const FormatError& e) {
          problems.push_back(std::string("unreadable feature ") + r.utterance_id + ": " + e.what());
        }
      }
      report << "protocol\t" << records.size() << " records\tdim " << dim << "\n";
    }
    if (!trials.empty()) {
      require_file(trials, "--trials file");
      stores.check();
      const SasvStores s = load_stores(stores);
      const auto ts = parse_file(trials, parse_sasv_trials);
      for (auto& m : missing_embeddings(ts, s.lookup())) problems.push_back("missing " + m);
      report << "trials\t" << ts.size() << " trials\tspeaker dim " << s.speaker.dim() << "\tcm dim "
             << s.cm.dim() << "\n";
    }
    for (const auto& p : problems) report << "problem\t" << p << "\n";
    write_file_bytes(out / "report.txt", report.str());
    if (!problems.empty()) {
      for (const auto& p : problems) std::cerr << p << "\n";
      throw DataError(std::to_string(problems.size()) + " problem(s); first: " + problems.front());
    }
    std::cout << "ok\n";
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sasv: countermeasure back-ends, RSSD and SASV evaluation", "sasv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));
  app.option_defaults()->always_capture_default();

  std::vector<std::unique_ptr<Command>> commands;
  commands.push_back(std::make_unique<TrainCm>());
  commands.push_back(std::make_unique<EvalCm>());
  commands.push_back(std::make_unique<LayerSweep>());
  commands.push_back(std::make_unique<DumpCmEmbeddings>());
  commands.push_back(std::make_unique<TrainRssd>());
  commands.push_back(std::make_unique<EvalSasv>());
  commands.push_back(std::make_unique<PlotScores>());
  commands.push_back(std::make_unique<CheckData>());
  for (auto& c : commands) c->app = c->attach(app);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    if (!args.empty() && !args[0].starts_with("-") && !app.get_subcommand_no_throw(args[0]))
      throw CLI::ExtrasError("unknown subcommand '" + args[0] + "'", CLI::ExitCodes::ExtrasError);
    args = apply_config(std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    const auto start = std::chrono::steady_clock::now();
    const fs::path out = c->common.out.empty() ? default_out(c->app->get_name()) : fs::path(c->common.out);
    try {
      fs::create_directories(out);
      c->run(out);
      const std::chrono::duration<double> took = std::chrono::steady_clock::now() - start;
      write_manifest(out, *c->app, took.count());
    } catch (const std::exception& e) {
      std::cerr << "error: " << e.what() << "\n";
      return kExitData;
    }
    return 0;
  }
  std::cerr << app.help();
  return kExitUsage;
}

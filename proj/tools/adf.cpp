// Command-line operator surface for the denoising personality-detection
// toolkit: preprocess, featurize, embed-import, train, evaluate, predict,
// inspect-attention. Every command writes a run manifest next to its
// outputs and exits nonzero with a single-line error on failure.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adf/checkpoint.hpp"
#include "adf/embed.hpp"
#include "adf/ensemble.hpp"
#include "adf/io.hpp"
#include "adf/lexicon.hpp"
#include "adf/model.hpp"
#include "adf/rng.hpp"
#include "adf/text.hpp"
#include "adf/train.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::string now_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string sanitize_for_filename(const std::string& id) {
  std::string out;
  for (char c : id)
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

void emit_manifest(const std::string& out_dir, const std::string& command,
                   const ordered_json& config, const std::vector<std::string>& inputs,
                   const std::vector<std::string>& outputs, std::uint64_t seed) {
  adf::io::RunManifest m;
  m.command = command;
  m.resolved_config = config;
  m.inputs = inputs;
  m.outputs = outputs;
  m.seed = seed;
  m.tool_version = kToolVersion;
  m.wall_clock = now_utc();
  adf::io::write_run_manifest(out_dir + "/" + command + "_run.json", m);
}

adf::text::DatasetProfile profile_by_name(const std::string& name) {
  if (name == "essays") return adf::text::essays_profile();
  if (name == "twitter") return adf::text::twitter_profile();
  throw std::runtime_error("unknown profile " + name);
}

// Precedence: explicit flags > config file > profile defaults.
struct ConfigCli {
  std::string config_path;
  std::string profile = "essays";
  std::uint64_t seed = 1;
  std::size_t max_epoch = 0, max_update = 0, batch_size = 0, update_frequency = 0;
  double lambda_major = 0.0, lambda_aux = 0.0;
  CLI::Option *profile_opt = nullptr, *seed_opt = nullptr, *max_epoch_opt = nullptr,
              *max_update_opt = nullptr, *batch_opt = nullptr, *freq_opt = nullptr,
              *lambda_major_opt = nullptr, *lambda_aux_opt = nullptr;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file (defaults: built-in per profile)");
    profile_opt = cmd->add_option("--profile", profile, "Dataset profile: essays or twitter");
    seed_opt = cmd->add_option("--seed", seed, "Random seed");
    max_epoch_opt = cmd->add_option("--max-epoch", max_epoch, "Epoch cap");
    max_update_opt = cmd->add_option("--max-update", max_update, "Update cap");
    batch_opt = cmd->add_option("--batch-size", batch_size, "Micro-batch size");
    freq_opt = cmd->add_option("--update-frequency", update_frequency,
                               "Micro-batches accumulated per update");
    lambda_major_opt = cmd->add_option("--lambda-major", lambda_major, "Major-task loss weight");
    lambda_aux_opt = cmd->add_option("--lambda-aux", lambda_aux, "Aux-task loss weight");
  }

  adf::train::TrainConfig resolve() const {
    adf::train::TrainConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw std::runtime_error("cannot open config " + config_path);
      ordered_json j = ordered_json::parse(in, nullptr, true, true);
      if (profile_opt->count() > 0 && !j.contains("profile")) j["profile"] = profile;
      cfg = adf::train::config_from_json(j);
    } else {
      if (profile != "twitter" && profile != "essays")
        throw std::runtime_error("unknown profile " + profile);
      cfg = profile == "twitter" ? adf::train::twitter_defaults() : adf::train::essays_defaults();
    }
    if (seed_opt->count() > 0) cfg.seed = seed;
    if (max_epoch_opt->count() > 0) cfg.max_epoch = max_epoch;
    if (max_update_opt->count() > 0) cfg.max_update = max_update;
    if (batch_opt->count() > 0) cfg.batch_size = batch_size;
    if (freq_opt->count() > 0) cfg.update_frequency = update_frequency;
    if (lambda_major_opt->count() > 0) cfg.lambda_major = lambda_major;
    if (lambda_aux_opt->count() > 0) cfg.lambda_aux = lambda_aux;
    return cfg;
  }
};

std::size_t word_count(const std::string& text) {
  std::size_t n = 0;
  bool in_word = false;
  for (char c : text) {
    const bool space = std::isspace(static_cast<unsigned char>(c));
    if (!space && !in_word) ++n;
    in_word = !space;
  }
  return n;
}

// ---------------------------------------------------------------------------

struct PreprocessArgs {
  std::string input, profile = "essays", out_dir;
  std::uint64_t seed = 1;
};

void run_preprocess(const PreprocessArgs& a) {
  const adf::text::DatasetProfile profile = profile_by_name(a.profile);
  fs::create_directories(a.out_dir);
  const auto samples = adf::text::ingest(a.input, profile);
  std::vector<adf::io::CorpusSample> corpus;
  corpus.reserve(samples.size());
  double small_words = 0.0, big_words = 0.0;
  std::size_t small_count = 0, big_count = 0;
  for (const auto& sample : samples) {
    const std::uint64_t sample_seed = a.seed ^ adf::stable_hash(sample.id);
    adf::io::CorpusSample out;
    out.id = sample.id;
    out.labels = sample.labels;
    try {
      out.segments = adf::text::enhance(sample, profile, sample_seed);
    } catch (const std::exception& e) {
      throw std::runtime_error("sample " + sample.id + ": " + e.what());
    }
    std::string joined;
    for (std::size_t i = 0; i < sample.posts.size(); ++i) {
      if (i) joined += " ";
      joined += sample.posts[i];
    }
    out.counter_text = adf::text::clean_for_counter(joined);
    for (const auto& seg : out.segments.segments) {
      const std::size_t w = word_count(seg.raw_text);
      if (seg.size_class == adf::text::SizeClass::small) {
        small_words += static_cast<double>(w);
        ++small_count;
      } else {
        big_words += static_cast<double>(w);
        ++big_count;
      }
    }
    corpus.push_back(std::move(out));
  }
  const std::string corpus_path = a.out_dir + "/corpus.jsonl";
  adf::io::write_corpus(corpus_path, corpus);
  emit_manifest(a.out_dir, "preprocess",
                {{"profile", a.profile}, {"n_small", profile.n_small}, {"n_big", profile.n_big}},
                {a.input}, {corpus_path}, a.seed);
  std::cout << corpus.size() << " samples\n"
            << (profile.n_small + profile.n_big) << " segments per sample (" << profile.n_small
            << " small + " << profile.n_big << " big)\n";
  if (small_count)
    std::cout << "mean words per small segment: " << small_words / static_cast<double>(small_count)
              << "\n";
  if (big_count)
    std::cout << "mean words per big segment: " << big_words / static_cast<double>(big_count)
              << "\n";
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  std::string corpus, lexicon_dir, out_dir;
};

void run_featurize(const FeaturizeArgs& a) {
  fs::create_directories(a.out_dir);
  const auto corpus = adf::io::read_corpus(a.corpus);
  const auto lexicons = adf::io::load_lexicon_dir(a.lexicon_dir);
  const auto schema = adf::lex::build_schema(lexicons);
  const std::string out_path = a.out_dir + "/features.csv";
  adf::io::write_feature_csv(out_path, corpus, lexicons, schema);
  emit_manifest(a.out_dir, "featurize", {{"feature_dim", schema.dim}}, {a.corpus, a.lexicon_dir},
                {out_path}, 0);
  std::cout << "wrote " << out_path << " (" << schema.dim << " feature columns)\n";
}

// ---------------------------------------------------------------------------

struct EmbedImportArgs {
  std::string input, out_dir;
};

void run_embed_import(const EmbedImportArgs& a) {
  fs::create_directories(a.out_dir);
  std::ifstream in(a.input, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + a.input);
  adf::io::CsvReader reader(in);
  std::vector<std::string> header;
  if (!reader.next(header) || header.empty() || header[0] != "id")
    throw std::runtime_error(a.input + ": expected header starting with 'id'");
  adf::embed::EmbeddingStore store;
  store.d_r = header.size() - 1;
  if (store.d_r == 0) throw std::runtime_error(a.input + ": no vector columns");
  std::vector<std::string> row;
  while (reader.next(row)) {
    if (row.size() != header.size())
      throw std::runtime_error(a.input + " row " + std::to_string(reader.row()) +
                               ": expected " + std::to_string(header.size()) + " columns");
    Vec v(store.d_r);
    for (std::size_t i = 0; i < store.d_r; ++i) v[i] = std::stod(row[i + 1]);
    if (!store.vectors.emplace(row[0], std::move(v)).second)
      throw std::runtime_error(a.input + ": duplicate segment id " + row[0]);
  }
  const std::string out_path = a.out_dir + "/embeddings.bin";
  adf::io::save_embedding_store(out_path, store);
  emit_manifest(a.out_dir, "embed-import",
                {{"d_r", store.d_r}, {"count", store.vectors.size()}}, {a.input}, {out_path}, 0);
  std::cout << "imported " << store.vectors.size() << " vectors of dimension " << store.d_r
            << "\n";
}

// ---------------------------------------------------------------------------

struct ModelIoArgs {
  std::string corpus, lexicon_dir, out_dir, trait, embeddings;
  ConfigCli config;
};

struct LoadedData {
  std::vector<adf::lex::Lexicon> lexicons;
  adf::lex::FeatureSchema schema;
  adf::embed::EmbeddingStore store;
  bool has_store = false;
  adf::train::Dataset dataset;
};

LoadedData load_data(const ModelIoArgs& a, const std::string& trait, bool require_labels) {
  LoadedData d;
  d.lexicons = adf::io::load_lexicon_dir(a.lexicon_dir);
  d.schema = adf::lex::build_schema(d.lexicons);
  const auto corpus = adf::io::read_corpus(a.corpus);
  if (!a.embeddings.empty()) {
    d.store = adf::io::load_embedding_store(a.embeddings);
    d.has_store = true;
  }
  d.dataset = adf::io::build_dataset(corpus, d.lexicons, d.schema, trait,
                                     d.has_store ? &d.store : nullptr, require_labels);
  return d;
}

void run_train(const ModelIoArgs& a) {
  fs::create_directories(a.out_dir);
  const adf::train::TrainConfig cfg = a.config.resolve();
  LoadedData data = load_data(a, a.trait, true);
  adf::Rng rng(cfg.seed);
  adf::ckpt::ModelState state =
      data.has_store ? adf::train::build_fixed_embedding_state(data.dataset, cfg, rng)
                     : adf::train::build_toy_encoder_state(data.dataset, cfg, rng);
  const adf::train::TrainResult result = adf::train::train(state, data.dataset, cfg);

  adf::train::TraitMetrics major, ensembled;
  major.trait = a.trait;
  ensembled.trait = a.trait;
  for (const auto& sample : data.dataset.samples) {
    const adf::train::Prediction p = adf::train::predict(state, sample);
    major.counts.add(p.major_label, sample.label);
    ensembled.counts.add(p.decision.final_label, sample.label);
  }
  major.accuracy = major.counts.accuracy();
  ensembled.accuracy = ensembled.counts.accuracy();

  const std::string ckpt_path = a.out_dir + "/checkpoint.bin";
  adf::ckpt::CheckpointMeta meta;
  meta.trait = a.trait;
  meta.fold = -1;
  meta.config = adf::train::config_to_json(cfg);
  adf::ckpt::save_checkpoint(ckpt_path, state, meta);
  const std::string metrics_path = a.out_dir + "/metrics.csv";
  adf::io::write_metrics_csv(metrics_path, {major, ensembled}, {"train_major", "train_ensemble"});
  emit_manifest(a.out_dir, "train", adf::train::config_to_json(cfg),
                {a.corpus, a.lexicon_dir}, {ckpt_path, metrics_path}, cfg.seed);
  std::cout << "updates applied: " << result.updates_applied << "\n"
            << "epochs run: " << result.epochs_run << "\n";
  if (!result.epoch_mean_loss.empty())
    std::cout << "final epoch mean loss: " << result.epoch_mean_loss.back() << "\n";
  std::cout << "training-set accuracy (major): " << major.accuracy << "\n"
            << "training-set accuracy (self-ensemble): " << ensembled.accuracy << "\n"
            << "wrote " << ckpt_path << "\n";
}

// ---------------------------------------------------------------------------

void run_evaluate(const ModelIoArgs& a, std::size_t k) {
  fs::create_directories(a.out_dir);
  const adf::train::TrainConfig cfg = a.config.resolve();
  LoadedData data = load_data(a, a.trait, true);
  const bool fixed = data.has_store;
  auto builder = [&](const adf::train::Dataset& split, adf::Rng& rng) {
    return fixed ? adf::train::build_fixed_embedding_state(split, cfg, rng)
                 : adf::train::build_toy_encoder_state(split, cfg, rng);
  };
  const adf::train::KfoldReport report =
      adf::train::kfold_evaluate(data.dataset, cfg, k, a.trait, builder);
  const std::string metrics_path = a.out_dir + "/metrics.csv";
  adf::io::write_metrics_csv(metrics_path, {report.major, report.ensembled},
                             {"major", "self_ensemble"});
  emit_manifest(a.out_dir, "evaluate", adf::train::config_to_json(cfg),
                {a.corpus, a.lexicon_dir}, {metrics_path}, cfg.seed);
  std::cout << "trait " << a.trait << ", " << k << " folds\n";
  std::cout << "fold accuracies (major):";
  for (double acc : report.major.fold_accuracy) std::cout << " " << acc;
  std::cout << "\nfold accuracies (self-ensemble):";
  for (double acc : report.ensembled.fold_accuracy) std::cout << " " << acc;
  std::cout << "\nmean accuracy (major): " << report.major.accuracy
            << "\nmean accuracy (self-ensemble): " << report.ensembled.accuracy << "\n";
  for (const auto& w : report.warnings) std::cout << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------

struct PredictArgs {
  ModelIoArgs io;
  std::string checkpoint;
  bool no_self_ensemble = false;
};

void run_predict(const PredictArgs& a) {
  fs::create_directories(a.io.out_dir);
  adf::ckpt::CheckpointMeta meta;
  adf::ckpt::ModelState state = adf::ckpt::load_checkpoint(a.checkpoint, &meta);
  if (!state.has_encoder && a.io.embeddings.empty())
    throw std::runtime_error("checkpoint has no encoder; --embeddings is required");
  LoadedData data = load_data(a.io, meta.trait, false);
  std::vector<std::string> ids;
  std::vector<adf::ensemble::EnsembleDecision> decisions;
  for (const auto& sample : data.dataset.samples) {
    adf::train::Prediction p = adf::train::predict(state, sample);
    if (a.no_self_ensemble) {
      p.decision.final_label = p.decision.major_label;
      p.decision.corrected = false;
    }
    ids.push_back(sample.id);
    decisions.push_back(p.decision);
  }
  const std::string out_path = a.io.out_dir + "/decisions.csv";
  adf::io::write_decisions_csv(out_path, ids, decisions);
  emit_manifest(a.io.out_dir, "predict",
                {{"trait", meta.trait}, {"self_ensemble", !a.no_self_ensemble}},
                {a.io.corpus, a.checkpoint}, {out_path}, 0);
  std::size_t corrected = 0;
  for (const auto& d : decisions) corrected += d.corrected ? 1 : 0;
  std::cout << decisions.size() << " predictions, " << corrected << " corrected\n"
            << "wrote " << out_path << "\n";
}

// ---------------------------------------------------------------------------

struct InspectArgs {
  ModelIoArgs io;
  std::string checkpoint, sample_id;
};

void run_inspect_attention(const InspectArgs& a) {
  fs::create_directories(a.io.out_dir);
  adf::ckpt::CheckpointMeta meta;
  adf::ckpt::ModelState state = adf::ckpt::load_checkpoint(a.checkpoint, &meta);
  LoadedData data = load_data(a.io, meta.trait, false);
  const adf::train::TrainSample* found = nullptr;
  for (const auto& sample : data.dataset.samples)
    if (sample.id == a.sample_id) found = &sample;
  if (!found) throw std::runtime_error("unknown sample id " + a.sample_id);

  adf::train::TrainSample sample = *found;
  // The attention weights depend only on the count features; without a
  // representation source, zero vectors stand in for V.
  if (!state.has_encoder && sample.r_fixed.rows() == 0)
    sample.r_fixed = Matrix(sample.f_raw.rows(), state.aiem.w_v.cols());
  const Matrix r = adf::train::representation_for(state, sample);
  const adf::model::AiemTrace trace =
      adf::model::aiem_forward(state.standardizer.apply(sample.f_raw), r, state.aiem);

  const std::string stem = a.io.out_dir + "/attention_" + sanitize_for_filename(a.sample_id);
  adf::io::write_attention_csv(stem + ".csv", trace.attn);
  adf::io::write_pgm(stem + ".pgm", trace.attn);
  emit_manifest(a.io.out_dir, "inspect-attention", {{"sample", a.sample_id}},
                {a.io.corpus, a.checkpoint}, {stem + ".csv", stem + ".pgm"}, 0);
  std::cout << trace.attn.rows() << "x" << trace.attn.cols() << " attention matrix\n"
            << "wrote " << stem << ".csv and " << stem << ".pgm\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attention-based denoising toolkit for text personality detection"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);

  PreprocessArgs pre;
  CLI::App* cmd_pre = app.add_subcommand("preprocess", "Segment a raw dataset CSV");
  cmd_pre->add_option("--input", pre.input, "Dataset CSV")->required();
  cmd_pre->add_option("--profile", pre.profile, "essays or twitter");
  cmd_pre->add_option("--out", pre.out_dir, "Output directory")->required();
  cmd_pre->add_option("--seed", pre.seed, "Segmentation seed");

  FeaturizeArgs feat;
  CLI::App* cmd_feat = app.add_subcommand("featurize", "Emit count-feature CSV for a corpus");
  cmd_feat->add_option("--corpus", feat.corpus, "Segmented corpus (JSONL)")->required();
  cmd_feat->add_option("--lexicons", feat.lexicon_dir, "Lexicon directory")
      ->envname("ADF_LEXICONS")
      ->required();
  cmd_feat->add_option("--out", feat.out_dir, "Output directory")->required();

  EmbedImportArgs emb;
  CLI::App* cmd_emb = app.add_subcommand("embed-import",
                                         "Import per-segment vectors into a store file");
  cmd_emb->add_option("--input", emb.input, "CSV: id,v0,v1,...")->required();
  cmd_emb->add_option("--out", emb.out_dir, "Output directory")->required();

  auto attach_model_io = [](CLI::App* cmd, ModelIoArgs& io, bool need_trait) {
    cmd->add_option("--corpus", io.corpus, "Segmented corpus (JSONL)")->required();
    cmd->add_option("--lexicons", io.lexicon_dir, "Lexicon directory")
        ->envname("ADF_LEXICONS")
        ->required();
    cmd->add_option("--out", io.out_dir, "Output directory")->required();
    auto* trait = cmd->add_option("--trait", io.trait, "Trait dimension to model");
    if (need_trait) trait->required();
    cmd->add_option("--embeddings", io.embeddings,
                    "Embedding store file (default: trainable toy encoder)");
  };
  ModelIoArgs train_args;
  CLI::App* cmd_train = app.add_subcommand("train", "Train one trait model");
  attach_model_io(cmd_train, train_args, true);
  train_args.config.attach(cmd_train);

  ModelIoArgs eval_args;
  std::size_t eval_k = 10;
  CLI::App* cmd_eval = app.add_subcommand("evaluate", "Cross-validated evaluation");
  attach_model_io(cmd_eval, eval_args, true);
  eval_args.config.attach(cmd_eval);
  cmd_eval->add_option("--k", eval_k, "Fold count (default 10)");

  PredictArgs pred;
  CLI::App* cmd_pred = app.add_subcommand("predict", "Per-sample decisions from a checkpoint");
  attach_model_io(cmd_pred, pred.io, false);
  cmd_pred->add_option("--checkpoint", pred.checkpoint, "Checkpoint file")->required();
  cmd_pred->add_flag("--no-self-ensemble", pred.no_self_ensemble,
                     "Report the major prediction without the correction rule");

  InspectArgs insp;
  CLI::App* cmd_insp = app.add_subcommand("inspect-attention",
                                          "Export a sample's attention matrix");
  attach_model_io(cmd_insp, insp.io, false);
  cmd_insp->add_option("--checkpoint", insp.checkpoint, "Checkpoint file")->required();
  cmd_insp->add_option("--sample", insp.sample_id, "Sample id")->required();

  try {
    app.parse(argc, argv);
    if (cmd_pre->parsed()) run_preprocess(pre);
    else if (cmd_feat->parsed()) run_featurize(feat);
    else if (cmd_emb->parsed()) run_embed_import(emb);
    else if (cmd_train->parsed()) run_train(train_args);
    else if (cmd_eval->parsed()) run_evaluate(eval_args, eval_k);
    else if (cmd_pred->parsed()) run_predict(pred);
    else if (cmd_insp->parsed()) run_inspect_attention(insp);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}

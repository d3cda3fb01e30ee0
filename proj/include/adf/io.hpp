#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adf/checkpoint.hpp"
#include "adf/csv.hpp"
#include "adf/embed.hpp"
#include "adf/ensemble.hpp"
#include "adf/lexicon.hpp"
#include "adf/text.hpp"
#include "adf/train.hpp"

namespace adf::io {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Segmented corpus: one JSON object per line.
// ---------------------------------------------------------------------------

struct CorpusSample {
  std::string id;
  std::map<std::string, int> labels;
  std::string counter_text;  // counter-grade full text (for whole-sample features)
  adf::text::SegmentSet segments;
};

inline std::string segment_id(const std::string& sample_id, std::size_t index) {
  return sample_id + "#s" + std::to_string(index);
}

inline void write_corpus(const std::string& path, const std::vector<CorpusSample>& corpus) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write corpus " + path);
  for (const auto& sample : corpus) {
    ordered_json j;
    j["id"] = sample.id;
    j["labels"] = sample.labels;
    j["counter_text"] = sample.counter_text;
    j["n_small"] = sample.segments.n_small;
    j["n_big"] = sample.segments.n_big;
    ordered_json segs = ordered_json::array();
    for (const auto& s : sample.segments.segments)
      segs.push_back({{"index", s.index},
                      {"size_class", s.size_class == adf::text::SizeClass::small ? "small" : "big"},
                      {"raw_text", s.raw_text},
                      {"clean_text", s.clean_text}});
    j["segments"] = segs;
    out << j.dump() << "\n";
  }
  if (!out) throw std::runtime_error("write failure on corpus " + path);
}

inline std::vector<CorpusSample> read_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus " + path);
  std::vector<CorpusSample> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("corpus " + path + " line " + std::to_string(line_no) + ": " +
                               e.what());
    }
    CorpusSample sample;
    sample.id = j.at("id").get<std::string>();
    sample.labels = j.at("labels").get<std::map<std::string, int>>();
    sample.counter_text = j.at("counter_text").get<std::string>();
    sample.segments.n_small = j.at("n_small").get<std::size_t>();
    sample.segments.n_big = j.at("n_big").get<std::size_t>();
    for (const auto& s : j.at("segments")) {
      adf::text::Segment seg;
      seg.index = s.at("index").get<std::size_t>();
      seg.size_class = s.at("size_class").get<std::string>() == "small"
                           ? adf::text::SizeClass::small
                           : adf::text::SizeClass::big;
      seg.raw_text = s.at("raw_text").get<std::string>();
      seg.clean_text = s.at("clean_text").get<std::string>();
      sample.segments.segments.push_back(std::move(seg));
    }
    corpus.push_back(std::move(sample));
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Embedding store file: magic, manifest, float32 little-endian rows.
// ---------------------------------------------------------------------------

namespace detail {
inline constexpr char kStoreMagic[9] = "ADFEMBS1";
}

inline void save_embedding_store(const std::string& path, const adf::embed::EmbeddingStore& store) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write embedding store " + path);
  ordered_json manifest;
  manifest["format_version"] = 1;
  manifest["d_r"] = store.d_r;
  std::vector<std::string> ids;
  ids.reserve(store.vectors.size());
  for (const auto& [id, v] : store.vectors) ids.push_back(id);
  manifest["ids"] = ids;
  const std::string text = manifest.dump();
  out.write(detail::kStoreMagic, 8);
  adf::ckpt::detail::write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& id : ids)
    for (double v : store.vectors.at(id)) adf::ckpt::detail::write_f32_le(out, v);
  if (!out) throw std::runtime_error("write failure on embedding store " + path);
}

inline adf::embed::EmbeddingStore load_embedding_store(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding store " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kStoreMagic, 8) != 0)
    throw std::runtime_error("embedding store " + path + ": bad magic");
  const std::uint64_t len = adf::ckpt::detail::read_u64_le(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  const ordered_json manifest = ordered_json::parse(text);
  adf::embed::EmbeddingStore store;
  store.d_r = manifest.at("d_r").get<std::size_t>();
  for (const auto& id : manifest.at("ids").get<std::vector<std::string>>()) {
    Vec v(store.d_r);
    for (auto& x : v) x = adf::ckpt::detail::read_f32_le(in);
    store.vectors.emplace(id, std::move(v));
  }
  if (!in) throw std::runtime_error("embedding store " + path + ": truncated blob");
  return store;
}

// ---------------------------------------------------------------------------
// Dataset assembly: corpus + lexicons (+ optional fixed embeddings) -> the
// trainer's featurized view for one trait dimension.
// ---------------------------------------------------------------------------

inline adf::train::Dataset build_dataset(const std::vector<CorpusSample>& corpus,
                                         const std::vector<adf::lex::Lexicon>& lexicons,
                                         const adf::lex::FeatureSchema& schema,
                                         const std::string& trait,
                                         const adf::embed::EmbeddingStore* store = nullptr,
                                         bool require_labels = true) {
  adf::train::Dataset ds;
  ds.d_f = schema.dim;
  for (const auto& sample : corpus) {
    const auto label_it = sample.labels.find(trait);
    if (label_it == sample.labels.end() && require_labels)
      throw std::runtime_error("sample " + sample.id + " has no label for trait " + trait);
    adf::train::TrainSample t;
    t.id = sample.id;
    t.label = label_it == sample.labels.end() ? 0 : label_it->second;
    const std::size_t n = sample.segments.segments.size();
    if (ds.n_segments == 0) ds.n_segments = n;
    if (n != ds.n_segments)
      throw std::runtime_error("sample " + sample.id + " has " + std::to_string(n) +
                               " segments, expected " + std::to_string(ds.n_segments));
    t.f_raw = Matrix(n, schema.dim);
    for (std::size_t i = 0; i < n; ++i) {
      const auto fv =
          adf::lex::count_features(sample.segments.segments[i].raw_text, lexicons, schema);
      t.f_raw.set_row(i, fv.values);
    }
    t.f_bar = adf::lex::count_features(sample.counter_text, lexicons, schema).values;
    if (store) {
      std::vector<std::string> ids;
      ids.reserve(n);
      for (std::size_t i = 0; i < n; ++i) ids.push_back(segment_id(sample.id, i));
      t.r_fixed = adf::embed::embed_file_backed(ids, *store).rows;
    } else {
      t.tokens.reserve(n);
      for (const auto& seg : sample.segments.segments)
        t.tokens.push_back(adf::lex::tokenize(seg.clean_text));
    }
    ds.samples.push_back(std::move(t));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Lexicon directory loading: the four demo blocks by fixed file names.
// ---------------------------------------------------------------------------

inline std::vector<adf::lex::Lexicon> load_lexicon_dir(const std::string& dir) {
  const char* files[4] = {"mairesse_liwc.tsv", "mairesse_mrc.tsv", "senticnet.tsv", "nrc.tsv"};
  std::vector<adf::lex::Lexicon> lexicons;
  for (const char* f : files) {
    const std::string path = dir + "/" + f;
    try {
      lexicons.push_back(adf::lex::load_lexicon(path));
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("lexicon block ") + f + ": " + e.what());
    }
  }
  return lexicons;
}

// ---------------------------------------------------------------------------
// CSV emitters
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// One row per segment (id "<sample>#s<n>") and one per sample (id alone).
inline void write_feature_csv(const std::string& path, const std::vector<CorpusSample>& corpus,
                              const std::vector<adf::lex::Lexicon>& lexicons,
                              const adf::lex::FeatureSchema& schema) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write features " + path);
  std::vector<std::string> header{"id"};
  for (const auto& name : schema.slot_names()) header.push_back(name);
  write_csv_row(out, header);
  auto emit = [&](const std::string& id, const Vec& values) {
    std::vector<std::string> row{id};
    for (double v : values) row.push_back(format_double(v));
    write_csv_row(out, row);
  };
  for (const auto& sample : corpus) {
    for (std::size_t i = 0; i < sample.segments.segments.size(); ++i)
      emit(segment_id(sample.id, i),
           adf::lex::count_features(sample.segments.segments[i].raw_text, lexicons, schema).values);
    emit(sample.id, adf::lex::count_features(sample.counter_text, lexicons, schema).values);
  }
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<adf::train::TraitMetrics>& metrics,
                              const std::vector<std::string>& variants) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write metrics " + path);
  write_csv_row(out, {"trait", "variant", "accuracy", "tp", "tn", "fp", "fn", "fold_accuracies"});
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    const auto& m = metrics[i];
    std::string folds;
    for (std::size_t f = 0; f < m.fold_accuracy.size(); ++f) {
      if (f) folds += ";";
      folds += format_double(m.fold_accuracy[f]);
    }
    write_csv_row(out, {m.trait, variants[i], format_double(m.accuracy),
                        std::to_string(m.counts.tp), std::to_string(m.counts.tn),
                        std::to_string(m.counts.fp), std::to_string(m.counts.fn), folds});
  }
}

inline void write_decisions_csv(const std::string& path, const std::vector<std::string>& ids,
                                const std::vector<adf::ensemble::EnsembleDecision>& decisions) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write decisions " + path);
  write_csv_row(out, {"id", "major_label", "soft0", "hard0", "soft1", "hard1", "final_label",
                      "corrected"});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& d = decisions[i];
    write_csv_row(out, {ids[i], std::to_string(d.major_label), std::to_string(d.soft0.label),
                        std::to_string(d.hard0.label), std::to_string(d.soft1.label),
                        std::to_string(d.hard1.label), std::to_string(d.final_label),
                        d.corrected ? "1" : "0"});
  }
}

// Attention matrix with a final row of column sums (per-segment attention
// mass received across all query rows).
inline void write_attention_csv(const std::string& path, const Matrix& attn) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write attention " + path);
  std::vector<std::string> header{"row"};
  for (std::size_t j = 0; j < attn.cols(); ++j) header.push_back("s" + std::to_string(j));
  write_csv_row(out, header);
  for (std::size_t i = 0; i < attn.rows(); ++i) {
    std::vector<std::string> row{"s" + std::to_string(i)};
    for (std::size_t j = 0; j < attn.cols(); ++j) row.push_back(format_double(attn(i, j)));
    write_csv_row(out, row);
  }
  std::vector<std::string> sums{"column_sum"};
  for (std::size_t j = 0; j < attn.cols(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < attn.rows(); ++i) s += attn(i, j);
    sums.push_back(format_double(s));
  }
  write_csv_row(out, sums);
}

// ---------------------------------------------------------------------------
// Greyscale heatmap (binary PGM). Pixel = value * 255, rounded half to even,
// so golden images are bit-exact across platforms.
// ---------------------------------------------------------------------------

inline std::uint8_t quantize_unit(double v) {
  double scaled = v * 255.0;
  if (scaled <= 0.0) return 0;
  if (scaled >= 255.0) return 255;
  const double floor_v = std::floor(scaled);
  const double frac = scaled - floor_v;
  double rounded;
  if (frac > 0.5)
    rounded = floor_v + 1.0;
  else if (frac < 0.5)
    rounded = floor_v;
  else
    rounded = std::fmod(floor_v, 2.0) == 0.0 ? floor_v : floor_v + 1.0;
  return static_cast<std::uint8_t>(rounded);
}

inline void write_pgm(const std::string& path, const Matrix& values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write image " + path);
  out << "P5\n" << values.cols() << " " << values.rows() << "\n255\n";
  for (std::size_t i = 0; i < values.rows(); ++i)
    for (std::size_t j = 0; j < values.cols(); ++j) {
      const char byte = static_cast<char>(quantize_unit(values(i, j)));
      out.write(&byte, 1);
    }
  if (!out) throw std::runtime_error("write failure on image " + path);
}

// ---------------------------------------------------------------------------
// Run manifest: one JSON file describing each CLI run.
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  ordered_json resolved_config;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string tool_version;
  std::string wall_clock;  // informational only; excluded from determinism claims
};

inline void write_run_manifest(const std::string& path, const RunManifest& m) {
  ordered_json j;
  j["command"] = m.command;
  j["resolved_config"] = m.resolved_config;
  j["inputs"] = m.inputs;
  j["outputs"] = m.outputs;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["wall_clock"] = m.wall_clock;
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write run manifest " + path);
  out << j.dump(2) << "\n";
}

}  // namespace adf::io

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adf/embed.hpp"
#include "adf/matrix.hpp"
#include "adf/model.hpp"

namespace adf::ckpt {

using ordered_json = nlohmann::ordered_json;

// Everything a trained trait model owns: the fusion projections, the heads,
// optionally a trainable encoder, and the feature standardizer.
struct ModelState {
  adf::model::AiemParams aiem;
  adf::model::TraitHead head;
  bool has_encoder = false;
  adf::embed::ToyEncoderParams encoder;
  adf::model::Standardizer standardizer;
};

// A view of one named parameter tensor (matrix or vector).
struct TensorRef {
  std::string name;
  Matrix* mat = nullptr;
  Vec* vec = nullptr;

  std::size_t size() const { return mat ? mat->size() : vec->size(); }
  double* data() { return mat ? mat->data() : vec->data(); }
  const double* data() const { return mat ? mat->data() : vec->data(); }
  std::vector<std::size_t> shape() const {
    if (mat) return {mat->rows(), mat->cols()};
    return {vec->size()};
  }
};

// Canonical enumeration order; the serialized blob and the optimizer state
// both follow it.
inline std::vector<TensorRef> collect_tensors(ModelState& s) {
  std::vector<TensorRef> refs;
  auto mat = [&](std::string name, Matrix& m) { refs.push_back({std::move(name), &m, nullptr}); };
  auto vec = [&](std::string name, Vec& v) { refs.push_back({std::move(name), nullptr, &v}); };
  auto classifier = [&](const std::string& prefix, adf::model::Classifier& c) {
    mat(prefix + ".hidden.w", c.hidden.w);
    vec(prefix + ".hidden.b", c.hidden.b);
    mat(prefix + ".output.w", c.output.w);
    vec(prefix + ".output.b", c.output.b);
  };
  mat("aiem.w_q", s.aiem.w_q);
  mat("aiem.w_k", s.aiem.w_k);
  mat("aiem.w_v", s.aiem.w_v);
  mat("head.post_aiem_linear", s.head.post_aiem_linear);
  vec("head.post_aiem_bias", s.head.post_aiem_bias);
  classifier("head.major", s.head.major);
  classifier("head.aux0", s.head.aux0);
  classifier("head.aux1", s.head.aux1);
  if (s.has_encoder) {
    mat("encoder.table", s.encoder.table);
    mat("encoder.projection", s.encoder.projection);
  }
  return refs;
}

struct CheckpointMeta {
  int format_version = 1;
  std::string trait;
  int fold = -1;
  ordered_json config;  // opaque training-config snapshot
};

namespace detail {

inline constexpr char kMagic[9] = "ADFCKPT1";  // 8 bytes on disk

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

inline void write_f32_le(std::ostream& out, double v) {
  const float f = static_cast<float>(v);
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  out.write(b, 4);
}

inline double read_f32_le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return static_cast<double>(f);
}

}  // namespace detail

// Layout: 8-byte magic, u64 manifest length, manifest JSON, then the tensor
// values as row-major little-endian float32 in manifest order. Parameters are
// held in doubles but serialized at 32 bits; save -> load -> save is
// byte-identical because the narrowing is idempotent.
inline void save_checkpoint(const std::string& path, ModelState& state,
                            const CheckpointMeta& meta) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  const std::vector<TensorRef> tensors = collect_tensors(state);

  ordered_json manifest;
  manifest["format_version"] = meta.format_version;
  manifest["trait"] = meta.trait;
  manifest["fold"] = meta.fold;
  manifest["config"] = meta.config;
  manifest["head"] = {{"n_segments", state.head.n_segments},
                      {"input_dropout", state.head.major.input_dropout},
                      {"pooler_dropout", state.head.major.pooler_dropout}};
  manifest["standardizer"] = {{"mean", state.standardizer.mean},
                              {"stdev", state.standardizer.stdev}};
  if (state.has_encoder) {
    std::vector<std::string> tokens(state.encoder.vocab.size() + 1);
    tokens[state.encoder.unk_row] = "";  // the shared unknown row has no token
    for (const auto& [token, row] : state.encoder.vocab) tokens.at(row) = token;
    manifest["encoder"] = {{"unk_row", state.encoder.unk_row}, {"rows", tokens}};
  } else {
    manifest["encoder"] = nullptr;
  }
  ordered_json tensor_list = ordered_json::array();
  for (const auto& t : tensors)
    tensor_list.push_back({{"name", t.name}, {"shape", t.shape()}, {"dtype", "f32"}});
  manifest["tensors"] = tensor_list;

  const std::string manifest_text = manifest.dump();
  out.write(detail::kMagic, 8);
  detail::write_u64_le(out, manifest_text.size());
  out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
  for (const auto& t : tensors)
    for (std::size_t i = 0; i < t.size(); ++i) detail::write_f32_le(out, t.data()[i]);
  if (!out) throw std::runtime_error("write failure on checkpoint " + path);
}

inline ModelState load_checkpoint(const std::string& path, CheckpointMeta* meta_out = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kMagic, 8) != 0)
    throw std::runtime_error("checkpoint " + path + ": bad magic");
  const std::uint64_t manifest_len = detail::read_u64_le(in);
  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw std::runtime_error("checkpoint " + path + ": truncated manifest");
  const ordered_json manifest = ordered_json::parse(manifest_text);

  if (meta_out) {
    meta_out->format_version = manifest.at("format_version").get<int>();
    meta_out->trait = manifest.at("trait").get<std::string>();
    meta_out->fold = manifest.at("fold").get<int>();
    meta_out->config = manifest.at("config");
  }

  ModelState state;
  state.head.n_segments = manifest.at("head").at("n_segments").get<std::size_t>();
  const double input_dropout = manifest.at("head").at("input_dropout").get<double>();
  const double pooler_dropout = manifest.at("head").at("pooler_dropout").get<double>();
  state.standardizer.mean = manifest.at("standardizer").at("mean").get<Vec>();
  state.standardizer.stdev = manifest.at("standardizer").at("stdev").get<Vec>();
  if (!manifest.at("encoder").is_null()) {
    state.has_encoder = true;
    state.encoder.unk_row = manifest.at("encoder").at("unk_row").get<std::size_t>();
    const auto rows = manifest.at("encoder").at("rows").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (i != state.encoder.unk_row) state.encoder.vocab[rows[i]] = i;
  }

  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    Matrix* mat = nullptr;
    Vec* vec = nullptr;
    if (name == "aiem.w_q") mat = &state.aiem.w_q;
    else if (name == "aiem.w_k") mat = &state.aiem.w_k;
    else if (name == "aiem.w_v") mat = &state.aiem.w_v;
    else if (name == "head.post_aiem_linear") mat = &state.head.post_aiem_linear;
    else if (name == "head.post_aiem_bias") vec = &state.head.post_aiem_bias;
    else if (name == "head.major.hidden.w") mat = &state.head.major.hidden.w;
    else if (name == "head.major.hidden.b") vec = &state.head.major.hidden.b;
    else if (name == "head.major.output.w") mat = &state.head.major.output.w;
    else if (name == "head.major.output.b") vec = &state.head.major.output.b;
    else if (name == "head.aux0.hidden.w") mat = &state.head.aux0.hidden.w;
    else if (name == "head.aux0.hidden.b") vec = &state.head.aux0.hidden.b;
    else if (name == "head.aux0.output.w") mat = &state.head.aux0.output.w;
    else if (name == "head.aux0.output.b") vec = &state.head.aux0.output.b;
    else if (name == "head.aux1.hidden.w") mat = &state.head.aux1.hidden.w;
    else if (name == "head.aux1.hidden.b") vec = &state.head.aux1.hidden.b;
    else if (name == "head.aux1.output.w") mat = &state.head.aux1.output.w;
    else if (name == "head.aux1.output.b") vec = &state.head.aux1.output.b;
    else if (name == "encoder.table") mat = &state.encoder.table;
    else if (name == "encoder.projection") mat = &state.encoder.projection;
    else throw std::runtime_error("checkpoint " + path + ": unknown tensor " + name);

    if (mat) {
      if (shape.size() != 2)
        throw std::runtime_error("checkpoint " + path + ": tensor " + name + " expects 2-d shape");
      *mat = Matrix(shape[0], shape[1]);
      for (std::size_t i = 0; i < mat->size(); ++i) mat->data()[i] = detail::read_f32_le(in);
    } else {
      if (shape.size() != 1)
        throw std::runtime_error("checkpoint " + path + ": tensor " + name + " expects 1-d shape");
      vec->assign(shape[0], 0.0);
      for (std::size_t i = 0; i < vec->size(); ++i) (*vec)[i] = detail::read_f32_le(in);
    }
    if (!in) throw std::runtime_error("checkpoint " + path + ": truncated blob at " + name);
  }
  for (adf::model::Classifier* c : {&state.head.major, &state.head.aux0, &state.head.aux1}) {
    c->input_dropout = input_dropout;
    c->pooler_dropout = pooler_dropout;
  }
  return state;
}

}  // namespace adf::ckpt

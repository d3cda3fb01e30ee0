#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "adf/lexicon.hpp"
#include "adf/matrix.hpp"
#include "adf/rng.hpp"
#include "adf/text.hpp"

namespace adf::embed {

// Rows r_1..r_N for one sample's segments, in segment order.
struct RepresentationMatrix {
  Matrix rows;  // N x d_r
};

// ---------------------------------------------------------------------------
// File-backed provider: a pure id -> vector lookup.
// ---------------------------------------------------------------------------

struct EmbeddingStore {
  std::size_t d_r = 0;
  std::map<std::string, Vec> vectors;
};

inline RepresentationMatrix embed_file_backed(const std::vector<std::string>& segment_ids,
                                              const EmbeddingStore& store) {
  RepresentationMatrix rep;
  rep.rows = Matrix(segment_ids.size(), store.d_r);
  for (std::size_t i = 0; i < segment_ids.size(); ++i) {
    const auto it = store.vectors.find(segment_ids[i]);
    if (it == store.vectors.end())
      throw std::runtime_error("missing embedding " + segment_ids[i]);
    if (it->second.size() != store.d_r)
      throw std::runtime_error("embedding " + segment_ids[i] + " has dimension " +
                               std::to_string(it->second.size()) + ", store declares " +
                               std::to_string(store.d_r));
    rep.rows.set_row(i, it->second);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Toy encoder: mean of token embeddings, then a linear projection. A
// minimal differentiable stand-in for a pretrained sentence encoder so the
// whole pipeline trains end to end at desk scale.
// ---------------------------------------------------------------------------

struct ToyEncoderParams {
  std::map<std::string, std::size_t> vocab;  // token -> row in `table`
  std::size_t unk_row = 0;                   // shared row for out-of-vocabulary tokens
  Matrix table;                              // vocab_size x d_e
  Matrix projection;                         // d_r x d_e

  std::size_t d_e() const { return table.cols(); }
  std::size_t d_r() const { return projection.rows(); }
  std::size_t row_for(const std::string& token) const {
    const auto it = vocab.find(token);
    return it == vocab.end() ? unk_row : it->second;
  }
};

// Builds a vocabulary from the given token lists (row 0 is the shared
// unknown row) and draws both tensors from a scaled gaussian.
inline ToyEncoderParams init_toy_encoder(const std::vector<std::vector<std::string>>& token_lists,
                                         std::size_t d_e, std::size_t d_r, Rng& rng) {
  ToyEncoderParams params;
  params.unk_row = 0;
  std::size_t next = 1;
  for (const auto& toks : token_lists)
    for (const auto& t : toks)
      if (params.vocab.emplace(t, next).second) ++next;
  params.table = Matrix(next, d_e);
  params.table.fill_gaussian(rng, 0.1);
  params.projection = Matrix(d_r, d_e);
  params.projection.fill_gaussian(rng, 0.1);
  return params;
}

// Per-segment token lists feeding the toy encoder (clean text, tokenized).
inline std::vector<std::vector<std::string>> segment_tokens(const adf::text::SegmentSet& segments) {
  std::vector<std::vector<std::string>> lists;
  lists.reserve(segments.segments.size());
  for (const auto& seg : segments.segments) lists.push_back(adf::lex::tokenize(seg.clean_text));
  return lists;
}

// Forward pass keeping the mean-pooled vectors, which the backward pass
// needs to route gradients into the projection and the embedding table.
struct ToyEncoderTrace {
  std::vector<std::vector<std::size_t>> token_rows;  // per segment, table rows used
  Matrix pooled;                                     // N x d_e, mean of token rows
};

inline RepresentationMatrix embed_toy(const std::vector<std::vector<std::string>>& token_lists,
                                      const ToyEncoderParams& params,
                                      ToyEncoderTrace* trace = nullptr) {
  const std::size_t n = token_lists.size();
  Matrix pooled(n, params.d_e());
  std::vector<std::vector<std::size_t>> rows_used(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& rows = rows_used[i];
    if (token_lists[i].empty()) {
      rows.push_back(params.unk_row);  // empty segment -> the unknown embedding
    } else {
      rows.reserve(token_lists[i].size());
      for (const auto& t : token_lists[i]) rows.push_back(params.row_for(t));
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r : rows)
      for (std::size_t c = 0; c < params.d_e(); ++c) pooled(i, c) += inv * params.table(r, c);
  }
  RepresentationMatrix rep;
  rep.rows = matmul_bt(pooled, params.projection);  // N x d_r
  if (trace) {
    trace->token_rows = std::move(rows_used);
    trace->pooled = std::move(pooled);
  }
  return rep;
}

// Gradients of a loss w.r.t. the toy encoder parameters, given dL/dR.
struct ToyEncoderGrads {
  Matrix d_table;       // vocab_size x d_e
  Matrix d_projection;  // d_r x d_e
};

inline void toy_encoder_backward(const Matrix& d_rows, const ToyEncoderTrace& trace,
                                 const ToyEncoderParams& params, ToyEncoderGrads& grads) {
  if (grads.d_table.rows() == 0) {
    grads.d_table = Matrix(params.table.rows(), params.table.cols());
    grads.d_projection = Matrix(params.projection.rows(), params.projection.cols());
  }
  // R = pooled * projection^T:  dProj += dR^T * pooled;  dPooled = dR * projection.
  const Matrix d_pooled = matmul(d_rows, params.projection);  // N x d_e
  grads.d_projection.add_scaled(matmul_at(d_rows, trace.pooled), 1.0);
  for (std::size_t i = 0; i < trace.token_rows.size(); ++i) {
    const double inv = 1.0 / static_cast<double>(trace.token_rows[i].size());
    for (std::size_t r : trace.token_rows[i])
      for (std::size_t c = 0; c < params.d_e(); ++c)
        grads.d_table(r, c) += inv * d_pooled(i, c);
  }
}

// ---------------------------------------------------------------------------
// Store serialization: JSON manifest + raw float32 little-endian blob.
// Defined in io.hpp to keep this header free of serialization concerns.
// ---------------------------------------------------------------------------

}  // namespace adf::embed

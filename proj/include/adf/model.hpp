#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "adf/matrix.hpp"
#include "adf/rng.hpp"

namespace adf::model {

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

// The three projection matrices of the attention fusion: queries and keys
// come from the count-feature rows, values from the representation rows.
struct AiemParams {
  Matrix w_q;  // d_a x d_f
  Matrix w_k;  // d_a x d_f
  Matrix w_v;  // d_a x d_r
  std::size_t d_a() const { return w_q.rows(); }
  std::size_t d_k() const { return w_q.rows(); }  // softmax scale dimension
};

struct Dense {
  Matrix w;  // out x in
  Vec b;     // out
};

// One hidden layer with tanh, dropout after the activation ("pooler"
// dropout), then two logits.
struct Classifier {
  Dense hidden;
  Dense output;
  double input_dropout = 0.1;
  double pooler_dropout = 0.45;
};

// All trainable tensors of one trait's heads.
struct TraitHead {
  std::size_t n_segments = 0;  // configured N
  Matrix post_aiem_linear;     // d_h x d_a, applied to every fused row
  Vec post_aiem_bias;          // d_h
  Classifier major;            // input N*d_h + d_f
  Classifier aux0;             // input d_r + d_f; even segment indices
  Classifier aux1;             // input d_r + d_f; odd segment indices
};

struct PredictionDistribution {
  double p0 = 0.0;
  double p1 = 0.0;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

inline Dense make_dense(std::size_t out, std::size_t in, double weight_scale, Rng& rng) {
  Dense d;
  d.w = Matrix(out, in);
  d.w.fill_gaussian(rng, weight_scale);
  d.b.assign(out, 0.0);
  return d;
}

inline AiemParams init_aiem(std::size_t d_a, std::size_t d_f, std::size_t d_r, Rng& rng) {
  AiemParams p;
  p.w_q = Matrix(d_a, d_f);
  p.w_k = Matrix(d_a, d_f);
  p.w_v = Matrix(d_a, d_r);
  p.w_q.fill_gaussian(rng, 0.1);
  p.w_k.fill_gaussian(rng, 0.1);
  p.w_v.fill_gaussian(rng, 0.1);
  return p;
}

struct HeadShape {
  std::size_t n_segments = 0;
  std::size_t d_a = 32;
  std::size_t d_h = 16;
  std::size_t d_f = 0;
  std::size_t d_r = 0;
  std::size_t major_hidden = 64;
  std::size_t aux_hidden_0 = 64;
  std::size_t aux_hidden_1 = 48;  // deliberately different from aux_hidden_0
  double input_dropout = 0.1;
  double pooler_dropout = 0.45;
};

// Hidden weights start small because raw count features reach magnitudes of
// hundreds; a large init would pin the tanh at its rails from step one.
inline TraitHead init_head(const HeadShape& s, Rng& rng) {
  TraitHead head;
  head.n_segments = s.n_segments;
  head.post_aiem_linear = Matrix(s.d_h, s.d_a);
  head.post_aiem_linear.fill_gaussian(rng, 0.1);
  head.post_aiem_bias.assign(s.d_h, 0.0);
  auto make_classifier = [&](std::size_t width, std::size_t in) {
    Classifier c;
    c.hidden = make_dense(width, in, 0.01, rng);
    c.output = make_dense(2, width, 0.1, rng);
    c.input_dropout = s.input_dropout;
    c.pooler_dropout = s.pooler_dropout;
    return c;
  };
  head.major = make_classifier(s.major_hidden, s.n_segments * s.d_h + s.d_f);
  head.aux0 = make_classifier(s.aux_hidden_0, s.d_r + s.d_f);
  head.aux1 = make_classifier(s.aux_hidden_1, s.d_r + s.d_f);
  return head;
}

// ---------------------------------------------------------------------------
// Feature standardization (columns of F before attention; the raw vectors
// still feed the classifiers directly). Fitted on the training fold only;
// the statistics travel with the checkpoint.
// ---------------------------------------------------------------------------

struct Standardizer {
  Vec mean;
  Vec stdev;

  void fit(const std::vector<const Matrix*>& feature_matrices) {
    std::size_t cols = 0, rows = 0;
    for (const Matrix* m : feature_matrices) {
      if (!m || m->rows() == 0) continue;
      cols = m->cols();
      rows += m->rows();
    }
    mean.assign(cols, 0.0);
    stdev.assign(cols, 1.0);
    if (rows == 0) return;
    for (const Matrix* m : feature_matrices)
      for (std::size_t i = 0; i < m->rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) mean[j] += (*m)(i, j);
    for (std::size_t j = 0; j < cols; ++j) mean[j] /= static_cast<double>(rows);
    Vec var(cols, 0.0);
    for (const Matrix* m : feature_matrices)
      for (std::size_t i = 0; i < m->rows(); ++i)
        for (std::size_t j = 0; j < cols; ++j) {
          const double d = (*m)(i, j) - mean[j];
          var[j] += d * d;
        }
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = var[j] / static_cast<double>(rows);
      stdev[j] = v > 0.0 ? std::sqrt(v) : 1.0;  // constant column: leave values centered
    }
  }

  Matrix apply(const Matrix& f) const {
    Matrix out(f.rows(), f.cols());
    for (std::size_t i = 0; i < f.rows(); ++i)
      for (std::size_t j = 0; j < f.cols(); ++j) out(i, j) = (f(i, j) - mean[j]) / stdev[j];
    return out;
  }
};

// ---------------------------------------------------------------------------
// Forward
// ---------------------------------------------------------------------------

struct AiemTrace {
  Matrix q, k, v;  // N x d_a
  Matrix scores;   // N x N, scaled query-key products
  Matrix attn;     // N x N, row-stochastic
  Matrix h;        // N x d_a, attention-weighted values
};

inline AiemTrace aiem_forward(const Matrix& f, const Matrix& r, const AiemParams& params) {
  if (!f.all_finite() || !r.all_finite())
    throw std::runtime_error("attention fusion: non-finite input");
  if (f.rows() == 0 || f.rows() != r.rows())
    throw std::runtime_error("attention fusion: feature and representation row counts differ");
  if (f.cols() != params.w_q.cols() || r.cols() != params.w_v.cols())
    throw std::runtime_error("attention fusion: input dimension mismatch");
  AiemTrace t;
  t.q = matmul_bt(f, params.w_q);
  t.k = matmul_bt(f, params.w_k);
  t.v = matmul_bt(r, params.w_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_k()));
  t.scores = matmul_bt(t.q, t.k);
  for (std::size_t i = 0; i < t.scores.rows(); ++i)
    for (std::size_t j = 0; j < t.scores.cols(); ++j) t.scores(i, j) *= scale;
  t.attn = Matrix(t.scores.rows(), t.scores.cols());
  for (std::size_t i = 0; i < t.scores.rows(); ++i) t.attn.set_row(i, softmax(t.scores.row(i)));
  t.h = matmul(t.attn, t.v);
  return t;
}

struct ClassifierTrace {
  Vec input;       // post-dropout input actually consumed
  Vec input_mask;  // inverted-dropout multipliers (all 1 in evaluation)
  Vec hidden_pre;
  Vec hidden_act;   // tanh(hidden_pre)
  Vec hidden;       // post-dropout activation
  Vec hidden_mask;
  Vec logits;  // 2
  Vec p;       // softmax(logits)
};

namespace detail {

inline Vec dropout_mask(std::size_t n, double rate, Rng* rng) {
  Vec mask(n, 1.0);
  if (rng && rate > 0.0) {
    const double keep = 1.0 - rate;
    for (auto& m : mask) m = rng->next_unit() < keep ? 1.0 / keep : 0.0;
  }
  return mask;
}

}  // namespace detail

// rng == nullptr means evaluation mode (no dropout, fully deterministic).
inline ClassifierTrace run_classifier(const Classifier& c, Vec input, Rng* rng) {
  if (input.size() != c.hidden.w.cols())
    throw std::runtime_error("classifier: input dimension mismatch (got " +
                             std::to_string(input.size()) + ", expected " +
                             std::to_string(c.hidden.w.cols()) + ")");
  ClassifierTrace t;
  t.input_mask = detail::dropout_mask(input.size(), c.input_dropout, rng);
  t.input = std::move(input);
  for (std::size_t i = 0; i < t.input.size(); ++i) t.input[i] *= t.input_mask[i];
  t.hidden_pre = matvec(c.hidden.w, t.input);
  for (std::size_t i = 0; i < t.hidden_pre.size(); ++i) t.hidden_pre[i] += c.hidden.b[i];
  t.hidden_act.resize(t.hidden_pre.size());
  for (std::size_t i = 0; i < t.hidden_pre.size(); ++i) t.hidden_act[i] = std::tanh(t.hidden_pre[i]);
  t.hidden_mask = detail::dropout_mask(t.hidden_act.size(), c.pooler_dropout, rng);
  t.hidden.resize(t.hidden_act.size());
  for (std::size_t i = 0; i < t.hidden.size(); ++i) t.hidden[i] = t.hidden_act[i] * t.hidden_mask[i];
  t.logits = matvec(c.output.w, t.hidden);
  for (std::size_t i = 0; i < t.logits.size(); ++i) t.logits[i] += c.output.b[i];
  t.p = softmax(t.logits);
  return t;
}

inline PredictionDistribution to_distribution(const Vec& p) {
  return PredictionDistribution{p[0], p[1]};
}

struct MajorTrace {
  Matrix u;  // N x d_h, linearly mapped fused rows
  Vec advanced;  // the concatenated rows with the whole-sample features appended
  ClassifierTrace classifier;
};

inline MajorTrace major_forward(const Matrix& h, const Vec& f_bar, const TraitHead& head,
                                Rng* rng = nullptr) {
  if (h.rows() != head.n_segments)
    throw std::runtime_error("major head: expected " + std::to_string(head.n_segments) +
                             " segments, got " + std::to_string(h.rows()));
  MajorTrace t;
  t.u = matmul_bt(h, head.post_aiem_linear);  // N x d_h
  for (std::size_t i = 0; i < t.u.rows(); ++i)
    for (std::size_t j = 0; j < t.u.cols(); ++j) t.u(i, j) += head.post_aiem_bias[j];
  t.advanced.reserve(t.u.rows() * t.u.cols() + f_bar.size());
  for (std::size_t i = 0; i < t.u.rows(); ++i)
    for (std::size_t j = 0; j < t.u.cols(); ++j) t.advanced.push_back(t.u(i, j));
  t.advanced.insert(t.advanced.end(), f_bar.begin(), f_bar.end());
  t.classifier = run_classifier(head.major, t.advanced, rng);
  return t;
}

// Segment -> classifier assignment: even segment indices to aux0, odd to
// aux1, so each classifier predicts half of the segments.
inline const Classifier& aux_classifier_for(const TraitHead& head, std::size_t segment_index) {
  return segment_index % 2 == 0 ? head.aux0 : head.aux1;
}

inline ClassifierTrace aux_forward(const Vec& r_n, const Vec& f_n, const Classifier& classifier,
                                   Rng* rng = nullptr) {
  Vec input;
  input.reserve(r_n.size() + f_n.size());
  input.insert(input.end(), r_n.begin(), r_n.end());
  input.insert(input.end(), f_n.begin(), f_n.end());
  return run_classifier(classifier, std::move(input), rng);
}

// Everything the backward pass needs for one sample.
struct ForwardTrace {
  bool valid = false;
  Matrix f_std;   // N x d_f, standardized (attention inputs)
  Matrix f_raw;   // N x d_f, raw (aux classifier inputs)
  Vec f_bar;      // d_f, raw whole-sample features
  Matrix r;       // N x d_r
  AiemTrace aiem;
  MajorTrace major;
  std::vector<ClassifierTrace> aux;  // one per segment
};

struct SampleInput {
  Matrix f_std;
  Matrix f_raw;
  Vec f_bar;
  Matrix r;
};

inline ForwardTrace forward(const SampleInput& in, const AiemParams& params,
                            const TraitHead& head, Rng* rng = nullptr) {
  if (!all_finite(in.f_bar) || !in.f_raw.all_finite())
    throw std::runtime_error("forward: non-finite count features");
  ForwardTrace t;
  t.f_std = in.f_std;
  t.f_raw = in.f_raw;
  t.f_bar = in.f_bar;
  t.r = in.r;
  t.aiem = aiem_forward(in.f_std, in.r, params);
  t.major = major_forward(t.aiem.h, in.f_bar, head, rng);
  t.aux.reserve(in.r.rows());
  for (std::size_t n = 0; n < in.r.rows(); ++n)
    t.aux.push_back(aux_forward(in.r.row(n), in.f_raw.row(n), aux_classifier_for(head, n), rng));
  t.valid = true;
  return t;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

inline constexpr double kProbEps = 1e-12;

inline double cross_entropy(const PredictionDistribution& p, int y) {
  double py = y == 1 ? p.p1 : p.p0;
  py = std::min(std::max(py, kProbEps), 1.0 - kProbEps);
  return -std::log(py);
}

inline double major_loss(const std::vector<ForwardTrace>& traces, const std::vector<int>& labels) {
  double sum = 0.0;
  for (std::size_t k = 0; k < traces.size(); ++k)
    sum += cross_entropy(to_distribution(traces[k].major.classifier.p), labels[k]);
  return sum / static_cast<double>(traces.size());
}

// Mean over samples of the per-segment mean auxiliary cross entropy.
inline double aux_loss(const std::vector<ForwardTrace>& traces, const std::vector<int>& labels) {
  double sum = 0.0;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    double per_sample = 0.0;
    for (const auto& a : traces[k].aux) per_sample += cross_entropy(to_distribution(a.p), labels[k]);
    sum += per_sample / static_cast<double>(traces[k].aux.size());
  }
  return sum / static_cast<double>(traces.size());
}

// Exactly this evaluation order, so repeated runs are bit-identical.
inline double total_loss(double l_major, double l_aux, double lambda_major, double lambda_aux) {
  return lambda_aux * l_aux + lambda_major * l_major;
}

// ---------------------------------------------------------------------------
// Backward
// ---------------------------------------------------------------------------

struct DenseGrads {
  Matrix d_w;
  Vec d_b;
};

struct ClassifierGrads {
  DenseGrads hidden;
  DenseGrads output;
};

struct Gradients {
  Matrix d_w_q, d_w_k, d_w_v;
  Matrix d_post_aiem_linear;
  Vec d_post_aiem_bias;
  ClassifierGrads major, aux0, aux1;

  static Gradients zeros_like(const AiemParams& p, const TraitHead& head) {
    Gradients g;
    g.d_w_q = Matrix(p.w_q.rows(), p.w_q.cols());
    g.d_w_k = Matrix(p.w_k.rows(), p.w_k.cols());
    g.d_w_v = Matrix(p.w_v.rows(), p.w_v.cols());
    g.d_post_aiem_linear = Matrix(head.post_aiem_linear.rows(), head.post_aiem_linear.cols());
    g.d_post_aiem_bias.assign(head.post_aiem_bias.size(), 0.0);
    auto zero_classifier = [](const Classifier& c) {
      ClassifierGrads cg;
      cg.hidden.d_w = Matrix(c.hidden.w.rows(), c.hidden.w.cols());
      cg.hidden.d_b.assign(c.hidden.b.size(), 0.0);
      cg.output.d_w = Matrix(c.output.w.rows(), c.output.w.cols());
      cg.output.d_b.assign(c.output.b.size(), 0.0);
      return cg;
    };
    g.major = zero_classifier(head.major);
    g.aux0 = zero_classifier(head.aux0);
    g.aux1 = zero_classifier(head.aux1);
    return g;
  }

  void scale(double s) {
    for (Matrix* m : {&d_w_q, &d_w_k, &d_w_v, &d_post_aiem_linear, &major.hidden.d_w,
                      &major.output.d_w, &aux0.hidden.d_w, &aux0.output.d_w, &aux1.hidden.d_w,
                      &aux1.output.d_w})
      for (std::size_t i = 0; i < m->rows(); ++i)
        for (std::size_t j = 0; j < m->cols(); ++j) (*m)(i, j) *= s;
    for (Vec* v : {&d_post_aiem_bias, &major.hidden.d_b, &major.output.d_b, &aux0.hidden.d_b,
                   &aux0.output.d_b, &aux1.hidden.d_b, &aux1.output.d_b})
      for (auto& x : *v) x *= s;
  }
};

namespace detail {

// Backward through one classifier given dL/dlogits; accumulates parameter
// gradients and returns dL/d(pre-dropout input).
inline Vec classifier_backward(const ClassifierTrace& t, const Classifier& c, const Vec& d_logits,
                               ClassifierGrads& grads) {
  for (std::size_t i = 0; i < d_logits.size(); ++i) grads.output.d_b[i] += d_logits[i];
  add_outer(grads.output.d_w, d_logits, t.hidden);
  Vec d_hidden = matvec_t(c.output.w, d_logits);
  Vec d_pre(d_hidden.size());
  for (std::size_t i = 0; i < d_hidden.size(); ++i) {
    const double d_act = d_hidden[i] * t.hidden_mask[i];
    d_pre[i] = d_act * (1.0 - t.hidden_act[i] * t.hidden_act[i]);
  }
  for (std::size_t i = 0; i < d_pre.size(); ++i) grads.hidden.d_b[i] += d_pre[i];
  add_outer(grads.hidden.d_w, d_pre, t.input);
  Vec d_input = matvec_t(c.hidden.w, d_pre);
  for (std::size_t i = 0; i < d_input.size(); ++i) d_input[i] *= t.input_mask[i];
  return d_input;
}

inline Vec softmax_logit_grad(const Vec& p, int y, double weight) {
  Vec d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    d[i] = weight * (p[i] - (static_cast<int>(i) == y ? 1.0 : 0.0));
  return d;
}

}  // namespace detail

// Gradients of lambda_major*CE_major + (lambda_aux/N)*sum_n CE_aux_n for one
// sample, accumulated into `grads`. Returns dL/dR so the caller can push the
// chain into a trainable encoder. The caller divides by the batch size.
inline Matrix backward(const ForwardTrace& trace, int label, double lambda_major,
                       double lambda_aux, const AiemParams& params, const TraitHead& head,
                       Gradients& grads) {
  if (!trace.valid) throw std::runtime_error("backward: missing forward trace");
  const std::size_t n = trace.r.rows();
  const std::size_t d_h = head.post_aiem_linear.rows();
  const std::size_t d_r = trace.r.cols();
  Matrix d_r_total(n, d_r);

  // Major path.
  Matrix d_h_total(n, params.d_a());
  {
    const Vec d_logits =
        detail::softmax_logit_grad(trace.major.classifier.p, label, lambda_major);
    const Vec d_advanced =
        detail::classifier_backward(trace.major.classifier, head.major, d_logits, grads.major);
    Matrix d_u(n, d_h);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d_h; ++j) d_u(i, j) = d_advanced[i * d_h + j];
    // u_i = post_aiem_linear * h_i + bias
    grads.d_post_aiem_linear.add_scaled(matmul_at(d_u, trace.aiem.h), 1.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d_h; ++j) grads.d_post_aiem_bias[j] += d_u(i, j);
    d_h_total = matmul(d_u, head.post_aiem_linear);
  }

  // Aux paths: gradients flow into the classifiers and into R directly.
  if (lambda_aux != 0.0) {
    const double per_segment = lambda_aux / static_cast<double>(n);
    for (std::size_t seg = 0; seg < n; ++seg) {
      const Classifier& c = aux_classifier_for(head, seg);
      ClassifierGrads& cg = seg % 2 == 0 ? grads.aux0 : grads.aux1;
      const Vec d_logits = detail::softmax_logit_grad(trace.aux[seg].p, label, per_segment);
      const Vec d_input = detail::classifier_backward(trace.aux[seg], c, d_logits, cg);
      for (std::size_t j = 0; j < d_r; ++j) d_r_total(seg, j) += d_input[j];
    }
  }

  // Attention fusion: H = Attn * V.
  const Matrix d_attn = matmul_bt(d_h_total, trace.aiem.v);
  Matrix d_v = matmul_at(trace.aiem.attn, d_h_total);
  Matrix d_scores(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec a = trace.aiem.attn.row(i);
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += d_attn(i, j) * a[j];
    for (std::size_t j = 0; j < n; ++j) d_scores(i, j) = a[j] * (d_attn(i, j) - dot);
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(params.d_k()));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d_scores(i, j) *= scale;
  const Matrix d_q = matmul(d_scores, trace.aiem.k);
  const Matrix d_k = matmul_at(d_scores, trace.aiem.q);
  grads.d_w_q.add_scaled(matmul_at(d_q, trace.f_std), 1.0);
  grads.d_w_k.add_scaled(matmul_at(d_k, trace.f_std), 1.0);
  grads.d_w_v.add_scaled(matmul_at(d_v, trace.r), 1.0);
  d_r_total.add_scaled(matmul(d_v, params.w_v), 1.0);
  return d_r_total;
}

}  // namespace adf::model

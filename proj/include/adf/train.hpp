#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "adf/checkpoint.hpp"
#include "adf/embed.hpp"
#include "adf/ensemble.hpp"
#include "adf/matrix.hpp"
#include "adf/model.hpp"
#include "adf/rng.hpp"

namespace adf::train {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ParamGroupConfig {
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::size_t warmup_updates = 0;
};

struct TrainConfig {
  std::string profile = "essays";
  double lambda_major = 1.0;
  double lambda_aux = 0.1;
  std::size_t max_epoch = 30;
  std::size_t max_update = 2100;
  std::size_t update_frequency = 4;  // gradient-accumulation micro-batches per update
  std::size_t batch_size = 8;
  double dropout = 0.1;
  double pooler_dropout = 0.45;
  std::uint64_t seed = 1;
  ParamGroupConfig major{5e-5, 0.1, 250};
  ParamGroupConfig aux{2e-5, 0.15, 250};
  ParamGroupConfig solid{3e-6, 0.15, 500};
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Model shape.
  std::size_t d_a = 32;
  std::size_t d_h = 16;
  std::size_t major_hidden = 64;
  std::size_t aux_hidden_0 = 64;
  std::size_t aux_hidden_1 = 48;
  std::size_t d_e = 32;  // toy-encoder embedding width
  std::size_t d_r = 64;  // representation width
};

inline TrainConfig essays_defaults() { return TrainConfig{}; }

inline TrainConfig twitter_defaults() {
  TrainConfig c;
  c.profile = "twitter";
  c.max_epoch = 15;
  c.max_update = 3660;
  c.major = {5e-5, 0.1, 300};
  c.aux = {4e-5, 0.15, 300};
  c.solid = {4e-6, 0.15, 600};
  return c;
}

inline ordered_json config_to_json(const TrainConfig& c) {
  ordered_json g;
  auto group = [](const ParamGroupConfig& p) {
    return ordered_json{{"learning_rate", p.learning_rate},
                        {"weight_decay", p.weight_decay},
                        {"warmup_updates", p.warmup_updates}};
  };
  g["profile"] = c.profile;
  g["lambda_major"] = c.lambda_major;
  g["lambda_aux"] = c.lambda_aux;
  g["max_epoch"] = c.max_epoch;
  g["max_update"] = c.max_update;
  g["update_frequency"] = c.update_frequency;
  g["batch_size"] = c.batch_size;
  g["dropout"] = c.dropout;
  g["pooler_dropout"] = c.pooler_dropout;
  g["seed"] = c.seed;
  g["major_group"] = group(c.major);
  g["aux_group"] = group(c.aux);
  g["solid_group"] = group(c.solid);
  g["adam_beta1"] = c.adam_beta1;
  g["adam_beta2"] = c.adam_beta2;
  g["adam_eps"] = c.adam_eps;
  g["d_a"] = c.d_a;
  g["d_h"] = c.d_h;
  g["major_hidden"] = c.major_hidden;
  g["aux_hidden_0"] = c.aux_hidden_0;
  g["aux_hidden_1"] = c.aux_hidden_1;
  g["d_e"] = c.d_e;
  g["d_r"] = c.d_r;
  return g;
}

inline TrainConfig config_from_json(const ordered_json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& slot) {
    if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
  };
  get("profile", c.profile);
  if (c.profile == "twitter") c = twitter_defaults();
  else if (c.profile != "essays")
    throw std::runtime_error("config: unknown profile " + c.profile);
  auto group = [&](const char* key, ParamGroupConfig& p) {
    if (!j.contains(key)) return;
    const auto& g = j.at(key);
    if (g.contains("learning_rate")) p.learning_rate = g.at("learning_rate").get<double>();
    if (g.contains("weight_decay")) p.weight_decay = g.at("weight_decay").get<double>();
    if (g.contains("warmup_updates")) p.warmup_updates = g.at("warmup_updates").get<std::size_t>();
  };
  get("lambda_major", c.lambda_major);
  get("lambda_aux", c.lambda_aux);
  get("max_epoch", c.max_epoch);
  get("max_update", c.max_update);
  get("update_frequency", c.update_frequency);
  get("batch_size", c.batch_size);
  get("dropout", c.dropout);
  get("pooler_dropout", c.pooler_dropout);
  get("seed", c.seed);
  group("major_group", c.major);
  group("aux_group", c.aux);
  group("solid_group", c.solid);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("d_a", c.d_a);
  get("d_h", c.d_h);
  get("major_hidden", c.major_hidden);
  get("aux_hidden_0", c.aux_hidden_0);
  get("aux_hidden_1", c.aux_hidden_1);
  get("d_e", c.d_e);
  get("d_r", c.d_r);
  if (c.update_frequency < 1) throw std::runtime_error("config: update_frequency must be >= 1");
  return c;
}

// ---------------------------------------------------------------------------
// Parameter groups
// ---------------------------------------------------------------------------

// Fusion projections, the post-fusion linear map, and the major classifier
// train as the major group; the two aux classifiers as the aux group; the
// encoder as the slow "solid" group.
inline std::string group_for_tensor(const std::string& name) {
  auto starts_with = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
  if (starts_with("aiem.") || starts_with("head.post_aiem") || starts_with("head.major."))
    return "major";
  if (starts_with("head.aux0.") || starts_with("head.aux1.")) return "aux";
  if (starts_with("encoder.")) return "solid";
  throw std::runtime_error("no parameter group for tensor " + name);
}

inline std::vector<std::string> assign_groups(const std::vector<adf::ckpt::TensorRef>& tensors) {
  std::vector<std::string> groups;
  groups.reserve(tensors.size());
  for (const auto& t : tensors) groups.push_back(group_for_tensor(t.name));
  return groups;
}

// Linear ramp 0 -> lr over warmup_updates, then constant.
inline double lr_schedule(const ParamGroupConfig& g, std::size_t update_index) {
  if (g.warmup_updates == 0 || update_index >= g.warmup_updates) return g.learning_rate;
  return g.learning_rate * static_cast<double>(update_index) /
         static_cast<double>(g.warmup_updates);
}

// ---------------------------------------------------------------------------
// Optimizer: adaptive moments with decoupled weight decay. Decay is scaled
// by the effective learning rate, so lr = 0 leaves parameters untouched.
// ---------------------------------------------------------------------------

struct AdamState {
  std::vector<Vec> m;  // first moments, one per tensor
  std::vector<Vec> v;  // second moments
  std::size_t step = 0;
};

inline AdamState make_adam_state(const std::vector<adf::ckpt::TensorRef>& tensors) {
  AdamState s;
  s.m.reserve(tensors.size());
  s.v.reserve(tensors.size());
  for (const auto& t : tensors) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

inline void adamw_step(std::vector<adf::ckpt::TensorRef>& params,
                       const std::vector<const double*>& grads,
                       const std::vector<std::size_t>& grad_sizes,
                       const std::vector<const ParamGroupConfig*>& group_cfg,
                       const TrainConfig& cfg, AdamState& state, std::size_t update_index) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(state.step));
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grad_sizes[t])
      throw std::runtime_error("optimizer: gradient shape mismatch at " + params[t].name);
    const double lr = lr_schedule(*group_cfg[t], update_index);
    const double wd = group_cfg[t]->weight_decay;
    double* p = params[t].data();
    const double* g = grads[t];
    Vec& m = state.m[t];
    Vec& v = state.v[t];
    for (std::size_t i = 0; i < grad_sizes[t]; ++i) {
      m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * g[i];
      v[i] = cfg.adam_beta2 * v[i] + (1.0 - cfg.adam_beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= lr * (m_hat / (std::sqrt(v_hat) + cfg.adam_eps) + wd * p[i]);
    }
  }
}

// ---------------------------------------------------------------------------
// Data carried into training: featurized, segmented samples.
// ---------------------------------------------------------------------------

struct TrainSample {
  std::string id;
  int label = 0;   // the selected trait dimension
  Matrix f_raw;    // N x d_f count features per segment
  Vec f_bar;       // d_f whole-sample count features
  Matrix r_fixed;  // N x d_r, used when no trainable encoder is attached
  std::vector<std::vector<std::string>> tokens;  // per segment, encoder path
};

struct Dataset {
  std::vector<TrainSample> samples;
  std::size_t n_segments = 0;
  std::size_t d_f = 0;
};

// ---------------------------------------------------------------------------
// Forward helpers shared by training, evaluation, and the CLI.
// ---------------------------------------------------------------------------

inline Matrix representation_for(const adf::ckpt::ModelState& state, const TrainSample& sample,
                                 adf::embed::ToyEncoderTrace* trace = nullptr) {
  if (state.has_encoder)
    return adf::embed::embed_toy(sample.tokens, state.encoder, trace).rows;
  return sample.r_fixed;
}

inline adf::model::SampleInput make_input(const adf::ckpt::ModelState& state,
                                          const TrainSample& sample, const Matrix& r) {
  adf::model::SampleInput in;
  in.f_raw = sample.f_raw;
  in.f_std = state.standardizer.apply(sample.f_raw);
  in.f_bar = sample.f_bar;
  in.r = r;
  return in;
}

struct Prediction {
  int major_label = 0;
  adf::ensemble::EnsembleDecision decision;
  adf::model::ForwardTrace trace;
};

inline Prediction predict(const adf::ckpt::ModelState& state, const TrainSample& sample) {
  Prediction p;
  const Matrix r = representation_for(state, sample);
  p.trace = adf::model::forward(make_input(state, sample, r), state.aiem, state.head, nullptr);
  p.decision = adf::ensemble::decide(p.trace);
  p.major_label = p.decision.major_label;
  return p;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainResult {
  std::size_t updates_applied = 0;
  std::size_t epochs_run = 0;
  std::vector<double> epoch_mean_loss;  // total loss averaged over the epoch's samples
};

namespace detail {

// Gradient views in collect_tensors order.
struct GradBuffers {
  adf::model::Gradients model;
  adf::embed::ToyEncoderGrads encoder;
  std::size_t samples = 0;

  void reset(const adf::ckpt::ModelState& state) {
    model = adf::model::Gradients::zeros_like(state.aiem, state.head);
    if (state.has_encoder) {
      encoder.d_table = Matrix(state.encoder.table.rows(), state.encoder.table.cols());
      encoder.d_projection =
          Matrix(state.encoder.projection.rows(), state.encoder.projection.cols());
    }
    samples = 0;
  }

  // Same order as ckpt::collect_tensors.
  void views(const adf::ckpt::ModelState& state, std::vector<const double*>& ptrs,
             std::vector<std::size_t>& sizes) {
    ptrs.clear();
    sizes.clear();
    auto mat = [&](const Matrix& m) {
      ptrs.push_back(m.data());
      sizes.push_back(m.size());
    };
    auto vec = [&](const Vec& v) {
      ptrs.push_back(v.data());
      sizes.push_back(v.size());
    };
    auto classifier = [&](const adf::model::ClassifierGrads& c) {
      mat(c.hidden.d_w);
      vec(c.hidden.d_b);
      mat(c.output.d_w);
      vec(c.output.d_b);
    };
    mat(model.d_w_q);
    mat(model.d_w_k);
    mat(model.d_w_v);
    mat(model.d_post_aiem_linear);
    vec(model.d_post_aiem_bias);
    classifier(model.major);
    classifier(model.aux0);
    classifier(model.aux1);
    if (state.has_encoder) {
      mat(encoder.d_table);
      mat(encoder.d_projection);
    }
  }

  void scale(double s, const adf::ckpt::ModelState& state) {
    model.scale(s);
    if (state.has_encoder) {
      for (Matrix* m : {&encoder.d_table, &encoder.d_projection})
        for (std::size_t i = 0; i < m->size(); ++i) m->data()[i] *= s;
    }
  }
};

}  // namespace detail

// One sample's contribution to the accumulated gradients; returns its loss.
inline double accumulate_sample(const adf::ckpt::ModelState& state, const TrainSample& sample,
                                const TrainConfig& cfg, Rng& rng, detail::GradBuffers& grads) {
  adf::embed::ToyEncoderTrace enc_trace;
  const Matrix r = representation_for(state, sample,
                                      state.has_encoder ? &enc_trace : nullptr);
  const adf::model::ForwardTrace trace =
      adf::model::forward(make_input(state, sample, r), state.aiem, state.head, &rng);
  const double l_major =
      adf::model::cross_entropy(adf::model::to_distribution(trace.major.classifier.p), sample.label);
  double l_aux = 0.0;
  for (const auto& a : trace.aux)
    l_aux += adf::model::cross_entropy(adf::model::to_distribution(a.p), sample.label);
  l_aux /= static_cast<double>(trace.aux.size());
  const double loss = adf::model::total_loss(l_major, l_aux, cfg.lambda_major, cfg.lambda_aux);
  if (!std::isfinite(loss))
    throw std::runtime_error("non-finite loss at sample " + sample.id);
  const Matrix d_r = adf::model::backward(trace, sample.label, cfg.lambda_major, cfg.lambda_aux,
                                          state.aiem, state.head, grads.model);
  if (state.has_encoder)
    adf::embed::toy_encoder_backward(d_r, enc_trace, state.encoder, grads.encoder);
  ++grads.samples;
  return loss;
}

// Deterministic given cfg.seed: one generator drives batch order and every
// dropout mask in a fixed sequence. Stops at max_epoch or max_update,
// whichever comes first.
inline TrainResult train(adf::ckpt::ModelState& state, const Dataset& dataset,
                         const TrainConfig& cfg) {
  if (dataset.samples.empty()) throw std::runtime_error("train: empty dataset");
  TrainResult result;
  if (cfg.max_update == 0 || cfg.max_epoch == 0) return result;

  std::vector<adf::ckpt::TensorRef> params = adf::ckpt::collect_tensors(state);
  const std::vector<std::string> groups = assign_groups(params);
  std::vector<const ParamGroupConfig*> group_cfg;
  group_cfg.reserve(groups.size());
  for (const auto& g : groups)
    group_cfg.push_back(g == "major" ? &cfg.major : (g == "aux" ? &cfg.aux : &cfg.solid));
  AdamState adam = make_adam_state(params);

  Rng rng(cfg.seed);
  detail::GradBuffers grads;
  grads.reset(state);
  std::vector<const double*> grad_ptrs;
  std::vector<std::size_t> grad_sizes;

  std::vector<std::size_t> order(dataset.samples.size());
  std::iota(order.begin(), order.end(), 0);

  std::size_t update_index = 0;
  std::size_t micro_batches = 0;
  bool stopped = false;

  auto apply_update = [&]() {
    if (grads.samples == 0) return;
    grads.scale(1.0 / static_cast<double>(grads.samples), state);
    grads.views(state, grad_ptrs, grad_sizes);
    adamw_step(params, grad_ptrs, grad_sizes, group_cfg, cfg, adam, update_index);
    ++update_index;
    ++result.updates_applied;
    grads.reset(state);
    micro_batches = 0;
    if (update_index >= cfg.max_update) stopped = true;
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epoch && !stopped; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t epoch_samples = 0;
    for (std::size_t start = 0; start < order.size() && !stopped; start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (std::size_t i = start; i < end; ++i) {
        epoch_loss += accumulate_sample(state, dataset.samples[order[i]], cfg, rng, grads);
        ++epoch_samples;
      }
      if (++micro_batches >= cfg.update_frequency) apply_update();
    }
    if (!stopped && grads.samples > 0) apply_update();  // flush the epoch remainder
    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_samples));
    ++result.epochs_run;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct Counts {
  std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
  void add(int predicted, int actual) {
    if (predicted == 1 && actual == 1) ++tp;
    else if (predicted == 0 && actual == 0) ++tn;
    else if (predicted == 1 && actual == 0) ++fp;
    else ++fn;
  }
  std::size_t total() const { return tp + tn + fp + fn; }
  double accuracy() const {
    return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
  }
};

struct TraitMetrics {
  std::string trait;
  double accuracy = 0.0;
  std::vector<double> fold_accuracy;
  Counts counts;
};

struct KfoldReport {
  TraitMetrics major;      // argmax of the major head alone
  TraitMetrics ensembled;  // after the self-ensemble correction
  std::vector<std::string> warnings;
};

// Seeded partition into k folds with sizes differing by at most one.
inline std::vector<std::vector<std::size_t>> kfold_partition(std::size_t n, std::size_t k,
                                                             std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  return folds;
}

// Builds a fresh model for each fold. The builder receives a fold-specific
// generator so fold runs are independent and reproducible.
template <typename StateBuilder>
inline KfoldReport kfold_evaluate(const Dataset& dataset, const TrainConfig& cfg, std::size_t k,
                                  const std::string& trait, StateBuilder&& build_state) {
  if (dataset.samples.size() < k)
    throw std::runtime_error("kfold: dataset smaller than fold count");
  KfoldReport report;
  report.major.trait = trait;
  report.ensembled.trait = trait;
  const auto folds = kfold_partition(dataset.samples.size(), k, cfg.seed);

  for (std::size_t fold = 0; fold < k; ++fold) {
    Dataset train_split;
    train_split.n_segments = dataset.n_segments;
    train_split.d_f = dataset.d_f;
    for (std::size_t f = 0; f < k; ++f)
      if (f != fold)
        for (std::size_t idx : folds[f]) train_split.samples.push_back(dataset.samples[idx]);

    bool saw0 = false, saw1 = false;
    for (std::size_t idx : folds[fold]) (dataset.samples[idx].label == 1 ? saw1 : saw0) = true;
    if (!(saw0 && saw1))
      report.warnings.push_back("fold " + std::to_string(fold) + " holds a single class");

    Rng fold_rng(cfg.seed + 1000 * (fold + 1));
    adf::ckpt::ModelState state = build_state(train_split, fold_rng);
    train(state, train_split, cfg);

    Counts fold_major, fold_ens;
    for (std::size_t idx : folds[fold]) {
      const Prediction p = predict(state, dataset.samples[idx]);
      fold_major.add(p.major_label, dataset.samples[idx].label);
      fold_ens.add(p.decision.final_label, dataset.samples[idx].label);
    }
    report.major.fold_accuracy.push_back(fold_major.accuracy());
    report.ensembled.fold_accuracy.push_back(fold_ens.accuracy());
    report.major.counts.tp += fold_major.tp;
    report.major.counts.tn += fold_major.tn;
    report.major.counts.fp += fold_major.fp;
    report.major.counts.fn += fold_major.fn;
    report.ensembled.counts.tp += fold_ens.tp;
    report.ensembled.counts.tn += fold_ens.tn;
    report.ensembled.counts.fp += fold_ens.fp;
    report.ensembled.counts.fn += fold_ens.fn;
  }
  report.major.accuracy = report.major.counts.accuracy();
  report.ensembled.accuracy = report.ensembled.counts.accuracy();
  return report;
}

namespace detail {

inline adf::ckpt::ModelState init_state_common(const Dataset& train_split, const TrainConfig& cfg,
                                               std::size_t d_r, Rng& rng) {
  adf::ckpt::ModelState state;
  state.aiem = adf::model::init_aiem(cfg.d_a, train_split.d_f, d_r, rng);
  adf::model::HeadShape shape;
  shape.n_segments = train_split.n_segments;
  shape.d_a = cfg.d_a;
  shape.d_h = cfg.d_h;
  shape.d_f = train_split.d_f;
  shape.d_r = d_r;
  shape.major_hidden = cfg.major_hidden;
  shape.aux_hidden_0 = cfg.aux_hidden_0;
  shape.aux_hidden_1 = cfg.aux_hidden_1;
  shape.input_dropout = cfg.dropout;
  shape.pooler_dropout = cfg.pooler_dropout;
  state.head = adf::model::init_head(shape, rng);
  std::vector<const Matrix*> feature_rows;
  feature_rows.reserve(train_split.samples.size());
  for (const auto& s : train_split.samples) feature_rows.push_back(&s.f_raw);
  state.standardizer.fit(feature_rows);
  return state;
}

}  // namespace detail

// Fold-model builder for fixed (file-backed) representations: standardizer
// fitted on the training split's segment features, heads initialized from
// the fold generator, no encoder.
inline adf::ckpt::ModelState build_fixed_embedding_state(const Dataset& train_split,
                                                         const TrainConfig& cfg, Rng& rng) {
  const std::size_t d_r =
      train_split.samples.empty() ? cfg.d_r : train_split.samples.front().r_fixed.cols();
  return detail::init_state_common(train_split, cfg, d_r, rng);
}

// Fold-model builder with a trainable toy encoder whose vocabulary comes
// from the training split only.
inline adf::ckpt::ModelState build_toy_encoder_state(const Dataset& train_split,
                                                     const TrainConfig& cfg, Rng& rng) {
  adf::ckpt::ModelState state = detail::init_state_common(train_split, cfg, cfg.d_r, rng);
  std::vector<std::vector<std::string>> token_lists;
  for (const auto& s : train_split.samples)
    for (const auto& segment_tokens : s.tokens) token_lists.push_back(segment_tokens);
  state.encoder = adf::embed::init_toy_encoder(token_lists, cfg.d_e, cfg.d_r, rng);
  state.has_encoder = true;
  return state;
}

}  // namespace adf::train

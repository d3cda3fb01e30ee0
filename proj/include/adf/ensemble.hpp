#pragma once

#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "adf/model.hpp"

namespace adf::ensemble {

using adf::model::PredictionDistribution;

struct VoteResult {
  int label = 0;
  double confidence = 0.0;  // mean positive-class probability behind the decision
};

struct EnsembleDecision {
  int final_label = 0;
  bool corrected = false;
  int major_label = 0;
  VoteResult soft0, hard0, soft1, hard1;
};

// A per-segment distribution tagged with the classifier that produced it.
struct TaggedDistribution {
  std::size_t classifier = 0;  // 0 or 1
  PredictionDistribution p;
};

// Group g = the distributions produced by aux classifier g.
inline std::pair<std::vector<PredictionDistribution>, std::vector<PredictionDistribution>>
split_groups(const std::vector<TaggedDistribution>& aux) {
  std::pair<std::vector<PredictionDistribution>, std::vector<PredictionDistribution>> groups;
  for (const auto& t : aux) (t.classifier == 0 ? groups.first : groups.second).push_back(t.p);
  if (groups.first.empty() || groups.second.empty()) throw std::runtime_error("empty group");
  return groups;
}

// Mean probabilities, then argmax. An exact tie of the averages resolves to
// `tie_break` (the major prediction's label), keeping correction conservative.
inline VoteResult soft_vote(const std::vector<PredictionDistribution>& group, int tie_break) {
  double sum0 = 0.0, sum1 = 0.0;
  for (const auto& p : group) {
    sum0 += p.p0;
    sum1 += p.p1;
  }
  const double mean0 = sum0 / static_cast<double>(group.size());
  const double mean1 = sum1 / static_cast<double>(group.size());
  VoteResult v;
  v.confidence = mean1;
  if (mean1 > mean0)
    v.label = 1;
  else if (mean0 > mean1)
    v.label = 0;
  else
    v.label = tie_break;
  return v;
}

// Each member votes its own argmax (a member with equal probabilities votes
// `tie_break`); the majority wins; a split group falls back to that group's
// soft-vote label.
inline VoteResult hard_vote(const std::vector<PredictionDistribution>& group, int tie_break) {
  std::size_t ones = 0;
  for (const auto& p : group) {
    const int member = p.p1 > p.p0 ? 1 : (p.p0 > p.p1 ? 0 : tie_break);
    ones += static_cast<std::size_t>(member);
  }
  const std::size_t zeros = group.size() - ones;
  VoteResult v;
  v.confidence = soft_vote(group, tie_break).confidence;
  if (ones > zeros)
    v.label = 1;
  else if (zeros > ones)
    v.label = 0;
  else
    v.label = soft_vote(group, tie_break).label;
  return v;
}

// Correction rule: the major prediction is overturned only when both vote
// kinds of both groups agree on the opposite label.
inline EnsembleDecision self_ensemble(const PredictionDistribution& major,
                                      const std::vector<PredictionDistribution>& group0,
                                      const std::vector<PredictionDistribution>& group1) {
  if (group0.empty() || group1.empty()) throw std::runtime_error("empty group");
  EnsembleDecision d;
  d.major_label = major.p1 > major.p0 ? 1 : 0;
  d.soft0 = soft_vote(group0, d.major_label);
  d.hard0 = hard_vote(group0, d.major_label);
  d.soft1 = soft_vote(group1, d.major_label);
  d.hard1 = hard_vote(group1, d.major_label);
  const bool unanimous = d.soft0.label == d.hard0.label && d.hard0.label == d.soft1.label &&
                         d.soft1.label == d.hard1.label;
  if (unanimous && d.soft0.label != d.major_label) {
    d.final_label = d.soft0.label;
    d.corrected = true;
  } else {
    d.final_label = d.major_label;
    d.corrected = false;
  }
  return d;
}

// Convenience: run the whole correction from a sample's forward trace.
inline EnsembleDecision decide(const adf::model::ForwardTrace& trace) {
  std::vector<TaggedDistribution> tagged;
  tagged.reserve(trace.aux.size());
  for (std::size_t n = 0; n < trace.aux.size(); ++n)
    tagged.push_back({n % 2, adf::model::to_distribution(trace.aux[n].p)});
  auto groups = split_groups(tagged);
  return self_ensemble(adf::model::to_distribution(trace.major.classifier.p), groups.first,
                       groups.second);
}

}  // namespace adf::ensemble

#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "patchnet/error.hpp"
#include "patchnet/rng.hpp"
#include "patchnet/train.hpp"

namespace patchnet::eval {

struct Metrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> auc;  // absent when only one class is present
  double threshold = 0.5;
};

// Confusion-matrix metrics at a decision threshold. Precision and recall are
// defined as 0 when their denominator is 0, and F1 follows.
inline Metrics classification_metrics(const std::vector<double>& scores,
                                      const std::vector<int>& labels,
                                      double threshold = 0.5) {
  if (scores.size() != labels.size())
    fail("scores and labels differ in length");
  if (scores.empty()) fail("no examples to evaluate");
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool pos = labels[i] == 1;
    if (pred && pos) ++tp;
    else if (pred && !pos) ++fp;
    else if (!pred && pos) ++fn;
    else ++tn;
  }
  Metrics m;
  m.threshold = threshold;
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(scores.size());
  m.precision = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall > 0.0)
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

// Mann-Whitney rank statistic: the fraction of (positive, negative) pairs
// ordered correctly, ties counting one half. Computed via average ranks,
// which agrees exactly with the O(n^2) pairwise definition.
inline std::optional<double> auc(const std::vector<double>& scores,
                                 const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    fail("scores and labels differ in length");
  std::size_t n_pos = 0, n_neg = 0;
  for (int l : labels) (l == 1 ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;

  std::vector<std::size_t> idx(scores.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });

  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && scores[idx[j + 1]] == scores[idx[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t t = i; t <= j; ++t)
      if (labels[idx[t]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

inline Metrics evaluate(const std::vector<double>& scores,
                        const std::vector<int>& labels,
                        double threshold = 0.5) {
  Metrics m = classification_metrics(scores, labels, threshold);
  m.auc = auc(scores, labels);
  return m;
}

// Stratified fold assignment: per class, a seeded shuffle dealt round-robin,
// so class proportions are preserved up to the remainder. Returns k index
// sets (ascending within each fold); every index lands in exactly one fold.
inline std::vector<std::vector<std::size_t>> stratified_folds(
    const std::vector<int>& labels, int k, Rng& rng) {
  if (k < 2) fail("cross-validation needs k >= 2");
  if (labels.size() < static_cast<std::size_t>(k))
    fail("fewer labeled patches than folds");
  std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
  for (int cls : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) members.push_back(i);
    rng.shuffle(members);
    for (std::size_t j = 0; j < members.size(); ++j)
      folds[j % static_cast<std::size_t>(k)].push_back(members[j]);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

struct CvResult {
  std::vector<Metrics> folds;
  Metrics mean;
};

// The evaluation protocol at desk scale: stratified k-fold, a fresh model
// and a fresh dictionary per fold (built from that fold's training patches
// only), fold seeds derived as seed + fold index.
inline CvResult kfold_cv(const std::vector<corpus::Patch>& patches, int k,
                         const model::Hyperparameters& hp,
                         const train::TrainOptions& base_opt) {
  train::detail::require_labeled(patches);
  std::vector<int> labels;
  labels.reserve(patches.size());
  for (const auto& p : patches) labels.push_back(*p.label);
  const bool has_both =
      std::count(labels.begin(), labels.end(), 1) > 0 &&
      std::count(labels.begin(), labels.end(), 0) > 0;
  if (!has_both) fail("cross-validation needs both classes present");

  Rng fold_rng(base_opt.seed);
  const auto folds = stratified_folds(labels, k, fold_rng);

  CvResult result;
  for (std::size_t fi = 0; fi < folds.size(); ++fi) {
    std::vector<bool> in_test(patches.size(), false);
    for (std::size_t i : folds[fi]) in_test[i] = true;
    std::vector<corpus::Patch> train_set, test_set;
    for (std::size_t i = 0; i < patches.size(); ++i)
      (in_test[i] ? test_set : train_set).push_back(patches[i]);

    train::TrainOptions opt = base_opt;
    opt.seed = base_opt.seed + fi;
    auto trained = train::train_on_patches(train_set, hp, opt);

    std::vector<double> scores;
    std::vector<int> test_labels;
    for (const auto& [sha, score] :
         train::predict_patches(trained.model, test_set)) {
      (void)sha;
      scores.push_back(score);
    }
    for (const auto& p : test_set) test_labels.push_back(*p.label);
    result.folds.push_back(evaluate(scores, test_labels));
  }

  Metrics& mean = result.mean;
  double auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (const auto& f : result.folds) {
    mean.accuracy += f.accuracy;
    mean.precision += f.precision;
    mean.recall += f.recall;
    mean.f1 += f.f1;
    if (f.auc) {
      auc_sum += *f.auc;
      ++auc_n;
    }
  }
  const double nf = static_cast<double>(result.folds.size());
  mean.accuracy /= nf;
  mean.precision /= nf;
  mean.recall /= nf;
  mean.f1 /= nf;
  if (auc_n) mean.auc = auc_sum / static_cast<double>(auc_n);
  return result;
}

}  // namespace patchnet::eval

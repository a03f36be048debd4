#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dcnn/data.hpp"
#include "dcnn/network.hpp"
#include "dcnn/tensor.hpp"

namespace dcnn {

/// Counts with positive class = cancer = label 1.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
};

ConfusionMatrix confusion(std::span<const int> preds,
                          std::span<const int> labels);

/// TP/(TP+FN); NaN when no positives were evaluated. Undefined ratios are
/// surfaced as NaN plus a report flag, never coerced to 0 or 1.
double sensitivity(const ConfusionMatrix& cm);
/// TN/(TN+FP); NaN when no negatives were evaluated.
double specificity(const ConfusionMatrix& cm);
/// TP/(TP+FP); NaN when nothing was predicted positive.
double ppv(const ConfusionMatrix& cm);
/// Harmonic mean 2*ppv*tpr/(ppv+tpr); NaN when both are zero or either is
/// itself undefined.
double f1_score(double ppv_value, double tpr_value);

struct WeightedLogLossResult {
  double value = 0.0;
  /// False when only one class is present, in which case `value` falls
  /// back to the unweighted mean and callers should flag it.
  bool weight_defined = true;
  double unweighted = 0.0;
};

/// Mean negative log predicted probability of the true class, with
/// cancer-class terms weighted by f_free/f_cancer over the evaluated set.
/// Probabilities are clipped to [1e-15, 1-1e-15] before the log.
WeightedLogLossResult weighted_log_loss(const Tensor& probs,
                                        std::span<const int> labels);

struct MetricsReport {
  double sensitivity = 0.0;
  double specificity = 0.0;
  double ppv = 0.0;
  double tpr = 0.0;  // equals sensitivity by definition
  double f1 = 0.0;
  double accuracy = 0.0;
  double weighted_log_loss = 0.0;
  ConfusionMatrix confusion;
  std::size_t n = 0;
  std::size_t f_cancer = 0;
  std::size_t f_free = 0;
  double threshold = 0.5;
  std::vector<std::string> flags;
};

/// Runs the network over the dataset, thresholds p(cancer) >= threshold,
/// and assembles the full metric suite. Deterministic.
MetricsReport evaluate(const Network& net, const LabeledDataset& dataset,
                       double threshold = 0.5);

/// Flat JSON object: sensitivity, specificity, ppv, tpr, f1, accuracy,
/// weighted_log_loss, tp, fp, tn, fn, n, threshold, flags[]. Undefined
/// metrics serialize as null.
std::string report_to_json(const MetricsReport& report);

/// Human-readable confusion-matrix block with the headline metrics.
std::string confusion_text(const MetricsReport& report);

}  // namespace dcnn

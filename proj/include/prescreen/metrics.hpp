#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "prescreen/errors.hpp"

namespace prescreen {

// ---------------------------------------------------------------------------
// Classification and regression metrics with the exclude-NA policy: missing
// predictions are dropped and counted, never imputed. Undefined ratios are
// reported as 0 with a flag so reports always serialize.
// ---------------------------------------------------------------------------

enum class binary_outcome { positive, negative, na };

struct ConfusionMatrix {
  long tp = 0;
  long fp = 0;
  long fn = 0;
  long tn = 0;

  long n() const { return tp + fp + fn + tn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

struct ConfusionResult {
  ConfusionMatrix cm;
  long n_excluded = 0;
};

struct ClassificationReport {
  double f1 = 0.0;
  double macro_f1 = 0.0;  // mean of positive-class and negative-class F1
  double accuracy = 0.0;
  double recall = 0.0;
  double precision = 0.0;
  double roc_auc = 0.0;
  long n = 0;
  long n_excluded = 0;
  std::vector<std::string> flags;  // zero-denominator and degenerate-input notes
};

struct RegressionReport {
  double mae = 0.0;
  double rmse = 0.0;
  double r_squared = 0.0;  // may be negative; 0 + flag when undefined
  long n = 0;
  long n_excluded = 0;
  std::vector<std::string> flags;
};

struct ThresholdSweep {
  std::map<int, double> accuracy_by_threshold;  // thresholds 3..7
  int best_threshold = 0;  // max accuracy, ties broken toward the lower threshold
};

inline constexpr int kThresholdMin = 3;
inline constexpr int kThresholdMax = 7;

// --- operations ------------------------------------------------------------

// positive iff likelihood >= threshold; NA preserved. Throws threshold_out_of_range.
std::map<int, binary_outcome> binarize(const std::map<int, std::optional<int>>& likelihoods,
                                       int threshold);

// NA predictions are excluded and counted. Throws missing_label when a non-NA
// prediction has no label.
ConfusionResult confusion(const std::map<int, binary_outcome>& preds,
                          const std::map<int, int>& labels);

// Pair-counting AUC: (#(pos>neg) + 0.5 * #(pos==neg)) / (#pos * #neg).
// Throws degenerate_classes unless both classes are present after NA exclusion.
double roc_auc(const std::map<int, double>& scores, const std::map<int, int>& labels);

// Metrics from a confusion matrix plus AUC over the raw (un-binarized) scores.
// Pass empty scores to skip AUC (reported as 0 with a flag). Throws empty_input
// when the matrix is empty.
ClassificationReport classification_report(const ConfusionResult& cr,
                                           const std::map<int, double>& scores = {},
                                           const std::map<int, int>& labels = {});

ThresholdSweep threshold_sweep(const std::map<int, std::optional<int>>& likelihoods,
                               const std::map<int, int>& labels,
                               int threshold_min = kThresholdMin,
                               int threshold_max = kThresholdMax);

// MAE / RMSE / R^2 over non-NA pairs. Throws insufficient_data when no pair
// survives; R^2 needs >= 2 pairs and non-constant truths, else 0 + flag.
RegressionReport regression_report(const std::map<int, std::optional<int>>& preds,
                                   const std::map<int, int>& truths);

// Fixed 3-decimal rendering used by every serialized report.
std::string format3(double v);

}  // namespace prescreen

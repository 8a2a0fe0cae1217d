#include "prescreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace prescreen {

namespace {

// 0-denominator ratios become 0 and record a flag instead of propagating NaN.
double ratio_or_zero(double num, double den, const char* what,
                     std::vector<std::string>& flags) {
  if (den == 0.0) {
    flags.push_back(std::string(what) + " undefined (zero denominator), reported as 0");
    return 0.0;
  }
  return num / den;
}

}  // namespace

std::string format3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

std::map<int, binary_outcome> binarize(const std::map<int, std::optional<int>>& likelihoods,
                                       int threshold) {
  if (threshold < kThresholdMin || threshold > kThresholdMax) {
    throw error(errc::threshold_out_of_range,
                "threshold " + std::to_string(threshold) + " outside 3..7");
  }
  std::map<int, binary_outcome> out;
  for (const auto& [id, lik] : likelihoods) {
    if (!lik.has_value()) {
      out[id] = binary_outcome::na;
    } else {
      out[id] = *lik >= threshold ? binary_outcome::positive : binary_outcome::negative;
    }
  }
  return out;
}

ConfusionResult confusion(const std::map<int, binary_outcome>& preds,
                          const std::map<int, int>& labels) {
  ConfusionResult r;
  for (const auto& [id, pred] : preds) {
    if (pred == binary_outcome::na) {
      ++r.n_excluded;
      continue;
    }
    auto it = labels.find(id);
    if (it == labels.end()) {
      throw error(errc::missing_label, "participant " + std::to_string(id));
    }
    const bool truth_pos = it->second != 0;
    const bool pred_pos = pred == binary_outcome::positive;
    if (pred_pos && truth_pos) ++r.cm.tp;
    else if (pred_pos && !truth_pos) ++r.cm.fp;
    else if (!pred_pos && truth_pos) ++r.cm.fn;
    else ++r.cm.tn;
  }
  return r;
}

double roc_auc(const std::map<int, double>& scores, const std::map<int, int>& labels) {
  std::vector<double> pos, neg;
  for (const auto& [id, score] : scores) {
    auto it = labels.find(id);
    if (it == labels.end()) throw error(errc::missing_label, "participant " + std::to_string(id));
    (it->second != 0 ? pos : neg).push_back(score);
  }
  if (pos.empty() || neg.empty()) {
    throw error(errc::degenerate_classes, "need at least one positive and one negative");
  }
  double wins = 0.0;
  for (double p : pos) {
    for (double q : neg) {
      if (p > q) wins += 1.0;
      else if (p == q) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

ClassificationReport classification_report(const ConfusionResult& cr,
                                           const std::map<int, double>& scores,
                                           const std::map<int, int>& labels) {
  const ConfusionMatrix& cm = cr.cm;
  if (cm.n() == 0) throw error(errc::empty_input, "empty confusion matrix");

  ClassificationReport rep;
  rep.n = cm.n();
  rep.n_excluded = cr.n_excluded;

  const auto tp = static_cast<double>(cm.tp);
  const auto fp = static_cast<double>(cm.fp);
  const auto fn = static_cast<double>(cm.fn);
  const auto tn = static_cast<double>(cm.tn);

  rep.precision = ratio_or_zero(tp, tp + fp, "precision", rep.flags);
  rep.recall = ratio_or_zero(tp, tp + fn, "recall", rep.flags);
  rep.f1 = ratio_or_zero(2.0 * tp, 2.0 * tp + fp + fn, "f1", rep.flags);
  const double neg_f1 = ratio_or_zero(2.0 * tn, 2.0 * tn + fp + fn, "negative-class f1", rep.flags);
  rep.macro_f1 = 0.5 * (rep.f1 + neg_f1);
  rep.accuracy = (tp + tn) / static_cast<double>(cm.n());

  if (scores.empty()) {
    rep.flags.push_back("roc_auc unavailable (no scores), reported as 0");
  } else {
    try {
      rep.roc_auc = roc_auc(scores, labels);
    } catch (const error& e) {
      if (e.code() != errc::degenerate_classes) throw;
      rep.flags.push_back("roc_auc undefined (single-class input), reported as 0");
    }
  }
  return rep;
}

ThresholdSweep threshold_sweep(const std::map<int, std::optional<int>>& likelihoods,
                               const std::map<int, int>& labels, int threshold_min,
                               int threshold_max) {
  ThresholdSweep sweep;
  double best_acc = -1.0;
  for (int thr = threshold_min; thr <= threshold_max; ++thr) {
    const auto cr = confusion(binarize(likelihoods, thr), labels);
    if (cr.cm.n() == 0) throw error(errc::empty_input, "no usable predictions");
    const double acc =
        static_cast<double>(cr.cm.tp + cr.cm.tn) / static_cast<double>(cr.cm.n());
    sweep.accuracy_by_threshold[thr] = acc;
    if (acc > best_acc) {  // strict: ties keep the lower threshold
      best_acc = acc;
      sweep.best_threshold = thr;
    }
  }
  return sweep;
}

RegressionReport regression_report(const std::map<int, std::optional<int>>& preds,
                                   const std::map<int, int>& truths) {
  std::vector<std::pair<double, double>> pairs;  // (pred, truth)
  RegressionReport rep;
  for (const auto& [id, pred] : preds) {
    if (!pred.has_value()) {
      ++rep.n_excluded;
      continue;
    }
    auto it = truths.find(id);
    if (it == truths.end()) throw error(errc::missing_label, "participant " + std::to_string(id));
    pairs.emplace_back(static_cast<double>(*pred), static_cast<double>(it->second));
  }
  if (pairs.empty()) throw error(errc::insufficient_data, "no non-NA prediction/truth pairs");

  rep.n = static_cast<long>(pairs.size());
  double abs_sum = 0.0, sq_sum = 0.0, truth_sum = 0.0;
  for (const auto& [p, t] : pairs) {
    abs_sum += std::abs(p - t);
    sq_sum += (p - t) * (p - t);
    truth_sum += t;
  }
  const auto n = static_cast<double>(pairs.size());
  rep.mae = abs_sum / n;
  rep.rmse = std::sqrt(sq_sum / n);

  if (pairs.size() < 2) {
    rep.flags.push_back("r_squared undefined (fewer than 2 pairs), reported as 0");
    return rep;
  }
  const double truth_mean = truth_sum / n;
  double ss_tot = 0.0;
  for (const auto& [p, t] : pairs) ss_tot += (t - truth_mean) * (t - truth_mean);
  if (ss_tot == 0.0) {
    rep.flags.push_back("r_squared undefined (constant truths), reported as 0");
    return rep;
  }
  rep.r_squared = 1.0 - sq_sum / ss_tot;
  return rep;
}

}  // namespace prescreen

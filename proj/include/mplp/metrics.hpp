#pragma once

#include <cstdint>
#include <vector>

#include "mplp/corpus.hpp"

namespace mplp {

/// counts[gold][pred]
using ConfusionMatrix = std::vector<std::vector<int64_t>>;

ConfusionMatrix confusion_matrix(const std::vector<int>& pred, const std::vector<int>& gold,
                                 int n_classes);

/// Per-class F1 (2TP / (2TP + FP + FN), 0 when the denominator is 0).
std::vector<double> per_class_f1(const ConfusionMatrix& cm);

/// Per-class F1 averaged with weights = gold-class support / total.
double weighted_f1(const std::vector<int>& pred, const std::vector<int>& gold,
                   const EmotionLabelSet& labels);
double weighted_f1_from_confusion(const ConfusionMatrix& cm);

/// Micro-averaged F1 with the neutral class removed from the TP pool and from
/// prediction/gold credit (DailyDialog convention). Degenerate case (no
/// non-neutral gold and no non-neutral predictions) is defined as 0.0 with a
/// warning on stderr.
double micro_f1_excluding_neutral(const std::vector<int>& pred, const std::vector<int>& gold,
                                  const EmotionLabelSet& labels);
double micro_f1_excluding_neutral_from_confusion(const ConfusionMatrix& cm, int neutral_index);

}  // namespace mplp

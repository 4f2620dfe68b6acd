#include "mplp/metrics.hpp"

#include <iostream>

namespace mplp {

ConfusionMatrix confusion_matrix(const std::vector<int>& pred, const std::vector<int>& gold,
                                 int n_classes) {
    if (pred.size() != gold.size() || pred.empty())
        throw ContractError("confusion_matrix: prediction/gold length mismatch or empty");
    ConfusionMatrix cm(static_cast<size_t>(n_classes),
                       std::vector<int64_t>(static_cast<size_t>(n_classes), 0));
    for (size_t i = 0; i < pred.size(); ++i) {
        if (pred[i] < 0 || pred[i] >= n_classes || gold[i] < 0 || gold[i] >= n_classes)
            throw IndexError("confusion_matrix: class index out of range");
        cm[static_cast<size_t>(gold[i])][static_cast<size_t>(pred[i])] += 1;
    }
    return cm;
}

std::vector<double> per_class_f1(const ConfusionMatrix& cm) {
    size_t n = cm.size();
    std::vector<double> f1(n, 0.0);
    for (size_t c = 0; c < n; ++c) {
        int64_t tp = cm[c][c];
        int64_t fn = 0, fp = 0;
        for (size_t o = 0; o < n; ++o) {
            if (o == c) continue;
            fn += cm[c][o];
            fp += cm[o][c];
        }
        int64_t denom = 2 * tp + fp + fn;
        f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
    return f1;
}

double weighted_f1_from_confusion(const ConfusionMatrix& cm) {
    auto f1 = per_class_f1(cm);
    int64_t total = 0;
    std::vector<int64_t> support(cm.size(), 0);
    for (size_t c = 0; c < cm.size(); ++c)
        for (size_t o = 0; o < cm.size(); ++o) {
            support[c] += cm[c][o];
            total += cm[c][o];
        }
    if (total == 0) throw ContractError("weighted_f1: empty confusion matrix");
    double score = 0.0;
    for (size_t c = 0; c < cm.size(); ++c)
        score += f1[c] * static_cast<double>(support[c]) / static_cast<double>(total);
    return score;
}

double weighted_f1(const std::vector<int>& pred, const std::vector<int>& gold,
                   const EmotionLabelSet& labels) {
    return weighted_f1_from_confusion(confusion_matrix(pred, gold, labels.size()));
}

double micro_f1_excluding_neutral_from_confusion(const ConfusionMatrix& cm, int neutral_index) {
    if (neutral_index < 0 || neutral_index >= static_cast<int>(cm.size()))
        throw ContractError("micro_f1_excluding_neutral: neutral index out of range");
    size_t neutral = static_cast<size_t>(neutral_index);
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t g = 0; g < cm.size(); ++g)
        for (size_t p = 0; p < cm.size(); ++p) {
            if (g == neutral && p == neutral) continue;  // no credit, no penalty
            if (g == p) {
                tp += cm[g][p];
            } else {
                if (p != neutral) fp += cm[g][p];  // non-neutral prediction was wrong
                if (g != neutral) fn += cm[g][p];  // non-neutral gold was missed
            }
        }
    if (tp + fp + fn == 0) {
        std::cerr << "warning: micro_f1_excluding_neutral is undefined (no non-neutral items); "
                     "returning 0.0\n";
        return 0.0;
    }
    return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double micro_f1_excluding_neutral(const std::vector<int>& pred, const std::vector<int>& gold,
                                  const EmotionLabelSet& labels) {
    if (!labels.neutral_index())
        throw ContractError("micro_f1_excluding_neutral: label set has no neutral class");
    return micro_f1_excluding_neutral_from_confusion(confusion_matrix(pred, gold, labels.size()),
                                                     *labels.neutral_index());
}

}  // namespace mplp

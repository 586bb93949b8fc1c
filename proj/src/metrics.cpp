#include "ecgtcn/metrics.hpp"

namespace ecgtcn {

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t s = 0;
    for (auto c : counts_) s += c;
    return s;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t s = 0;
    for (int c = 1; c <= k_; ++c) s += at(c, c);
    return s;
}

std::uint64_t ConfusionMatrix::row_sum(int true_c) const {
    std::uint64_t s = 0;
    for (int p = 1; p <= k_; ++p) s += at(true_c, p);
    return s;
}

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k) {
    if (preds.size() != labels.size()) {
        throw UsageError("confusion: predictions and labels differ in length");
    }
    ConfusionMatrix cm(k);
    for (std::size_t i = 0; i < preds.size(); ++i) cm.add(labels[i], preds[i]);
    return cm;
}

double accuracy(const ConfusionMatrix& cm) {
    const auto total = cm.total();
    if (total == 0) throw UsageError("accuracy of an empty confusion matrix is undefined");
    return static_cast<double>(cm.trace()) / static_cast<double>(total);
}

double balanced_accuracy(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw UsageError("balanced accuracy of an empty confusion matrix is undefined");
    double recall_sum = 0.0;
    int populated = 0;
    for (int c = 1; c <= cm.classes(); ++c) {
        const auto row = cm.row_sum(c);
        if (row == 0) continue;  // no true members, recall undefined
        recall_sum += static_cast<double>(cm.at(c, c)) / static_cast<double>(row);
        ++populated;
    }
    return recall_sum / static_cast<double>(populated);
}

}  // namespace ecgtcn

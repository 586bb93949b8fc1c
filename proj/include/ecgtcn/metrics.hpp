#pragma once

#include <cstdint>
#include <vector>

#include "ecgtcn/errors.hpp"

namespace ecgtcn {

/// Row = true class, column = predicted class, both 1-based externally.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int k) : k_(k), counts_(static_cast<std::size_t>(k) * k, 0) {}

    int classes() const { return k_; }
    std::uint64_t at(int true_c, int pred_c) const {
        return counts_[index(true_c, pred_c)];
    }
    void add(int true_c, int pred_c) { counts_[index(true_c, pred_c)]++; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(int true_c) const;

private:
    std::size_t index(int t, int p) const {
        if (t < 1 || t > k_ || p < 1 || p > k_) throw UsageError("class index out of range");
        return static_cast<std::size_t>(t - 1) * k_ + (p - 1);
    }

    int k_;
    std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(const std::vector<int>& preds, const std::vector<int>& labels, int k);

/// trace / total.
double accuracy(const ConfusionMatrix& cm);

/// Macro-averaged per-class recall; classes without true members are skipped.
/// This is the multiclass reading of the paper's (Sensitivity+Specificity)/2.
double balanced_accuracy(const ConfusionMatrix& cm);

}  // namespace ecgtcn

#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "ecgtcn/rng.hpp"

namespace ecgtcn {

// A feature map is a dense (channels x time) matrix; a batch is one matrix
// per item. Row index = channel, column index = time step.
template <typename Scalar>
using FeatureMap = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Batch = std::vector<FeatureMap<Scalar>>;

/// He-uniform samples in [-sqrt(6/fan_in), +sqrt(6/fan_in)].
template <typename Scalar>
void he_uniform_init(Eigen::Ref<FeatureMap<Scalar>> w, int fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            w(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
        }
    }
}

template <typename Scalar>
Vec<Scalar> softmax(const Vec<Scalar>& logits) {
    Vec<Scalar> out = (logits.array() - logits.maxCoeff()).exp();
    out /= out.sum();
    return out;
}

}  // namespace ecgtcn

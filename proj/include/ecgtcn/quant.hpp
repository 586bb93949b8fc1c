#pragma once

#include <map>
#include <string>
#include <utility>

#include "ecgtcn/dataset.hpp"
#include "ecgtcn/network.hpp"
#include "ecgtcn/qnetwork.hpp"

namespace ecgtcn {

std::int8_t quantize_value(float r, const QuantParams& qp);
float dequantize_value(std::int8_t q, const QuantParams& qp);

/// Asymmetric int8 params covering [mn, mx]. The range is first widened to
/// contain 0 so that real zero is exactly representable (padding relies on
/// this); a degenerate range is widened by 1e-3 on each side.
QuantParams quant_params_from_range(float mn, float mx);

/// Absorbs every BN into its preceding conv; result has zero BN layers and
/// agrees with the input in eval mode up to float rounding.
Network<float> fold_batchnorm(const Network<float>& net);

/// Running (min, max) per named activation edge. Edge names:
///   input, entry, block<i>.mid, block<i>.main, block<i>.skip (projection
///   blocks only), block<i>.out, logits
struct ActivationRanges {
    std::map<std::string, std::pair<float, float>> edges;

    void update(const std::string& name, float v);
    const std::pair<float, float>& at(const std::string& name) const;
};

/// Min/max activation sweep of a folded network over calibration beats.
ActivationRanges calibrate(const Network<float>& folded, const Dataset& calib);

/// Per-tensor symmetric int8 weights, asymmetric int8 activations from the
/// calibrated ranges, int32 biases, fixed-point requantization per layer and
/// per residual branch.
QNetwork quantize_network(const Network<float>& folded, const ActivationRanges& ranges);

}  // namespace ecgtcn

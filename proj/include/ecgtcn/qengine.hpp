#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "ecgtcn/dataset.hpp"
#include "ecgtcn/qnetwork.hpp"

namespace ecgtcn {

/// Quantized feature map, row-major [c * length + t].
struct QFeatureMap {
    int channels = 0;
    int length = 0;
    std::vector<std::int8_t> data;
    QuantParams qp;

    std::int8_t at(int c, int t) const {
        return data[static_cast<std::size_t>(c) * length + t];
    }
    std::int8_t& at(int c, int t) {
        return data[static_cast<std::size_t>(c) * length + t];
    }
};

// Fixed-point arithmetic contract shared with emitted code: one rounding
// rule everywhere. requant_core scales an int32 accumulator by
// mult * 2^-shift with round-half-up on the scaled value; the floor
// division is spelled out so behavior does not depend on the sign
// semantics of >>.
inline std::int64_t floor_div_pow2(std::int64_t v, int shift) {
    const std::int64_t d = std::int64_t(1) << shift;
    std::int64_t q = v / d;
    if (v % d != 0 && v < 0) q -= 1;
    return q;
}

inline std::int64_t requant_core(std::int32_t acc, const Requant& r) {
    const std::int64_t v =
        static_cast<std::int64_t>(acc) * r.mult + (std::int64_t(1) << (r.shift - 1));
    return floor_div_pow2(v, r.shift);
}

inline std::int8_t saturate_i8(std::int64_t v) {
    if (v < -128) return -128;
    if (v > 127) return 127;
    return static_cast<std::int8_t>(v);
}

/// clamp(floor((acc*mult + 2^(shift-1)) / 2^shift) + zp_out, -128, 127).
inline std::int8_t requantize(std::int32_t acc, const Requant& r, int zp_out) {
    return saturate_i8(requant_core(acc, r) + zp_out);
}

/// Prepends `amount` columns of the quantized representation of real zero.
QFeatureMap causal_pad(const QFeatureMap& x, int amount);

/// Dilated causal conv with int32 accumulation and per-layer requantization.
/// Output length equals input length; accumulation order is tap-major then
/// channel, fixed for bit determinism.
QFeatureMap qconv1d_dilated(const QFeatureMap& x, const QConv& layer);

/// Computes outputs for t in [t_begin, t_end) only, reading x as the full
/// layer input. Used by tiled execution; identical arithmetic.
void qconv1d_range(const QFeatureMap& x, const QConv& layer, int t_begin, int t_end,
                   std::int8_t* out);

/// Rewrites dilation as an explicit zero-stuffed kernel of length
/// d*(K-1)+1 with dilation 1; bit-identical outputs by construction.
QConv zero_stuff(const QConv& layer);

/// Per-branch fixed-point rescale into the output scale, int-domain add,
/// then clamp. Branches are rounded once each, never twice.
QFeatureMap qresidual_add(const QFeatureMap& a, const QFeatureMap& b, const Requant& ra,
                          const Requant& rb, const QuantParams& qp_out);

/// max(value, zero_point): ReLU in the quantized domain.
QFeatureMap qrelu(const QFeatureMap& x);

QFeatureMap quantize_beat(const Beat& beat, const QuantParams& qp);

struct QPrediction {
    int class_id = 0;  // 1-based, ties broken toward the lowest index
    std::vector<std::int32_t> logits;
};

/// Runs the full network on a raw beat: input quantization happens here.
QPrediction qpredict(const QNetwork& net, const Beat& beat);

/// The layer pipeline on an already-quantized input map; shared by
/// qpredict and the tiled executor's reference path.
std::vector<std::int32_t> qforward(const QNetwork& net, const QFeatureMap& input);

int argmax_class(const std::vector<std::int32_t>& logits);

}  // namespace ecgtcn

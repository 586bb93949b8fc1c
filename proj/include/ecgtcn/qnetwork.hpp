#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ecgtcn/arch.hpp"
#include "ecgtcn/errors.hpp"

namespace ecgtcn {

/// Affine int8 quantization: real r ~ scale * (q - zero_point).
struct QuantParams {
    float scale = 1.0f;
    int zero_point = 0;
};

/// Fixed-point rescale factor: ratio ~ mult * 2^-shift, mult in [2^30, 2^31).
struct Requant {
    std::int32_t mult = 1 << 30;
    int shift = 30;
};

/// mult/shift encoding of a positive ratio; relative error <= 2^-24 by
/// construction (31-bit mantissa). Throws CapacityError if the ratio cannot
/// be normalized into mult in [2^30, 2^31) with shift in [1, 62].
Requant make_requant(double ratio);

double requant_ratio(const Requant& r);

struct QConv {
    int in_ch = 0;
    int out_ch = 0;
    int kernel_len = 1;
    int dilation = 1;
    std::vector<std::int8_t> w;      // flat (c, i, k): (c*in_ch + i)*kernel_len + k
    std::vector<std::int32_t> bias;  // scale = in_qp.scale * w_scale
    float w_scale = 1.0f;
    QuantParams in_qp, out_qp;
    Requant rq;  // in_scale * w_scale / out_scale

    int pad() const { return dilation * (kernel_len - 1); }
    std::int8_t weight(int c, int i, int k) const {
        return w[static_cast<std::size_t>((c * in_ch + i) * kernel_len + k)];
    }
};

struct QBlock {
    QConv conv1;  // out edge is the post-ReLU mid activation
    QConv conv2;  // out edge is the pre-add main branch
    std::optional<QConv> skip;
    Requant add_main, add_skip;  // per-branch rescale into the block output scale
    QuantParams out_qp;          // post-add, post-ReLU block output edge
};

struct QDense {
    int in_n = 0;
    int out_n = 0;
    std::vector<std::int8_t> w;  // row-major (out, in)
    std::vector<std::int32_t> bias;
    float w_scale = 1.0f;
    QuantParams in_qp;
    QuantParams logits_qp;  // calibrated float-logit edge, for error reporting

    std::int8_t weight(int o, int j) const {
        return w[static_cast<std::size_t>(o) * in_n + j];
    }
};

struct QNetwork {
    ArchConfig cfg;
    QuantParams input_qp;
    QConv entry;
    std::vector<QBlock> blocks;
    QDense head;
};

/// Worst-case int32 accumulator bound for one conv:
/// K*Cin*|w|max*|x-zp|max + |bias|max with |w| <= 128 and |x-zp| <= 255.
std::int64_t conv_accumulator_bound(const QConv& c);

/// Throws CapacityError if any layer could overflow its int32 accumulator.
void check_accumulator_bounds(const QNetwork& net);

}  // namespace ecgtcn

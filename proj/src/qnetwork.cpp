#include "ecgtcn/qnetwork.hpp"

#include <cmath>
#include <cstdlib>

namespace ecgtcn {

Requant make_requant(double ratio) {
    if (!(ratio > 0.0) || !std::isfinite(ratio)) {
        throw CapacityError("requant ratio must be positive and finite");
    }
    int exp = 0;
    const double frac = std::frexp(ratio, &exp);  // ratio = frac * 2^exp, frac in [0.5, 1)
    long long mult = std::llround(frac * 2147483648.0);  // frac * 2^31 -> [2^30, 2^31]
    int shift = 31 - exp;
    if (mult == (1LL << 31)) {
        mult = 1LL << 30;
        shift -= 1;
    }
    if (shift < 1 || shift > 62) {
        throw CapacityError("requant ratio " + std::to_string(ratio) +
                            " out of the representable fixed-point range");
    }
    return Requant{static_cast<std::int32_t>(mult), shift};
}

double requant_ratio(const Requant& r) {
    return static_cast<double>(r.mult) * std::ldexp(1.0, -r.shift);
}

std::int64_t conv_accumulator_bound(const QConv& c) {
    std::int64_t bias_max = 0;
    for (auto b : c.bias) bias_max = std::max<std::int64_t>(bias_max, std::llabs(b));
    return static_cast<std::int64_t>(c.kernel_len) * c.in_ch * 128 * 255 + bias_max;
}

namespace {

void check_conv(const QConv& c, const std::string& name) {
    const std::int64_t bound = conv_accumulator_bound(c);
    if (bound >= (1LL << 31)) {
        throw CapacityError("layer " + name + ": worst-case accumulator " +
                            std::to_string(bound) + " exceeds int32");
    }
}

}  // namespace

void check_accumulator_bounds(const QNetwork& net) {
    check_conv(net.entry, "entry");
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const auto& b = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        check_conv(b.conv1, p + "conv1");
        check_conv(b.conv2, p + "conv2");
        if (b.skip) check_conv(*b.skip, p + "skip");
    }
    std::int64_t bias_max = 0;
    for (auto b : net.head.bias) bias_max = std::max<std::int64_t>(bias_max, std::llabs(b));
    const std::int64_t dense_bound =
        static_cast<std::int64_t>(net.head.in_n) * 128 * 255 + bias_max;
    if (dense_bound >= (1LL << 31)) {
        throw CapacityError("head: worst-case accumulator exceeds int32");
    }
}

}  // namespace ecgtcn

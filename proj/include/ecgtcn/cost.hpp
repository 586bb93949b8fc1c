#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgtcn/network.hpp"
#include "ecgtcn/qnetwork.hpp"

namespace ecgtcn {

enum class MacMode { Native, ZeroStuffed };

struct CostReport {
    std::int64_t params = 0;
    std::int64_t macs_native = 0;
    std::int64_t macs_zero_stuffed = 0;
    std::int64_t weight_bytes = 0;
    std::int64_t peak_activation_bytes = 0;
};

/// Learnable tensors only (weights, biases, BN gamma/beta); running
/// statistics excluded.
template <typename S>
std::int64_t count_params(Network<S>& net) {
    std::int64_t n = 0;
    visit_params(net, [&](const std::string&, auto& t) { n += t.size(); });
    return n;
}

/// Closed-form parameter count of the architecture including BN, i.e. the
/// number comparable to the paper's table.
std::int64_t count_params_arch(const ArchConfig& cfg);

/// Multiply-accumulates only; biases, elementwise adds, and BN excluded.
/// Zero-stuffed mode replaces each kernel length K by d*(K-1)+1.
std::int64_t count_macs_arch(const ArchConfig& cfg, MacMode mode);

template <typename S>
std::int64_t count_macs(const Network<S>& net, MacMode mode) {
    return count_macs_arch(net.cfg, mode);
}
std::int64_t count_macs(const QNetwork& net, MacMode mode);

/// weight_bytes: int8 weights + int32 biases + requant tables.
/// peak_activation_bytes: largest set of simultaneously live int8 buffers
/// under layer-at-a-time execution; the skip input stays live across a block.
std::pair<std::int64_t, std::int64_t> memory_footprint(const QNetwork& net);

CostReport cost_report(const ArchConfig& cfg, const QNetwork* qnet);

/// Aligned human-readable report with the paper's reference figures beside
/// the computed ones.
std::string format_cost_report(const CostReport& r, bool have_quantized);

}  // namespace ecgtcn

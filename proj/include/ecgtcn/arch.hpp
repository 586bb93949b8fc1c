#pragma once

#include <cstdint>
#include <vector>

namespace ecgtcn {

/// Receptive field of a stack of L residual blocks, two convs each,
/// kernel K, dilation doubling per block: 1 + 2*(K-1)*(2^L - 1).
constexpr long receptive_field(long kernel_len, long blocks) {
    return 1 + 2 * (kernel_len - 1) * ((1L << blocks) - 1);
}

struct ArchConfig {
    int input_len = 140;
    int entry_filters = 2;   // F1
    int block_filters = 11;  // FT
    int kernel_len = 11;     // KT
    int num_blocks = 3;      // L
    int n_classes = 5;
    float dropout_p = 0.3f;
    float bn_eps = 1e-5f;
    float bn_momentum = 0.1f;

    /// Dilation of block i: 2^i.
    int dilation(int block) const { return 1 << block; }

    std::vector<int> dilations() const {
        std::vector<int> d(static_cast<std::size_t>(num_blocks));
        for (int i = 0; i < num_blocks; ++i) d[static_cast<std::size_t>(i)] = dilation(i);
        return d;
    }

    long rfs() const { return receptive_field(kernel_len, num_blocks); }
};

}  // namespace ecgtcn

#pragma once

#include <cstdint>
#include <string>

#include "ecgtcn/dataset.hpp"
#include "ecgtcn/qnetwork.hpp"

namespace ecgtcn {

struct CodegenOptions {
    bool native_dilation = true;  // false: kernels are zero-stuffed first
    bool static_buffers = true;   // false: activation buffers live on the stack
};

struct SourceBundle {
    std::string header;          // net.h
    std::string implementation;  // net.c
    std::string harness;         // main.c
    std::int64_t const_bytes = 0;  // total bytes of emitted constant arrays
};

/// Emits a freestanding C99 implementation whose arithmetic mirrors the
/// engine exactly (same padding, tap order, 64-bit intermediates, rounding,
/// residual rule, argmax tie-break). No heap, no I/O outside the harness.
SourceBundle emit_source(const QNetwork& net, const CodegenOptions& opts = {});

/// Writes net.h / net.c / main.c under dir (created if missing).
void write_bundle(const SourceBundle& bundle, const std::string& dir);

/// Golden-vector lines: 140 pre-quantized int8 inputs followed by the 5
/// engine logits, whitespace-separated. Beats are sampled deterministically.
std::string emit_golden_vectors(const QNetwork& net, const Dataset& ds, int n,
                                std::uint64_t seed);

}  // namespace ecgtcn

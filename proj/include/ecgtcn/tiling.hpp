#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ecgtcn/dataset.hpp"
#include "ecgtcn/qengine.hpp"
#include "ecgtcn/qnetwork.hpp"

namespace ecgtcn {

// Two-level-memory tiling: every layer's time axis is split into tiles whose
// working set (resident weights + streamed activation buffers, doubled when
// double-buffering) fits the L1 budget. Each tile's input range is its output
// range widened left by the halo d*(K-1), clipped to the padded extent. The
// dense head streams output neurons instead; its input is resident.

struct Tile {
    int out_start = 0;
    int out_len = 0;
    int in_start = 0;  // padded coordinates: may reach -halo
    int in_len = 0;
    std::int64_t in_bytes = 0;
    std::int64_t out_bytes = 0;
};

enum class LayerKind { Conv, Add, Dense };

struct LayerPlan {
    std::string name;
    LayerKind kind = LayerKind::Conv;
    int in_ch = 0;
    int out_ch = 0;
    int halo = 0;
    std::int64_t resident_bytes = 0;
    std::int64_t working_set = 0;
    std::vector<Tile> tiles;
};

struct TilePlan {
    std::int64_t budget = 0;
    bool double_buffer = false;
    std::vector<LayerPlan> layers;
    std::int64_t peak_working_set = 0;
    std::int64_t l2_to_l1_bytes = 0;
    std::int64_t l1_to_l2_bytes = 0;
};

/// Greedy maximal tile length per layer under the budget. Throws
/// CapacityError naming the first layer whose minimal tile does not fit.
TilePlan plan_tiles(const QNetwork& net, std::int64_t budget_bytes, bool double_buffer);

/// Runs inference tile by tile through materialized tile buffers; logits are
/// bit-identical to qpredict by construction (checked in tests).
std::vector<std::int32_t> execute_tiled(const QNetwork& net, const Beat& beat,
                                        const TilePlan& plan);

std::string format_tile_plan(const TilePlan& plan);

/// Machine-readable: one key=value header or one tile per line.
std::string serialize_tile_plan(const TilePlan& plan);

/// Accepts plain bytes or a kB-suffixed value (1 kB = 1024 bytes).
std::int64_t parse_budget(const std::string& text);

}  // namespace ecgtcn

#include "ecgtcn/tiling.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace ecgtcn {

namespace {

struct LayerDesc {
    std::string name;
    LayerKind kind;
    const QConv* conv = nullptr;  // Conv layers
    bool relu_after = false;
    const QBlock* block = nullptr;  // Add layers
    int channels = 0;               // Add layers
};

std::vector<LayerDesc> enumerate_layers(const QNetwork& net) {
    std::vector<LayerDesc> out;
    out.push_back({"entry", LayerKind::Conv, &net.entry, false, nullptr, 0});
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        const auto& blk = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        out.push_back({p + "conv1", LayerKind::Conv, &blk.conv1, true, nullptr, 0});
        out.push_back({p + "conv2", LayerKind::Conv, &blk.conv2, false, nullptr, 0});
        if (blk.skip) out.push_back({p + "skip", LayerKind::Conv, &*blk.skip, false, nullptr, 0});
        out.push_back({p + "add", LayerKind::Add, nullptr, true, &blk, blk.conv2.out_ch});
    }
    out.push_back({"head", LayerKind::Dense, nullptr, false, nullptr, 0});
    return out;
}

std::int64_t conv_resident(const QConv& c) {
    return static_cast<std::int64_t>(c.w.size()) + 4 * static_cast<std::int64_t>(c.bias.size()) +
           8;  // requant pair
}

/// Streamed bytes of one tile of the given output length.
std::int64_t streamed_bytes(const LayerDesc& d, const QNetwork& net, int len) {
    switch (d.kind) {
        case LayerKind::Conv:
            return static_cast<std::int64_t>(d.conv->in_ch) * (len + d.conv->pad()) +
                   static_cast<std::int64_t>(d.conv->out_ch) * len;
        case LayerKind::Add:
            return 3LL * d.channels * len;  // two branch slices + output
        case LayerKind::Dense:
            // len output neurons: weight rows + int32 bias + int32 logits
            return static_cast<std::int64_t>(len) * net.head.in_n + 4LL * len + 4LL * len;
    }
    return 0;
}

std::int64_t resident_bytes(const LayerDesc& d, const QNetwork& net) {
    switch (d.kind) {
        case LayerKind::Conv: return conv_resident(*d.conv);
        case LayerKind::Add: return 16;  // two requant pairs
        case LayerKind::Dense: return net.head.in_n;  // whole flattened input
    }
    return 0;
}

int axis_extent(const LayerDesc& d, const QNetwork& net) {
    return d.kind == LayerKind::Dense ? net.head.out_n : net.cfg.input_len;
}

}  // namespace

TilePlan plan_tiles(const QNetwork& net, std::int64_t budget_bytes, bool double_buffer) {
    TilePlan plan;
    plan.budget = budget_bytes;
    plan.double_buffer = double_buffer;
    const int buffers = double_buffer ? 2 : 1;

    for (const auto& desc : enumerate_layers(net)) {
        LayerPlan lp;
        lp.name = desc.name;
        lp.kind = desc.kind;
        lp.resident_bytes = resident_bytes(desc, net);
        if (desc.kind == LayerKind::Conv) {
            lp.in_ch = desc.conv->in_ch;
            lp.out_ch = desc.conv->out_ch;
            lp.halo = desc.conv->pad();
        } else if (desc.kind == LayerKind::Add) {
            lp.in_ch = lp.out_ch = desc.channels;
        } else {
            lp.in_ch = net.head.in_n;
            lp.out_ch = net.head.out_n;
        }

        const int extent = axis_extent(desc, net);
        const auto working_set = [&](int len) {
            return lp.resident_bytes + buffers * streamed_bytes(desc, net, len);
        };
        if (working_set(1) > budget_bytes) {
            throw CapacityError("tile budget " + std::to_string(budget_bytes) +
                                " bytes cannot hold a minimal tile of layer " + desc.name +
                                " (needs " + std::to_string(working_set(1)) + ")");
        }
        int len = extent;
        while (working_set(len) > budget_bytes) --len;
        lp.working_set = working_set(len);

        for (int start = 0; start < extent; start += len) {
            Tile t;
            t.out_start = start;
            t.out_len = std::min(len, extent - start);
            if (desc.kind == LayerKind::Conv) {
                t.in_start = start - lp.halo;
                t.in_len = t.out_len + lp.halo;
                t.in_bytes = static_cast<std::int64_t>(lp.in_ch) * t.in_len;
                t.out_bytes = static_cast<std::int64_t>(lp.out_ch) * t.out_len;
            } else if (desc.kind == LayerKind::Add) {
                t.in_start = start;
                t.in_len = t.out_len;
                t.in_bytes = 2LL * lp.out_ch * t.out_len;
                t.out_bytes = static_cast<std::int64_t>(lp.out_ch) * t.out_len;
            } else {
                t.in_start = start;
                t.in_len = t.out_len;
                t.in_bytes = static_cast<std::int64_t>(t.out_len) * net.head.in_n + 4LL * t.out_len;
                t.out_bytes = 4LL * t.out_len;
            }
            lp.tiles.push_back(t);
        }

        plan.peak_working_set = std::max(plan.peak_working_set, lp.working_set);
        plan.l2_to_l1_bytes += lp.resident_bytes;
        for (const auto& t : lp.tiles) {
            plan.l2_to_l1_bytes += t.in_bytes;
            plan.l1_to_l2_bytes += t.out_bytes;
        }
        plan.layers.push_back(std::move(lp));
    }
    return plan;
}

namespace {

using Buffer = std::vector<std::int8_t>;  // [c * T + t]

/// Copies padded coordinates [in_start, in_start+in_len) of the full source
/// into a local tile buffer; coordinates < 0 receive the zero point.
Buffer gather_tile(const Buffer& src, int channels, int T, int in_start, int in_len, int zp) {
    Buffer local(static_cast<std::size_t>(channels) * in_len);
    for (int c = 0; c < channels; ++c) {
        for (int j = 0; j < in_len; ++j) {
            const int t = in_start + j;
            local[static_cast<std::size_t>(c) * in_len + j] =
                t < 0 ? static_cast<std::int8_t>(zp)
                      : src[static_cast<std::size_t>(c) * T + t];
        }
    }
    return local;
}

/// Same accumulation as qconv1d_range, reading a materialized tile buffer.
void conv_tile(const Buffer& local, int in_len, const QConv& layer, const Tile& tile,
               bool relu_after, Buffer& out, int T) {
    const int K = layer.kernel_len;
    const int d = layer.dilation;
    const int halo = layer.pad();
    const int zp_in = layer.in_qp.zero_point;
    const int zp_out = layer.out_qp.zero_point;
    for (int c = 0; c < layer.out_ch; ++c) {
        for (int tt = 0; tt < tile.out_len; ++tt) {
            std::int32_t acc = layer.bias[static_cast<std::size_t>(c)];
            for (int k = 0; k < K; ++k) {
                const int j = tt + halo - (K - 1 - k) * d;  // always within [0, in_len)
                for (int i = 0; i < layer.in_ch; ++i) {
                    acc += static_cast<std::int32_t>(
                               layer.w[static_cast<std::size_t>((c * layer.in_ch + i) * K + k)]) *
                           (static_cast<std::int32_t>(
                                local[static_cast<std::size_t>(i) * in_len + j]) -
                            zp_in);
                }
            }
            std::int8_t v = requantize(acc, layer.rq, zp_out);
            if (relu_after && v < zp_out) v = static_cast<std::int8_t>(zp_out);
            out[static_cast<std::size_t>(c) * T + tile.out_start + tt] = v;
        }
    }
}

}  // namespace

std::vector<std::int32_t> execute_tiled(const QNetwork& net, const Beat& beat,
                                        const TilePlan& plan) {
    const int T = net.cfg.input_len;
    const QFeatureMap qin = quantize_beat(beat, net.input_qp);

    std::size_t cursor = 0;
    const auto next_layer = [&](const std::string& name) -> const LayerPlan& {
        if (cursor >= plan.layers.size() || plan.layers[cursor].name != name) {
            throw StructureError("tile plan does not match the network at layer " + name);
        }
        return plan.layers[cursor++];
    };

    const auto run_conv = [&](const Buffer& src, const QConv& conv, const std::string& name,
                              bool relu_after) {
        const LayerPlan& lp = next_layer(name);
        Buffer out(static_cast<std::size_t>(conv.out_ch) * T);
        for (const auto& tile : lp.tiles) {
            const Buffer local =
                gather_tile(src, conv.in_ch, T, tile.in_start, tile.in_len, conv.in_qp.zero_point);
            conv_tile(local, tile.in_len, conv, tile, relu_after, out, T);
        }
        return out;
    };

    Buffer x = run_conv(qin.data, net.entry, "entry", false);

    for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
        const auto& blk = net.blocks[bi];
        const std::string p = "block" + std::to_string(bi) + ".";
        const Buffer mid = run_conv(x, blk.conv1, p + "conv1", true);
        const Buffer main = run_conv(mid, blk.conv2, p + "conv2", false);
        Buffer skip;
        int skip_zp = 0;
        if (blk.skip) {
            skip = run_conv(x, *blk.skip, p + "skip", false);
            skip_zp = blk.skip->out_qp.zero_point;
        } else {
            skip = x;
            skip_zp = bi == 0 ? net.entry.out_qp.zero_point
                              : net.blocks[bi - 1].out_qp.zero_point;
        }

        const LayerPlan& lp = next_layer(p + "add");
        const int C = blk.conv2.out_ch;
        const int zp_main = blk.conv2.out_qp.zero_point;
        const int zp_out = blk.out_qp.zero_point;
        Buffer out(static_cast<std::size_t>(C) * T);
        for (const auto& tile : lp.tiles) {
            for (int c = 0; c < C; ++c) {
                for (int tt = 0; tt < tile.out_len; ++tt) {
                    const std::size_t idx =
                        static_cast<std::size_t>(c) * T + tile.out_start + tt;
                    const std::int32_t va = static_cast<std::int32_t>(main[idx]) - zp_main;
                    const std::int32_t vb = static_cast<std::int32_t>(skip[idx]) - skip_zp;
                    const std::int64_t sum =
                        requant_core(va, blk.add_main) + requant_core(vb, blk.add_skip) + zp_out;
                    std::int8_t v = saturate_i8(sum);
                    if (v < zp_out) v = static_cast<std::int8_t>(zp_out);  // fused ReLU
                    out[idx] = v;
                }
            }
        }
        x = std::move(out);
    }

    const LayerPlan& lp = next_layer("head");
    const int zp_in = net.head.in_qp.zero_point;
    std::vector<std::int32_t> logits(static_cast<std::size_t>(net.head.out_n));
    for (const auto& tile : lp.tiles) {
        for (int o = tile.out_start; o < tile.out_start + tile.out_len; ++o) {
            std::int32_t acc = net.head.bias[static_cast<std::size_t>(o)];
            for (int j = 0; j < net.head.in_n; ++j) {
                acc += static_cast<std::int32_t>(net.head.weight(o, j)) *
                       (static_cast<std::int32_t>(x[static_cast<std::size_t>(j)]) - zp_in);
            }
            logits[static_cast<std::size_t>(o)] = acc;
        }
    }
    if (cursor != plan.layers.size()) {
        throw StructureError("tile plan has extra layers beyond the network");
    }
    return logits;
}

std::string format_tile_plan(const TilePlan& plan) {
    std::ostringstream os;
    os << "budget " << plan.budget << " bytes, double_buffer=" << (plan.double_buffer ? 1 : 0)
       << ", peak working set " << plan.peak_working_set << " bytes\n";
    os << "transfers: L2->L1 " << plan.l2_to_l1_bytes << " bytes, L1->L2 " << plan.l1_to_l2_bytes
       << " bytes\n";
    for (const auto& lp : plan.layers) {
        os << "  " << lp.name << ": " << lp.tiles.size() << " tile(s), halo " << lp.halo
           << ", working set " << lp.working_set << " bytes\n";
    }
    return os.str();
}

std::string serialize_tile_plan(const TilePlan& plan) {
    std::ostringstream os;
    os << "budget=" << plan.budget << "\n";
    os << "double_buffer=" << (plan.double_buffer ? 1 : 0) << "\n";
    os << "peak_working_set=" << plan.peak_working_set << "\n";
    os << "l2_to_l1_bytes=" << plan.l2_to_l1_bytes << "\n";
    os << "l1_to_l2_bytes=" << plan.l1_to_l2_bytes << "\n";
    for (const auto& lp : plan.layers) {
        for (std::size_t i = 0; i < lp.tiles.size(); ++i) {
            const auto& t = lp.tiles[i];
            os << "tile layer=" << lp.name << " index=" << i << " out_start=" << t.out_start
               << " out_len=" << t.out_len << " in_start=" << t.in_start
               << " in_len=" << t.in_len << " in_bytes=" << t.in_bytes
               << " out_bytes=" << t.out_bytes << "\n";
        }
    }
    return os.str();
}

std::int64_t parse_budget(const std::string& text) {
    std::string s = text;
    s.erase(std::remove_if(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); }),
            s.end());
    std::int64_t mult = 1;
    if (s.size() > 2) {
        std::string tail = s.substr(s.size() - 2);
        for (auto& ch : tail) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        if (tail == "kb") {
            mult = 1024;
            s = s.substr(0, s.size() - 2);
        }
    }
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(s, &pos);
        if (pos != s.size() || v <= 0) throw std::invalid_argument("budget");
        return v * mult;
    } catch (const std::exception&) {
        throw UsageError("cannot parse budget '" + text + "' (expected bytes or e.g. 80kB)");
    }
}

}  // namespace ecgtcn

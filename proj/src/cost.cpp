#include "ecgtcn/cost.hpp"

#include <iomanip>
#include <sstream>

namespace ecgtcn {

namespace {

std::int64_t conv_params(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k) {
    return out_ch * in_ch * k + out_ch;  // weights + bias
}

std::int64_t stuffed_k(std::int64_t k, std::int64_t d) { return d * (k - 1) + 1; }

}  // namespace

std::int64_t count_params_arch(const ArchConfig& cfg) {
    std::int64_t n = conv_params(1, cfg.entry_filters, 1);
    std::int64_t in_ch = cfg.entry_filters;
    for (int i = 0; i < cfg.num_blocks; ++i) {
        n += conv_params(in_ch, cfg.block_filters, cfg.kernel_len);
        n += 2 * cfg.block_filters;  // bn1 gamma/beta
        n += conv_params(cfg.block_filters, cfg.block_filters, cfg.kernel_len);
        n += 2 * cfg.block_filters;  // bn2
        if (in_ch != cfg.block_filters) {
            n += conv_params(in_ch, cfg.block_filters, 1);
            n += 2 * cfg.block_filters;  // skip bn
        }
        in_ch = cfg.block_filters;
    }
    const std::int64_t flat = in_ch * cfg.input_len;
    n += flat * cfg.n_classes + cfg.n_classes;
    return n;
}

std::int64_t count_macs_arch(const ArchConfig& cfg, MacMode mode) {
    const std::int64_t T = cfg.input_len;
    const auto keff = [&](std::int64_t k, std::int64_t d) {
        return mode == MacMode::Native ? k : stuffed_k(k, d);
    };
    std::int64_t macs = static_cast<std::int64_t>(cfg.entry_filters) * T * 1 * keff(1, 1);
    std::int64_t in_ch = cfg.entry_filters;
    for (int i = 0; i < cfg.num_blocks; ++i) {
        const std::int64_t d = cfg.dilation(i);
        macs += static_cast<std::int64_t>(cfg.block_filters) * T * in_ch * keff(cfg.kernel_len, d);
        macs += static_cast<std::int64_t>(cfg.block_filters) * T * cfg.block_filters *
                keff(cfg.kernel_len, d);
        if (in_ch != cfg.block_filters) {
            macs += static_cast<std::int64_t>(cfg.block_filters) * T * in_ch * keff(1, 1);
        }
        in_ch = cfg.block_filters;
    }
    macs += in_ch * T * static_cast<std::int64_t>(cfg.n_classes);
    return macs;
}

std::int64_t count_macs(const QNetwork& net, MacMode mode) {
    return count_macs_arch(net.cfg, mode);
}

namespace {

std::int64_t qconv_weight_bytes(const QConv& c) {
    return static_cast<std::int64_t>(c.w.size()) + 4 * static_cast<std::int64_t>(c.bias.size()) +
           8;  // mult + shift
}

}  // namespace

std::pair<std::int64_t, std::int64_t> memory_footprint(const QNetwork& net) {
    std::int64_t weights = qconv_weight_bytes(net.entry);
    for (const auto& blk : net.blocks) {
        weights += qconv_weight_bytes(blk.conv1) + qconv_weight_bytes(blk.conv2);
        if (blk.skip) weights += qconv_weight_bytes(*blk.skip);
        weights += 16;  // two residual-branch requant pairs
    }
    weights += static_cast<std::int64_t>(net.head.w.size()) +
               4 * static_cast<std::int64_t>(net.head.bias.size());

    // Layer-at-a-time liveness. Within a block the input x feeds the skip
    // branch, so it stays live until the residual add.
    const std::int64_t T = net.cfg.input_len;
    std::int64_t peak = 0;
    const auto bump = [&](std::int64_t bytes) { peak = std::max(peak, bytes); };

    std::int64_t in_ch = 1;
    bump((in_ch + net.entry.out_ch) * T);  // entry: in + out
    in_ch = net.entry.out_ch;
    for (const auto& blk : net.blocks) {
        const std::int64_t C = blk.conv1.out_ch;
        const std::int64_t x = in_ch * T;
        bump(x + C * T);              // conv1: x, mid
        bump(x + C * T + C * T);      // conv2: x, mid, main
        if (blk.skip) {
            bump(x + C * T + C * T);  // skip conv: x, main, skip
            bump(3 * C * T);          // add: main, skip, out
        } else {
            bump(x + C * T + C * T);  // add: x(=skip), main, out
        }
        in_ch = static_cast<int>(C);
    }
    // dense: int8 input + int32 logits
    bump(in_ch * T + 4 * static_cast<std::int64_t>(net.head.out_n));
    return {weights, peak};
}

CostReport cost_report(const ArchConfig& cfg, const QNetwork* qnet) {
    CostReport r;
    r.params = count_params_arch(cfg);
    r.macs_native = count_macs_arch(cfg, MacMode::Native);
    r.macs_zero_stuffed = count_macs_arch(cfg, MacMode::ZeroStuffed);
    if (qnet) {
        const auto [w, a] = memory_footprint(*qnet);
        r.weight_bytes = w;
        r.peak_activation_bytes = a;
    }
    return r;
}

std::string format_cost_report(const CostReport& r, bool have_quantized) {
    std::ostringstream os;
    os << "                          computed        paper\n";
    os << std::left;
    const auto line = [&](const std::string& name, const std::string& computed,
                          const std::string& paper) {
        os << std::setw(26) << name << std::setw(16) << computed << paper << "\n";
    };
    line("parameters", std::to_string(r.params), "14883");
    line("MACs (native dilation)", std::to_string(r.macs_native), "1030260");
    line("MACs (zero-stuffed)", std::to_string(r.macs_zero_stuffed), "2339994");
    {
        std::ostringstream ratio;
        ratio << std::fixed << std::setprecision(3)
              << static_cast<double>(r.macs_zero_stuffed) / static_cast<double>(r.macs_native);
        line("  stuffed/native ratio", ratio.str(), "~2.27");
    }
    if (have_quantized) {
        std::ostringstream mem;
        mem << std::fixed << std::setprecision(2)
            << static_cast<double>(r.weight_bytes + r.peak_activation_bytes) / 1024.0 << " kB";
        line("weight bytes", std::to_string(r.weight_bytes), "-");
        line("peak activation bytes", std::to_string(r.peak_activation_bytes), "-");
        line("memory (weights & act.)", mem.str(), "26.63 kB");
    }
    os << "conventions: MACs = multiply-accumulates of convs and the dense head\n"
          "(biases, adds, BN excluded); parameters = learnable tensors incl. BN\n"
          "gamma/beta, running stats excluded; memory = int8 weights + int32\n"
          "biases + requant tables + peak int8 activations, layer-at-a-time.\n";
    return os.str();
}

}  // namespace ecgtcn

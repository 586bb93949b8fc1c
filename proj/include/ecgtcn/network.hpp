#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ecgtcn/arch.hpp"
#include "ecgtcn/layers.hpp"

namespace ecgtcn {

// Residual block: conv -> BN -> ReLU -> dropout -> conv -> BN on the main
// branch, 1x1 conv + BN on the skip branch exactly when the depth changes,
// elementwise add, ReLU. BN slots are optional so that a folded network is
// structurally BN-free.
template <typename S>
struct ResBlock {
    Conv1d<S> conv1;
    std::optional<BatchNorm<S>> bn1;
    Conv1d<S> conv2;
    std::optional<BatchNorm<S>> bn2;
    std::optional<Conv1d<S>> skip_conv;
    std::optional<BatchNorm<S>> skip_bn;

    bool has_projection() const { return skip_conv.has_value(); }
};

template <typename S>
struct Network {
    ArchConfig cfg;
    Conv1d<S> entry;  // 1x1 channel expansion, no BN, no activation
    std::vector<ResBlock<S>> blocks;
    Dense<S> head;

    int bn_count() const {
        int n = 0;
        for (const auto& b : blocks) {
            n += static_cast<int>(b.bn1.has_value()) + static_cast<int>(b.bn2.has_value()) +
                 static_cast<int>(b.skip_bn.has_value());
        }
        return n;
    }
    bool folded() const { return bn_count() == 0; }
};

template <typename S>
Network<S> build_ecg_tcn(const ArchConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    Network<S> net;
    net.cfg = cfg;
    net.entry = make_conv1d<S>(1, cfg.entry_filters, 1, 1, rng);

    int in_ch = cfg.entry_filters;
    for (int i = 0; i < cfg.num_blocks; ++i) {
        ResBlock<S> blk;
        blk.conv1 = make_conv1d<S>(in_ch, cfg.block_filters, cfg.kernel_len, cfg.dilation(i), rng);
        blk.bn1 = make_batchnorm<S>(cfg.block_filters, static_cast<S>(cfg.bn_eps),
                                    static_cast<S>(cfg.bn_momentum));
        blk.conv2 =
            make_conv1d<S>(cfg.block_filters, cfg.block_filters, cfg.kernel_len, cfg.dilation(i), rng);
        blk.bn2 = make_batchnorm<S>(cfg.block_filters, static_cast<S>(cfg.bn_eps),
                                    static_cast<S>(cfg.bn_momentum));
        if (in_ch != cfg.block_filters) {
            blk.skip_conv = make_conv1d<S>(in_ch, cfg.block_filters, 1, 1, rng);
            blk.skip_bn = make_batchnorm<S>(cfg.block_filters, static_cast<S>(cfg.bn_eps),
                                            static_cast<S>(cfg.bn_momentum));
        }
        net.blocks.push_back(std::move(blk));
        in_ch = cfg.block_filters;
    }

    const int flat = (cfg.num_blocks > 0 ? cfg.block_filters : cfg.entry_filters) * cfg.input_len;
    net.head = make_dense<S>(flat, cfg.n_classes, rng);
    return net;
}

/// Calls f(name, tensor) for every learnable tensor in a fixed order.
/// Running statistics are not visited (not learnable).
template <typename S, typename F>
void visit_params(Network<S>& net, F&& f) {
    f("entry.w", net.entry.w);
    f("entry.b", net.entry.b);
    for (std::size_t i = 0; i < net.blocks.size(); ++i) {
        auto& blk = net.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        f(p + "conv1.w", blk.conv1.w);
        f(p + "conv1.b", blk.conv1.b);
        if (blk.bn1) {
            f(p + "bn1.gamma", blk.bn1->gamma);
            f(p + "bn1.beta", blk.bn1->beta);
        }
        f(p + "conv2.w", blk.conv2.w);
        f(p + "conv2.b", blk.conv2.b);
        if (blk.bn2) {
            f(p + "bn2.gamma", blk.bn2->gamma);
            f(p + "bn2.beta", blk.bn2->beta);
        }
        if (blk.skip_conv) {
            f(p + "skip.w", blk.skip_conv->w);
            f(p + "skip.b", blk.skip_conv->b);
        }
        if (blk.skip_bn) {
            f(p + "skip_bn.gamma", blk.skip_bn->gamma);
            f(p + "skip_bn.beta", blk.skip_bn->beta);
        }
    }
    f("head.w", net.head.w);
    f("head.b", net.head.b);
}

/// Structural copy with every learnable tensor zeroed; gradient container.
template <typename S>
Network<S> zeros_like(const Network<S>& net) {
    Network<S> z = net;
    visit_params(z, [](const std::string&, auto& t) { t.setZero(); });
    return z;
}

// ---------------------------------------------------------------------------
// Forward / backward

template <typename S>
struct BlockCache {
    Batch<S> in;         // block input
    Batch<S> c1;         // conv1 output (bn1 input)
    BNStats<S> bn1;
    Batch<S> n1;         // bn1 output (relu mask source)
    Batch<S> drop_mask;  // scaled dropout mask
    Batch<S> d1;         // conv2 input
    Batch<S> c2;         // conv2 output (bn2 input)
    BNStats<S> bn2;
    Batch<S> sc;         // skip conv output (skip bn input)
    BNStats<S> skip;
    Batch<S> z;          // pre-activation sum
};

template <typename S>
struct ForwardCache {
    Batch<S> x0;
    std::vector<BlockCache<S>> blocks;
    Batch<S> flat_in;
    std::vector<Vec<S>> logits;
};

/// Eval-mode activations after the entry conv and all residual blocks
/// (the dense head's input feature map).
template <typename S>
FeatureMap<S> forward_features(const Network<S>& net, const FeatureMap<S>& x) {
    if (x.rows() != 1 || x.cols() != net.cfg.input_len) {
        throw ShapeError("forward: expected 1x" + std::to_string(net.cfg.input_len) + " input");
    }
    FeatureMap<S> a = conv1d_causal_dilated(x, net.entry);
    for (const auto& blk : net.blocks) {
        FeatureMap<S> h = conv1d_causal_dilated(a, blk.conv1);
        if (blk.bn1) h = batchnorm_eval(h, *blk.bn1);
        h = relu(h);
        // dropout is identity in eval mode
        FeatureMap<S> m = conv1d_causal_dilated(h, blk.conv2);
        if (blk.bn2) m = batchnorm_eval(m, *blk.bn2);
        FeatureMap<S> s;
        if (blk.skip_conv) {
            s = conv1d_causal_dilated(a, *blk.skip_conv);
            if (blk.skip_bn) s = batchnorm_eval(s, *blk.skip_bn);
        } else {
            s = a;
        }
        a = relu(FeatureMap<S>(m + s));
    }
    return a;
}

/// Eval-mode forward for one item; pure function of (net, x).
template <typename S>
Vec<S> forward_eval(const Network<S>& net, const FeatureMap<S>& x) {
    return net.head.w * flatten_channel_major(forward_features(net, x)) + net.head.b;
}

/// Train-mode forward over a batch; fills a cache for backward.
/// BN layers must be present (training a folded network is not supported).
template <typename S>
void forward_train(Network<S>& net, const Batch<S>& xs, Rng& rng, ForwardCache<S>& cache) {
    const std::size_t B = xs.size();
    cache.x0 = xs;
    cache.blocks.assign(net.blocks.size(), BlockCache<S>{});

    Batch<S> a(B);
    for (std::size_t i = 0; i < B; ++i) a[i] = conv1d_causal_dilated(xs[i], net.entry);

    for (std::size_t bi = 0; bi < net.blocks.size(); ++bi) {
        auto& blk = net.blocks[bi];
        auto& bc = cache.blocks[bi];
        if (!blk.bn1 || !blk.bn2) throw StructureError("forward_train: network has been folded");
        bc.in = a;

        bc.c1.resize(B);
        for (std::size_t i = 0; i < B; ++i) bc.c1[i] = conv1d_causal_dilated(bc.in[i], blk.conv1);
        bc.bn1 = batchnorm_train(bc.c1, bc.n1, *blk.bn1);

        bc.drop_mask.resize(B);
        bc.d1.resize(B);
        const S p = static_cast<S>(net.cfg.dropout_p);
        for (std::size_t i = 0; i < B; ++i) {
            FeatureMap<S> r = relu(bc.n1[i]);
            if (p > S(0)) {
                bc.drop_mask[i] = dropout_mask<S>(r.rows(), r.cols(), p, rng);
                bc.d1[i] = r.cwiseProduct(bc.drop_mask[i]);
            } else {
                bc.drop_mask[i] = FeatureMap<S>::Ones(r.rows(), r.cols());
                bc.d1[i] = std::move(r);
            }
        }

        bc.c2.resize(B);
        for (std::size_t i = 0; i < B; ++i) bc.c2[i] = conv1d_causal_dilated(bc.d1[i], blk.conv2);
        Batch<S> n2;
        bc.bn2 = batchnorm_train(bc.c2, n2, *blk.bn2);

        Batch<S> s(B);
        if (blk.skip_conv) {
            bc.sc.resize(B);
            for (std::size_t i = 0; i < B; ++i) {
                bc.sc[i] = conv1d_causal_dilated(bc.in[i], *blk.skip_conv);
            }
            bc.skip = batchnorm_train(bc.sc, s, *blk.skip_bn);
        } else {
            s = bc.in;
        }

        bc.z.resize(B);
        a.resize(B);
        for (std::size_t i = 0; i < B; ++i) {
            bc.z[i] = n2[i] + s[i];
            a[i] = relu(bc.z[i]);
        }
    }

    cache.flat_in = a;
    cache.logits.resize(B);
    for (std::size_t i = 0; i < B; ++i) {
        cache.logits[i] = net.head.w * flatten_channel_major(a[i]) + net.head.b;
    }
}

/// Mean cross-entropy over the batch from cached logits.
template <typename S>
S cross_entropy(const std::vector<Vec<S>>& logits, const std::vector<int>& labels) {
    S loss = S(0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const Vec<S> p = softmax(logits[i]);
        loss -= std::log(std::max(p[labels[i] - 1], std::numeric_limits<S>::min()));
    }
    return loss / static_cast<S>(logits.size());
}

/// Gradients of mean cross-entropy w.r.t. every learnable tensor.
/// `grads` must be zeros_like(net)-shaped; gradients are accumulated.
template <typename S>
void backward(Network<S>& net, const ForwardCache<S>& cache, const std::vector<int>& labels,
              Network<S>& grads) {
    const std::size_t B = cache.x0.size();
    const S inv_b = S(1) / static_cast<S>(B);

    // head
    Batch<S> da(B);
    const Eigen::Index C = cache.flat_in.front().rows();
    const Eigen::Index T = cache.flat_in.front().cols();
    for (std::size_t i = 0; i < B; ++i) {
        Vec<S> dlogits = softmax(cache.logits[i]);
        dlogits[labels[i] - 1] -= S(1);
        dlogits *= inv_b;
        const Vec<S> flat = flatten_channel_major(cache.flat_in[i]);
        grads.head.w.noalias() += dlogits * flat.transpose();
        grads.head.b += dlogits;
        da[i] = unflatten_channel_major<S>(net.head.w.transpose() * dlogits, C, T);
    }

    for (std::size_t bi = net.blocks.size(); bi-- > 0;) {
        auto& blk = net.blocks[bi];
        auto& gblk = grads.blocks[bi];
        const auto& bc = cache.blocks[bi];

        // through final ReLU
        Batch<S> dz(B);
        for (std::size_t i = 0; i < B; ++i) {
            dz[i] = (bc.z[i].array() > S(0)).template cast<S>().matrix().cwiseProduct(da[i]);
        }

        // skip branch
        Batch<S> din(B);
        if (blk.skip_conv) {
            Batch<S> dsc;
            batchnorm_backward(bc.sc, bc.skip, *blk.skip_bn, dz, dsc, gblk.skip_bn->gamma,
                               gblk.skip_bn->beta);
            for (std::size_t i = 0; i < B; ++i) {
                din[i] = conv1d_backward(bc.in[i], *blk.skip_conv, dsc[i], *gblk.skip_conv);
            }
        } else {
            din = dz;
        }

        // main branch: bn2 <- conv2 <- dropout <- relu <- bn1 <- conv1
        Batch<S> dc2;
        batchnorm_backward(bc.c2, bc.bn2, *blk.bn2, dz, dc2, gblk.bn2->gamma, gblk.bn2->beta);
        Batch<S> dn1(B);
        for (std::size_t i = 0; i < B; ++i) {
            FeatureMap<S> dd1 = conv1d_backward(bc.d1[i], blk.conv2, dc2[i], gblk.conv2);
            dd1 = dd1.cwiseProduct(bc.drop_mask[i]);
            dn1[i] = (bc.n1[i].array() > S(0)).template cast<S>().matrix().cwiseProduct(dd1);
        }
        Batch<S> dc1;
        batchnorm_backward(bc.c1, bc.bn1, *blk.bn1, dn1, dc1, gblk.bn1->gamma, gblk.bn1->beta);
        for (std::size_t i = 0; i < B; ++i) {
            din[i] += conv1d_backward(bc.in[i], blk.conv1, dc1[i], gblk.conv1);
        }
        da = std::move(din);
    }

    for (std::size_t i = 0; i < B; ++i) {
        conv1d_backward(cache.x0[i], net.entry, da[i], grads.entry);
    }
}

}  // namespace ecgtcn

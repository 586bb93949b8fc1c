#include "ecgtcn/quant.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace ecgtcn {

std::int8_t quantize_value(float r, const QuantParams& qp) {
    const long q = std::lround(static_cast<double>(r) / qp.scale) + qp.zero_point;
    return static_cast<std::int8_t>(std::clamp(q, -128L, 127L));
}

float dequantize_value(std::int8_t q, const QuantParams& qp) {
    return qp.scale * static_cast<float>(static_cast<int>(q) - qp.zero_point);
}

QuantParams quant_params_from_range(float mn, float mx) {
    if (!std::isfinite(mn) || !std::isfinite(mx) || mn > mx) {
        throw DataError("calibration produced a non-finite or inverted range");
    }
    mn = std::min(mn, 0.0f);
    mx = std::max(mx, 0.0f);
    if (mx == mn) {  // constant edge
        mn -= 1e-3f;
        mx += 1e-3f;
    }
    QuantParams qp;
    qp.scale = (mx - mn) / 255.0f;
    const long zp = std::lround(-128.0 - static_cast<double>(mn) / qp.scale);
    qp.zero_point = static_cast<int>(std::clamp(zp, -128L, 127L));
    return qp;
}

namespace {

/// gamma / sqrt(var + eps) and the matching shift, in double.
struct BnFold {
    std::vector<double> scale, shift;
};

BnFold bn_factors(const BatchNorm<float>& bn) {
    BnFold f;
    const auto n = static_cast<std::size_t>(bn.gamma.size());
    f.scale.resize(n);
    f.shift.resize(n);
    for (std::size_t c = 0; c < n; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(bn.running_var[c]) +
                                           static_cast<double>(bn.eps));
        f.scale[c] = static_cast<double>(bn.gamma[c]) * inv;
        f.shift[c] = static_cast<double>(bn.beta[c]) -
                     f.scale[c] * static_cast<double>(bn.running_mean[c]);
    }
    return f;
}

void fold_into(Conv1d<float>& conv, const BatchNorm<float>& bn) {
    if (bn.gamma.size() != conv.out_ch) {
        throw StructureError("fold_batchnorm: BN width does not match the preceding conv");
    }
    const BnFold f = bn_factors(bn);
    for (int c = 0; c < conv.out_ch; ++c) {
        for (Eigen::Index j = 0; j < conv.w.cols(); ++j) {
            conv.w(c, j) = static_cast<float>(static_cast<double>(conv.w(c, j)) * f.scale[c]);
        }
        conv.b[c] = static_cast<float>(static_cast<double>(conv.b[c]) * f.scale[c] + f.shift[c]);
    }
}

}  // namespace

Network<float> fold_batchnorm(const Network<float>& net) {
    Network<float> out = net;
    for (auto& blk : out.blocks) {
        if (blk.bn1) {
            fold_into(blk.conv1, *blk.bn1);
            blk.bn1.reset();
        }
        if (blk.bn2) {
            fold_into(blk.conv2, *blk.bn2);
            blk.bn2.reset();
        }
        if (blk.skip_bn) {
            if (!blk.skip_conv) {
                throw StructureError("fold_batchnorm: skip BN without a skip conv");
            }
            fold_into(*blk.skip_conv, *blk.skip_bn);
            blk.skip_bn.reset();
        }
    }
    return out;
}

void ActivationRanges::update(const std::string& name, float v) {
    auto it = edges.find(name);
    if (it == edges.end()) {
        edges.emplace(name, std::make_pair(v, v));
    } else {
        it->second.first = std::min(it->second.first, v);
        it->second.second = std::max(it->second.second, v);
    }
}

const std::pair<float, float>& ActivationRanges::at(const std::string& name) const {
    auto it = edges.find(name);
    if (it == edges.end()) throw DataError("no calibrated range for edge '" + name + "'");
    return it->second;
}

namespace {

void update_range(ActivationRanges& r, const std::string& name, const FeatureMap<float>& x) {
    r.update(name, x.minCoeff());
    r.update(name, x.maxCoeff());
}

}  // namespace

ActivationRanges calibrate(const Network<float>& folded, const Dataset& calib) {
    if (calib.empty()) throw DataError("calibration dataset is empty");
    if (!folded.folded()) throw StructureError("calibrate expects a BN-folded network");

    ActivationRanges ranges;
    for (const auto& beat : calib.beats) {
        FeatureMap<float> x(1, static_cast<Eigen::Index>(beat.samples.size()));
        for (std::size_t t = 0; t < beat.samples.size(); ++t) x(0, t) = beat.samples[t];
        update_range(ranges, "input", x);

        FeatureMap<float> a = conv1d_causal_dilated(x, folded.entry);
        update_range(ranges, "entry", a);

        for (std::size_t i = 0; i < folded.blocks.size(); ++i) {
            const auto& blk = folded.blocks[i];
            const std::string p = "block" + std::to_string(i) + ".";

            FeatureMap<float> mid = relu(conv1d_causal_dilated(a, blk.conv1));
            update_range(ranges, p + "mid", mid);

            FeatureMap<float> main = conv1d_causal_dilated(mid, blk.conv2);
            update_range(ranges, p + "main", main);

            FeatureMap<float> s;
            if (blk.skip_conv) {
                s = conv1d_causal_dilated(a, *blk.skip_conv);
                update_range(ranges, p + "skip", s);
            } else {
                s = a;
            }
            a = relu(FeatureMap<float>(main + s));
            update_range(ranges, p + "out", a);
        }

        const Vec<float> logits = folded.head.w * flatten_channel_major(a) + folded.head.b;
        ranges.update("logits", logits.minCoeff());
        ranges.update("logits", logits.maxCoeff());
    }
    return ranges;
}

namespace {

/// Per-tensor symmetric weights: scale = max|w|/127, zero point 0;
/// an all-zero tensor quantizes with scale 1.
float quantize_weights(const FeatureMap<float>& w, std::vector<std::int8_t>& out,
                       const std::function<std::size_t(Eigen::Index, Eigen::Index)>& flat_index,
                       std::size_t count) {
    const float max_abs = w.size() > 0 ? w.cwiseAbs().maxCoeff() : 0.0f;
    const float scale = max_abs > 0.0f ? max_abs / 127.0f : 1.0f;
    out.assign(count, 0);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            const long q = std::lround(static_cast<double>(w(r, c)) / scale);
            out[flat_index(r, c)] = static_cast<std::int8_t>(std::clamp(q, -127L, 127L));
        }
    }
    return scale;
}

std::vector<std::int32_t> quantize_bias(const Vec<float>& b, double scale) {
    std::vector<std::int32_t> out(static_cast<std::size_t>(b.size()));
    for (Eigen::Index i = 0; i < b.size(); ++i) {
        const long long q = std::llround(static_cast<double>(b[i]) / scale);
        out[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(
            std::clamp(q, -2147483648LL, 2147483647LL));
    }
    return out;
}

QConv quantize_conv(const Conv1d<float>& conv, const QuantParams& in_qp,
                    const QuantParams& out_qp) {
    QConv q;
    q.in_ch = conv.in_ch;
    q.out_ch = conv.out_ch;
    q.kernel_len = conv.kernel_len;
    q.dilation = conv.dilation;
    q.in_qp = in_qp;
    q.out_qp = out_qp;
    // float layout: w(c, k*in_ch + i); engine layout: (c*in_ch + i)*K + k
    const int in_ch = conv.in_ch;
    const int K = conv.kernel_len;
    q.w_scale = quantize_weights(
        conv.w, q.w,
        [in_ch, K](Eigen::Index r, Eigen::Index col) {
            const int k = static_cast<int>(col) / in_ch;
            const int i = static_cast<int>(col) % in_ch;
            return static_cast<std::size_t>((r * in_ch + i) * K + k);
        },
        static_cast<std::size_t>(conv.w.size()));
    const double bias_scale = static_cast<double>(in_qp.scale) * q.w_scale;
    q.bias = quantize_bias(conv.b, bias_scale);
    q.rq = make_requant(bias_scale / out_qp.scale);
    return q;
}

}  // namespace

QNetwork quantize_network(const Network<float>& folded, const ActivationRanges& ranges) {
    if (!folded.folded()) throw StructureError("quantize_network expects a BN-folded network");

    QNetwork q;
    q.cfg = folded.cfg;
    const auto edge_qp = [&](const std::string& name) {
        const auto& [mn, mx] = ranges.at(name);
        return quant_params_from_range(mn, mx);
    };

    q.input_qp = edge_qp("input");
    QuantParams prev = edge_qp("entry");
    q.entry = quantize_conv(folded.entry, q.input_qp, prev);

    for (std::size_t i = 0; i < folded.blocks.size(); ++i) {
        const auto& blk = folded.blocks[i];
        const std::string p = "block" + std::to_string(i) + ".";
        QBlock qb;
        const QuantParams mid = edge_qp(p + "mid");
        const QuantParams main = edge_qp(p + "main");
        const QuantParams out = edge_qp(p + "out");
        qb.conv1 = quantize_conv(blk.conv1, prev, mid);
        qb.conv2 = quantize_conv(blk.conv2, mid, main);
        QuantParams skip_qp = prev;  // identity skip re-uses the block input edge
        if (blk.skip_conv) {
            skip_qp = edge_qp(p + "skip");
            qb.skip = quantize_conv(*blk.skip_conv, prev, skip_qp);
        }
        qb.add_main = make_requant(static_cast<double>(main.scale) / out.scale);
        qb.add_skip = make_requant(static_cast<double>(skip_qp.scale) / out.scale);
        qb.out_qp = out;
        q.blocks.push_back(std::move(qb));
        prev = out;
    }

    q.head.in_n = static_cast<int>(folded.head.w.cols());
    q.head.out_n = static_cast<int>(folded.head.w.rows());
    q.head.in_qp = prev;
    const int in_n = q.head.in_n;
    q.head.w_scale = quantize_weights(
        folded.head.w, q.head.w,
        [in_n](Eigen::Index r, Eigen::Index c) {
            return static_cast<std::size_t>(r) * in_n + static_cast<std::size_t>(c);
        },
        static_cast<std::size_t>(folded.head.w.size()));
    q.head.bias =
        quantize_bias(folded.head.b, static_cast<double>(prev.scale) * q.head.w_scale);
    q.head.logits_qp = edge_qp("logits");

    check_accumulator_bounds(q);
    return q;
}

}  // namespace ecgtcn

#include "ecgtcn/qengine.hpp"

#include <cmath>

namespace ecgtcn {

QFeatureMap causal_pad(const QFeatureMap& x, int amount) {
    QFeatureMap y;
    y.channels = x.channels;
    y.length = x.length + amount;
    y.qp = x.qp;
    y.data.assign(static_cast<std::size_t>(y.channels) * y.length,
                  static_cast<std::int8_t>(x.qp.zero_point));
    for (int c = 0; c < x.channels; ++c) {
        for (int t = 0; t < x.length; ++t) y.at(c, t + amount) = x.at(c, t);
    }
    return y;
}

void qconv1d_range(const QFeatureMap& x, const QConv& layer, int t_begin, int t_end,
                   std::int8_t* out) {
    if (x.channels != layer.in_ch) {
        throw ShapeError("qconv1d: input has " + std::to_string(x.channels) +
                         " channels, layer expects " + std::to_string(layer.in_ch));
    }
    const int K = layer.kernel_len;
    const int d = layer.dilation;
    const int zp_in = layer.in_qp.zero_point;
    const int zp_out = layer.out_qp.zero_point;
    for (int c = 0; c < layer.out_ch; ++c) {
        for (int t = t_begin; t < t_end; ++t) {
            std::int32_t acc = layer.bias[static_cast<std::size_t>(c)];
            for (int k = 0; k < K; ++k) {
                const int src = t - (K - 1 - k) * d;
                if (src < 0) continue;  // left padding holds real zero exactly
                for (int i = 0; i < layer.in_ch; ++i) {
                    acc += static_cast<std::int32_t>(layer.weight(c, i, k)) *
                           (static_cast<std::int32_t>(x.at(i, src)) - zp_in);
                }
            }
            out[static_cast<std::size_t>(c) * (t_end - t_begin) + (t - t_begin)] =
                requantize(acc, layer.rq, zp_out);
        }
    }
}

QFeatureMap qconv1d_dilated(const QFeatureMap& x, const QConv& layer) {
    QFeatureMap y;
    y.channels = layer.out_ch;
    y.length = x.length;
    y.qp = layer.out_qp;
    y.data.resize(static_cast<std::size_t>(y.channels) * y.length);
    qconv1d_range(x, layer, 0, x.length, y.data.data());
    return y;
}

QConv zero_stuff(const QConv& layer) {
    if (layer.dilation == 1) return layer;
    QConv out = layer;
    out.dilation = 1;
    out.kernel_len = layer.dilation * (layer.kernel_len - 1) + 1;
    out.w.assign(static_cast<std::size_t>(layer.out_ch) * layer.in_ch * out.kernel_len, 0);
    for (int c = 0; c < layer.out_ch; ++c) {
        for (int i = 0; i < layer.in_ch; ++i) {
            for (int k = 0; k < layer.kernel_len; ++k) {
                out.w[static_cast<std::size_t>((c * layer.in_ch + i) * out.kernel_len) +
                      k * layer.dilation] = layer.weight(c, i, k);
            }
        }
    }
    return out;
}

QFeatureMap qresidual_add(const QFeatureMap& a, const QFeatureMap& b, const Requant& ra,
                          const Requant& rb, const QuantParams& qp_out) {
    if (a.channels != b.channels || a.length != b.length) {
        throw ShapeError("qresidual_add: shape mismatch");
    }
    QFeatureMap y;
    y.channels = a.channels;
    y.length = a.length;
    y.qp = qp_out;
    y.data.resize(a.data.size());
    for (std::size_t j = 0; j < a.data.size(); ++j) {
        const std::int32_t va = static_cast<std::int32_t>(a.data[j]) - a.qp.zero_point;
        const std::int32_t vb = static_cast<std::int32_t>(b.data[j]) - b.qp.zero_point;
        const std::int64_t sum = requant_core(va, ra) + requant_core(vb, rb) + qp_out.zero_point;
        y.data[j] = saturate_i8(sum);
    }
    return y;
}

QFeatureMap qrelu(const QFeatureMap& x) {
    QFeatureMap y = x;
    const auto zp = static_cast<std::int8_t>(x.qp.zero_point);
    for (auto& v : y.data) {
        if (v < zp) v = zp;
    }
    return y;
}

QFeatureMap quantize_beat(const Beat& beat, const QuantParams& qp) {
    QFeatureMap x;
    x.channels = 1;
    x.length = static_cast<int>(beat.samples.size());
    x.qp = qp;
    x.data.resize(beat.samples.size());
    for (std::size_t t = 0; t < beat.samples.size(); ++t) {
        const long q =
            std::lround(static_cast<double>(beat.samples[t]) / qp.scale) + qp.zero_point;
        x.data[t] = saturate_i8(q);
    }
    return x;
}

std::vector<std::int32_t> qforward(const QNetwork& net, const QFeatureMap& input) {
    QFeatureMap x = qconv1d_dilated(input, net.entry);
    for (const auto& blk : net.blocks) {
        QFeatureMap mid = qrelu(qconv1d_dilated(x, blk.conv1));
        QFeatureMap main = qconv1d_dilated(mid, blk.conv2);
        const QFeatureMap& skip_in = x;
        QFeatureMap skip;
        if (blk.skip) {
            skip = qconv1d_dilated(skip_in, *blk.skip);
        } else {
            skip = skip_in;
        }
        x = qrelu(qresidual_add(main, skip, blk.add_main, blk.add_skip, blk.out_qp));
    }

    // channel-major flatten, then the int32 dense head; logits stay int32
    const int T = x.length;
    const int zp_in = net.head.in_qp.zero_point;
    std::vector<std::int32_t> logits(static_cast<std::size_t>(net.head.out_n));
    for (int o = 0; o < net.head.out_n; ++o) {
        std::int32_t acc = net.head.bias[static_cast<std::size_t>(o)];
        for (int c = 0; c < x.channels; ++c) {
            for (int t = 0; t < T; ++t) {
                acc += static_cast<std::int32_t>(net.head.weight(o, c * T + t)) *
                       (static_cast<std::int32_t>(x.at(c, t)) - zp_in);
            }
        }
        logits[static_cast<std::size_t>(o)] = acc;
    }
    return logits;
}

int argmax_class(const std::vector<std::int32_t>& logits) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i) {
        if (logits[i] > logits[best]) best = i;
    }
    return static_cast<int>(best) + 1;
}

QPrediction qpredict(const QNetwork& net, const Beat& beat) {
    if (static_cast<int>(beat.samples.size()) != net.cfg.input_len) {
        throw ShapeError("qpredict: beat length " + std::to_string(beat.samples.size()) +
                         " does not match input length " + std::to_string(net.cfg.input_len));
    }
    QPrediction p;
    p.logits = qforward(net, quantize_beat(beat, net.input_qp));
    p.class_id = argmax_class(p.logits);
    return p;
}

}  // namespace ecgtcn

#include "ecgtcn/codegen.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecgtcn/qengine.hpp"
#include "ecgtcn/rng.hpp"

namespace ecgtcn {

namespace {

std::string int8_array(const std::string& name, const std::vector<std::int8_t>& v) {
    std::ostringstream os;
    os << "static const int8_t " << name << "[" << v.size() << "] = {";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i % 16 == 0) os << "\n    ";
        os << static_cast<int>(v[i]) << (i + 1 < v.size() ? "," : "");
    }
    os << "\n};\n";
    return os.str();
}

std::string int32_array(const std::string& name, const std::vector<std::int32_t>& v) {
    std::ostringstream os;
    os << "static const int32_t " << name << "[" << v.size() << "] = {";
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i % 8 == 0) os << "\n    ";
        os << v[i] << (i + 1 < v.size() ? "," : "");
    }
    os << "\n};\n";
    return os.str();
}

struct ConvSymbols {
    std::string w, b, rq;
};

}  // namespace

SourceBundle emit_source(const QNetwork& net, const CodegenOptions& opts) {
    check_accumulator_bounds(net);

    // Optionally rewrite every dilated kernel as an explicit zero-stuffed one.
    QNetwork model = net;
    if (!opts.native_dilation) {
        model.entry = zero_stuff(model.entry);
        for (auto& blk : model.blocks) {
            blk.conv1 = zero_stuff(blk.conv1);
            blk.conv2 = zero_stuff(blk.conv2);
            if (blk.skip) *blk.skip = zero_stuff(*blk.skip);
        }
    }

    const int T = model.cfg.input_len;
    const int n_classes = model.head.out_n;

    SourceBundle bundle;

    // --- net.h
    {
        std::ostringstream h;
        h << "/* ECG-TCN int8 inference, generated code. Do not edit. */\n";
        h << "#ifndef ECGTCN_NET_H\n#define ECGTCN_NET_H\n\n";
        h << "#include <stdint.h>\n\n";
        h << "#define ECGTCN_INPUT_LEN " << T << "\n";
        h << "#define ECGTCN_NUM_CLASSES " << n_classes << "\n\n";
        h << "/* Runs one inference on a pre-quantized int8 input; writes raw\n"
             " * int32 logits and the 1-based predicted class (ties resolve to\n"
             " * the lowest class index). */\n";
        h << "void ecgtcn_infer(const int8_t input[ECGTCN_INPUT_LEN],\n"
             "                  int32_t logits[ECGTCN_NUM_CLASSES],\n"
             "                  int32_t *class_index);\n\n";
        h << "#endif /* ECGTCN_NET_H */\n";
        bundle.header = h.str();
    }

    // --- net.c
    std::ostringstream c;
    c << "/* ECG-TCN int8 inference, generated code. Do not edit.\n"
         " * Integer-only, no heap, no I/O; bit-identical to the reference\n"
         " * engine that emitted it. */\n\n";
    c << "#include \"net.h\"\n\n";

    std::int64_t const_bytes = 0;
    const auto emit_conv = [&](const std::string& sym, const QConv& conv) -> ConvSymbols {
        ConvSymbols s{"W_" + sym, "B_" + sym, "RQ_" + sym};
        c << int8_array(s.w, conv.w);
        c << int32_array(s.b, conv.bias);
        c << int32_array(s.rq, {conv.rq.mult, conv.rq.shift});
        const_bytes += static_cast<std::int64_t>(conv.w.size()) +
                       4 * static_cast<std::int64_t>(conv.bias.size()) + 8;
        return s;
    };

    const ConvSymbols entry_sym = emit_conv("ENTRY", model.entry);
    std::vector<ConvSymbols> c1_sym, c2_sym, skip_sym;
    std::vector<std::string> add_sym;
    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const auto& blk = model.blocks[i];
        const std::string b = "B" + std::to_string(i);
        c1_sym.push_back(emit_conv(b + "_CONV1", blk.conv1));
        c2_sym.push_back(emit_conv(b + "_CONV2", blk.conv2));
        if (blk.skip) {
            skip_sym.push_back(emit_conv(b + "_SKIP", *blk.skip));
        } else {
            skip_sym.push_back(ConvSymbols{});
        }
        const std::string add = "ADD_RQ_" + b;
        c << int32_array(add, {blk.add_main.mult, blk.add_main.shift, blk.add_skip.mult,
                               blk.add_skip.shift});
        const_bytes += 16;
        add_sym.push_back(add);
    }
    c << int8_array("W_HEAD", model.head.w);
    c << int32_array("B_HEAD", model.head.bias);
    const_bytes += static_cast<std::int64_t>(model.head.w.size()) +
                   4 * static_cast<std::int64_t>(model.head.bias.size());
    bundle.const_bytes = const_bytes;

    c << R"(
/* Fixed-point rescale: round-half-up on acc * mult * 2^-shift, with the
 * floor division spelled out so the result never depends on the sign
 * behavior of >>. */
static int64_t rq_core(int32_t acc, int32_t mult, int32_t shift) {
    int64_t v = (int64_t)acc * (int64_t)mult + ((int64_t)1 << (shift - 1));
    int64_t d = (int64_t)1 << shift;
    int64_t q = v / d;
    if (v % d != 0 && v < 0) {
        q -= 1;
    }
    return q;
}

static int8_t sat_i8(int64_t v) {
    if (v < -128) {
        return (int8_t)-128;
    }
    if (v > 127) {
        return (int8_t)127;
    }
    return (int8_t)v;
}

/* Dilated causal convolution. Left padding holds real zero, which
 * contributes nothing to the accumulator, so padded taps are skipped.
 * Accumulation order: tap-major, then input channel. */
static void conv1d(const int8_t *x, int in_ch, int8_t *y, int out_ch,
                   int kernel_len, int dilation, const int8_t *w,
                   const int32_t *bias, const int32_t *rq, int zp_in,
                   int zp_out, int relu) {
    int c;
    for (c = 0; c < out_ch; ++c) {
        int t;
        for (t = 0; t < ECGTCN_INPUT_LEN; ++t) {
            int32_t acc = bias[c];
            int k;
            int8_t v;
            for (k = 0; k < kernel_len; ++k) {
                const int src = t - (kernel_len - 1 - k) * dilation;
                int i;
                if (src < 0) {
                    continue;
                }
                for (i = 0; i < in_ch; ++i) {
                    acc += (int32_t)w[(c * in_ch + i) * kernel_len + k] *
                           ((int32_t)x[i * ECGTCN_INPUT_LEN + src] - zp_in);
                }
            }
            v = sat_i8(rq_core(acc, rq[0], rq[1]) + zp_out);
            if (relu && v < zp_out) {
                v = (int8_t)zp_out;
            }
            y[c * ECGTCN_INPUT_LEN + t] = v;
        }
    }
}

/* Dense head over the channel-major flattened input; logits stay int32. */
static void dense(const int8_t *x, int in_n, int32_t *logits, int out_n,
                  const int8_t *w, const int32_t *bias, int zp_in) {
    int o;
    for (o = 0; o < out_n; ++o) {
        int32_t acc = bias[o];
        int j;
        for (j = 0; j < in_n; ++j) {
            acc += (int32_t)w[o * in_n + j] * ((int32_t)x[j] - zp_in);
        }
        logits[o] = acc;
    }
}
)";

    if (!model.blocks.empty()) {
        c << R"(
/* Residual add: each branch is rescaled into the output scale once, the
 * rounded values are added in the integer domain, then clamped; ReLU is
 * a clamp at the output zero point. */
static void add_relu(const int8_t *a, int zp_a, const int8_t *b, int zp_b,
                     const int32_t *rq, int zp_out, int8_t *y, int n) {
    int j;
    for (j = 0; j < n; ++j) {
        int64_t s = rq_core((int32_t)a[j] - zp_a, rq[0], rq[1]) +
                    rq_core((int32_t)b[j] - zp_b, rq[2], rq[3]) + zp_out;
        int8_t v = sat_i8(s);
        if (v < zp_out) {
            v = (int8_t)zp_out;
        }
        y[j] = v;
    }
}
)";
    }

    // Activation buffers: three rotating feature maps cover the deepest
    // liveness (block input kept for the skip branch, mid, main).
    int max_ch = model.entry.out_ch;
    for (const auto& blk : model.blocks) max_ch = std::max(max_ch, blk.conv2.out_ch);
    const int buf_elems = max_ch * T;

    c << "\nvoid ecgtcn_infer(const int8_t input[ECGTCN_INPUT_LEN],\n"
         "                  int32_t logits[ECGTCN_NUM_CLASSES],\n"
         "                  int32_t *class_index) {\n";
    const char* storage = opts.static_buffers ? "static int8_t" : "int8_t";
    c << "    " << storage << " buf_a[" << buf_elems << "];\n";
    if (!model.blocks.empty()) {
        c << "    " << storage << " buf_b[" << buf_elems << "];\n";
        c << "    " << storage << " buf_c[" << buf_elems << "];\n";
    }
    c << "\n";

    const auto conv_call = [&](const std::string& src, const std::string& dst, const QConv& conv,
                               const ConvSymbols& sym, bool relu) {
        c << "    conv1d(" << src << ", " << conv.in_ch << ", " << dst << ", " << conv.out_ch
          << ", " << conv.kernel_len << ", " << conv.dilation << ", " << sym.w << ", " << sym.b
          << ", " << sym.rq << ", " << conv.in_qp.zero_point << ", " << conv.out_qp.zero_point
          << ", " << (relu ? 1 : 0) << ");\n";
    };

    // buffer rotation: x holds the running feature map
    std::string x = "buf_a";
    std::string free1 = "buf_b";
    std::string free2 = "buf_c";
    c << "    /* 1x1 entry expansion */\n";
    conv_call("input", x, model.entry, entry_sym, false);

    for (std::size_t i = 0; i < model.blocks.size(); ++i) {
        const auto& blk = model.blocks[i];
        c << "\n    /* residual block " << i << " (dilation " << blk.conv1.dilation << ") */\n";
        const std::string mid = free1;
        const std::string main_buf = free2;
        conv_call(x, mid, blk.conv1, c1_sym[i], true);
        conv_call(mid, main_buf, blk.conv2, c2_sym[i], false);
        const int n = blk.conv2.out_ch * T;
        if (blk.skip) {
            // mid is dead; reuse its buffer for the projected skip
            conv_call(x, mid, *blk.skip, skip_sym[i], false);
            c << "    add_relu(" << main_buf << ", " << blk.conv2.out_qp.zero_point << ", " << mid
              << ", " << blk.skip->out_qp.zero_point << ", " << add_sym[i] << ", "
              << blk.out_qp.zero_point << ", " << x << ", " << n << ");\n";
            // x stays in place; mid/main buffers remain free
        } else {
            const int zp_skip = i == 0 ? model.entry.out_qp.zero_point
                                       : model.blocks[i - 1].out_qp.zero_point;
            c << "    add_relu(" << main_buf << ", " << blk.conv2.out_qp.zero_point << ", " << x
              << ", " << zp_skip << ", " << add_sym[i] << ", " << blk.out_qp.zero_point << ", "
              << mid << ", " << n << ");\n";
            // output landed in mid's buffer; rotate
            const std::string old_x = x;
            x = mid;
            free1 = old_x;
        }
    }

    c << "\n    dense(" << x << ", " << model.head.in_n << ", logits, " << model.head.out_n
      << ", W_HEAD, B_HEAD, " << model.head.in_qp.zero_point << ");\n";
    c << R"(
    {
        int32_t best = 0;
        int o;
        for (o = 1; o < ECGTCN_NUM_CLASSES; ++o) {
            if (logits[o] > logits[best]) {
                best = o;
            }
        }
        *class_index = best + 1;
    }
}
)";
    bundle.implementation = c.str();

    // --- main.c
    {
        std::ostringstream m;
        m << "/* Golden-vector harness: reads lines of " << T << " int8 values\n"
             " * (anything after them, e.g. expected logits, is ignored) and prints\n"
             " * \"logit0 .. logit" << (n_classes - 1) << " class\" per line. */\n\n";
        m << "#include <stdio.h>\n#include <stdlib.h>\n\n#include \"net.h\"\n\n";
        m << R"(int main(void) {
    char line[16384];
    while (fgets(line, sizeof line, stdin)) {
        int8_t x[ECGTCN_INPUT_LEN];
        int32_t logits[ECGTCN_NUM_CLASSES];
        int32_t cls = 0;
        char *p = line;
        int n;
        int ok = 1;
        for (n = 0; n < ECGTCN_INPUT_LEN; ++n) {
            char *end = p;
            long v = strtol(p, &end, 10);
            if (end == p) {
                ok = 0;
                break;
            }
            x[n] = (int8_t)v;
            p = end;
        }
        if (!ok) {
            continue; /* blank or short line */
        }
        ecgtcn_infer(x, logits, &cls);
        for (n = 0; n < ECGTCN_NUM_CLASSES; ++n) {
            printf("%ld ", (long)logits[n]);
        }
        printf("%ld\n", (long)cls);
    }
    return 0;
}
)";
        bundle.harness = m.str();
    }

    return bundle;
}

void write_bundle(const SourceBundle& bundle, const std::string& dir) {
    std::filesystem::create_directories(dir);
    const auto write = [&](const std::string& name, const std::string& text) {
        std::ofstream out(std::filesystem::path(dir) / name);
        if (!out) throw DataError("cannot write " + name + " under " + dir);
        out << text;
    };
    write("net.h", bundle.header);
    write("net.c", bundle.implementation);
    write("main.c", bundle.harness);
}

std::string emit_golden_vectors(const QNetwork& net, const Dataset& ds, int n,
                                std::uint64_t seed) {
    if (ds.empty()) throw DataError("golden vectors: dataset is empty");
    if (n > static_cast<int>(ds.size())) {
        throw UsageError("golden vectors: asked for " + std::to_string(n) + " beats, have " +
                         std::to_string(ds.size()));
    }
    std::vector<std::size_t> idx(ds.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(seed);
    rng.shuffle(idx);

    std::ostringstream os;
    for (int j = 0; j < n; ++j) {
        const Beat& beat = ds.beats[idx[static_cast<std::size_t>(j)]];
        const QFeatureMap q = quantize_beat(beat, net.input_qp);
        for (int t = 0; t < q.length; ++t) {
            os << static_cast<int>(q.data[static_cast<std::size_t>(t)]) << ' ';
        }
        const auto logits = qforward(net, q);
        for (std::size_t o = 0; o < logits.size(); ++o) {
            os << logits[o] << (o + 1 < logits.size() ? " " : "");
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace ecgtcn

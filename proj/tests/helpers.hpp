#pragma once

// Shared test utilities: a synthetic 5-class beat generator shaped like
// ECG5000 (140 samples, z-normalized, imbalanced classes) and independent
// brute-force oracles. Oracles deliberately avoid the library's compute
// paths: explicit padding, plain loops, wide integers.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "ecgtcn/dataset.hpp"
#include "ecgtcn/network.hpp"
#include "ecgtcn/qnetwork.hpp"
#include "ecgtcn/quant.hpp"
#include "ecgtcn/rng.hpp"

namespace testutil {

inline double gauss_bump(double t, double mu, double sig) {
    const double z = (t - mu) / sig;
    return std::exp(-0.5 * z * z);
}

/// One synthetic beat of the given class (1..5), z-normalized.
inline ecgtcn::Beat synth_beat(int cls, ecgtcn::Rng& rng, int len = 140) {
    ecgtcn::Beat b;
    b.label = cls;
    b.samples.resize(static_cast<std::size_t>(len));
    const double amp = rng.uniform(0.9, 1.1);
    const double shift = rng.uniform(-0.02, 0.02);
    double mean = 0.0;
    for (int i = 0; i < len; ++i) {
        const double t = static_cast<double>(i) / (len - 1) + shift;
        double v = 0.0;
        switch (cls) {
            case 1:
                v = -1.2 * gauss_bump(t, 0.15, 0.03) + 2.5 * gauss_bump(t, 0.22, 0.02) -
                    0.8 * gauss_bump(t, 0.30, 0.04) + 0.9 * gauss_bump(t, 0.55, 0.08);
                break;
            case 2:
                v = 2.0 * gauss_bump(t, 0.18, 0.05) - 1.5 * gauss_bump(t, 0.60, 0.10);
                break;
            case 3:
                v = -2.2 * gauss_bump(t, 0.35, 0.12) + 1.2 * gauss_bump(t, 0.70, 0.06);
                break;
            case 4:
                v = 1.8 * gauss_bump(t, 0.25, 0.04) + 1.6 * gauss_bump(t, 0.65, 0.04) - 0.5;
                break;
            default:
                v = 0.8 * std::sin(18.85 * t) * std::exp(-2.0 * t);
                break;
        }
        v = amp * v + 0.05 * (rng.uniform() - 0.5);
        b.samples[static_cast<std::size_t>(i)] = static_cast<float>(v);
        mean += v;
    }
    mean /= len;
    double var = 0.0;
    for (auto& s : b.samples) var += (s - mean) * (s - mean);
    var /= len;
    const double inv_std = 1.0 / std::sqrt(var + 1e-9);
    for (auto& s : b.samples) s = static_cast<float>((s - mean) * inv_std);
    return b;
}

/// counts[c] beats of class c+1, shuffled.
inline ecgtcn::Dataset synth_dataset(const std::vector<std::size_t>& counts, std::uint64_t seed,
                                     int len = 140) {
    ecgtcn::Rng rng(seed);
    ecgtcn::Dataset ds;
    for (std::size_t c = 0; c < counts.size(); ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            ds.beats.push_back(synth_beat(static_cast<int>(c) + 1, rng, len));
        }
    }
    rng.shuffle(ds.beats);
    return ds;
}

/// ECG5000-like class balance at a given total size.
inline ecgtcn::Dataset synth_ecg5000_like(std::size_t total, std::uint64_t seed) {
    const double frac[5] = {0.584, 0.354, 0.02, 0.038, 0.004};
    std::vector<std::size_t> counts(5);
    std::size_t used = 0;
    for (int c = 0; c < 4; ++c) {
        counts[static_cast<std::size_t>(c)] =
            std::max<std::size_t>(1, static_cast<std::size_t>(frac[c] * total));
        used += counts[static_cast<std::size_t>(c)];
    }
    counts[4] = total > used ? total - used : 1;
    return synth_dataset(counts, seed);
}

/// Writes a dataset in UCR text form (label first, comma separated).
inline std::string write_ucr_file(const ecgtcn::Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    for (const auto& b : ds.beats) {
        out << b.label;
        for (auto v : b.samples) out << ',' << v;
        out << '\n';
    }
    return path;
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    static std::mt19937_64 gen(std::random_device{}());
    const auto dir = std::filesystem::temp_directory_path() /
                     ("ecgtcn_" + tag + "_" + std::to_string(gen()));
    std::filesystem::create_directories(dir);
    return dir;
}

// --------------------------------------------------------------------------
// Oracles

/// Direct float convolution with an explicitly materialized zero pad.
inline std::vector<std::vector<double>> naive_conv1d(
    const std::vector<std::vector<double>>& x,
    const std::vector<std::vector<std::vector<double>>>& w,  // [out][in][k]
    const std::vector<double>& bias, int dilation) {
    const std::size_t out_ch = w.size();
    const std::size_t in_ch = w[0].size();
    const std::size_t K = w[0][0].size();
    const std::size_t T = x[0].size();
    const std::size_t pad = dilation * (K - 1);

    std::vector<std::vector<double>> xp(in_ch, std::vector<double>(T + pad, 0.0));
    for (std::size_t i = 0; i < in_ch; ++i) {
        for (std::size_t t = 0; t < T; ++t) xp[i][t + pad] = x[i][t];
    }
    std::vector<std::vector<double>> y(out_ch, std::vector<double>(T, 0.0));
    for (std::size_t c = 0; c < out_ch; ++c) {
        for (std::size_t t = 0; t < T; ++t) {
            double acc = bias[c];
            for (std::size_t i = 0; i < in_ch; ++i) {
                for (std::size_t k = 0; k < K; ++k) {
                    acc += w[c][i][k] * xp[i][t + k * dilation];
                }
            }
            y[c][t] = acc;
        }
    }
    return y;
}

/// Wide-integer quantized convolution oracle: materialized zero-point pad,
/// int64 accumulation, __int128 requantization.
inline std::vector<std::int8_t> naive_qconv(const std::vector<std::int8_t>& x, int in_ch, int T,
                                            const ecgtcn::QConv& layer) {
    const int K = layer.kernel_len;
    const int d = layer.dilation;
    const int pad = d * (K - 1);
    std::vector<std::int8_t> xp(static_cast<std::size_t>(in_ch) * (T + pad),
                                static_cast<std::int8_t>(layer.in_qp.zero_point));
    for (int i = 0; i < in_ch; ++i) {
        for (int t = 0; t < T; ++t) {
            xp[static_cast<std::size_t>(i) * (T + pad) + pad + t] =
                x[static_cast<std::size_t>(i) * T + t];
        }
    }
    std::vector<std::int8_t> y(static_cast<std::size_t>(layer.out_ch) * T);
    for (int c = 0; c < layer.out_ch; ++c) {
        for (int t = 0; t < T; ++t) {
            std::int64_t acc = layer.bias[static_cast<std::size_t>(c)];
            for (int i = 0; i < in_ch; ++i) {
                for (int k = 0; k < K; ++k) {
                    const std::int64_t wv = layer.weight(c, i, k);
                    const std::int64_t xv =
                        xp[static_cast<std::size_t>(i) * (T + pad) + t + k * d];
                    acc += wv * (xv - layer.in_qp.zero_point);
                }
            }
            __int128 v = static_cast<__int128>(acc) * layer.rq.mult +
                         (static_cast<__int128>(1) << (layer.rq.shift - 1));
            __int128 div = static_cast<__int128>(1) << layer.rq.shift;
            __int128 q = v >= 0 ? v / div : -(((-v) + div - 1) / div);  // floor
            q += layer.out_qp.zero_point;
            if (q < -128) q = -128;
            if (q > 127) q = 127;
            y[static_cast<std::size_t>(c) * T + t] = static_cast<std::int8_t>(q);
        }
    }
    return y;
}

inline std::vector<std::int8_t> random_i8(std::size_t n, ecgtcn::Rng& rng) {
    std::vector<std::int8_t> v(n);
    for (auto& x : v) x = static_cast<std::int8_t>(static_cast<int>(rng.bounded(256)) - 128);
    return v;
}

/// Random float net with non-trivial BN statistics, as after training.
inline ecgtcn::Network<float> random_trained_like(const ecgtcn::ArchConfig& cfg,
                                                  std::uint64_t seed) {
    ecgtcn::Network<float> net = ecgtcn::build_ecg_tcn<float>(cfg, seed);
    ecgtcn::Rng rng(seed ^ 0x77);
    for (auto& blk : net.blocks) {
        for (auto* bn : {&blk.bn1, &blk.bn2, &blk.skip_bn}) {
            if (!bn->has_value()) continue;
            auto& b = **bn;
            for (Eigen::Index c = 0; c < b.gamma.size(); ++c) {
                b.gamma[c] = static_cast<float>(rng.uniform(0.5, 1.5));
                b.beta[c] = static_cast<float>(rng.uniform(-0.3, 0.3));
                b.running_mean[c] = static_cast<float>(rng.uniform(-0.5, 0.5));
                b.running_var[c] = static_cast<float>(rng.uniform(0.25, 2.0));
            }
        }
    }
    return net;
}

/// Fold + calibrate (synthetic beats) + quantize, for engine-level tests.
inline ecgtcn::QNetwork make_random_qnet(const ecgtcn::ArchConfig& cfg, std::uint64_t seed) {
    const ecgtcn::Network<float> folded = ecgtcn::fold_batchnorm(random_trained_like(cfg, seed));
    const ecgtcn::Dataset calib = synth_ecg5000_like(25, seed ^ 0x9);
    return ecgtcn::quantize_network(folded, ecgtcn::calibrate(folded, calib));
}

/// Random but plausible quantized conv layer for kernel-level tests.
inline ecgtcn::QConv random_qconv(int in_ch, int out_ch, int K, int d, ecgtcn::Rng& rng) {
    ecgtcn::QConv c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel_len = K;
    c.dilation = d;
    c.w = random_i8(static_cast<std::size_t>(out_ch) * in_ch * K, rng);
    c.bias.resize(static_cast<std::size_t>(out_ch));
    for (auto& b : c.bias) b = static_cast<std::int32_t>(rng.bounded(20001)) - 10000;
    c.in_qp = {0.05f, static_cast<int>(rng.bounded(256)) - 128};
    c.out_qp = {0.08f, static_cast<int>(rng.bounded(256)) - 128};
    c.rq = ecgtcn::make_requant(rng.uniform(0.0005, 1.5));
    return c;
}

}  // namespace testutil

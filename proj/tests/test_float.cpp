#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ecgtcn/cost.hpp"
#include "ecgtcn/network.hpp"
#include "helpers.hpp"

using namespace ecgtcn;

TEST_CASE("receptive field formula") {
    CHECK(receptive_field(11, 3) == 141);  // covers the 140-sample input
    CHECK(receptive_field(1, 0) == 1);
    CHECK(receptive_field(1, 5) == 1);
    CHECK(receptive_field(2, 1) == 3);
    // cross-check by simulating tap reach for K=2, two blocks of two convs
    // with dilations 1 and 2: reach = 1 + (1+1) + (2+2) = 7
    CHECK(receptive_field(2, 2) == 7);
}

TEST_CASE("he_uniform_init bounds, mean, and determinism") {
    FeatureMap<double> w(100, 1000);
    {
        Rng rng(42);
        he_uniform_init<double>(w, 6, rng);
    }
    CHECK(w.maxCoeff() <= 1.0);
    CHECK(w.minCoeff() >= -1.0);
    // mean of 1e5 uniform samples in [-1,1]: sigma_mean = 1/sqrt(3*n)
    const double sigma_mean = 1.0 / std::sqrt(3.0 * w.size());
    CHECK(std::abs(w.mean()) <= 3.0 * sigma_mean);

    FeatureMap<double> w2(100, 1000);
    {
        Rng rng(42);
        he_uniform_init<double>(w2, 6, rng);
    }
    CHECK(w == w2);
}

TEST_CASE("conv1d_causal_dilated matches the spec example and the naive oracle") {
    SUBCASE("frozen example: K=2 d=2 w=[1,1]") {
        Conv1d<double> p;
        p.in_ch = 1;
        p.out_ch = 1;
        p.kernel_len = 2;
        p.dilation = 2;
        p.w.resize(1, 2);
        p.w << 1.0, 1.0;
        p.b = Vec<double>::Zero(1);
        FeatureMap<double> x(1, 4);
        x << 1, 2, 3, 4;
        const FeatureMap<double> y = conv1d_causal_dilated(x, p);
        CHECK(y(0, 0) == doctest::Approx(1));
        CHECK(y(0, 1) == doctest::Approx(2));
        CHECK(y(0, 2) == doctest::Approx(4));
        CHECK(y(0, 3) == doctest::Approx(6));
    }
    SUBCASE("K=1 is the identity for unit weight") {
        Conv1d<double> p;
        p.in_ch = p.out_ch = p.kernel_len = 1;
        p.dilation = 7;
        p.w = FeatureMap<double>::Ones(1, 1);
        p.b = Vec<double>::Zero(1);
        FeatureMap<double> x = FeatureMap<double>::Random(1, 9);
        CHECK(conv1d_causal_dilated(x, p) == x);
    }
    SUBCASE("all-zero input yields the bias") {
        Rng rng(3);
        Conv1d<double> p = make_conv1d<double>(2, 3, 5, 2, rng);
        p.b << 0.5, -1.0, 2.0;
        const FeatureMap<double> y =
            conv1d_causal_dilated(FeatureMap<double>(FeatureMap<double>::Zero(2, 8)), p);
        for (int t = 0; t < 8; ++t) {
            CHECK(y(0, t) == doctest::Approx(0.5));
            CHECK(y(1, t) == doctest::Approx(-1.0));
            CHECK(y(2, t) == doctest::Approx(2.0));
        }
    }
    SUBCASE("random layers agree with the brute-force oracle") {
        Rng rng(21);
        for (int trial = 0; trial < 20; ++trial) {
            const int in_ch = 1 + static_cast<int>(rng.bounded(3));
            const int out_ch = 1 + static_cast<int>(rng.bounded(4));
            const int K = 1 + static_cast<int>(rng.bounded(4));
            const int d = 1 + static_cast<int>(rng.bounded(4));
            const int T = 5 + static_cast<int>(rng.bounded(12));
            Conv1d<double> p = make_conv1d<double>(in_ch, out_ch, K, d, rng);
            for (int c = 0; c < out_ch; ++c) p.b[c] = rng.uniform(-1, 1);
            FeatureMap<double> x(in_ch, T);
            for (int i = 0; i < in_ch; ++i) {
                for (int t = 0; t < T; ++t) x(i, t) = rng.uniform(-2, 2);
            }

            std::vector<std::vector<std::vector<double>>> w(
                out_ch, std::vector<std::vector<double>>(in_ch, std::vector<double>(K)));
            std::vector<double> bias(out_ch);
            std::vector<std::vector<double>> xv(in_ch, std::vector<double>(T));
            for (int c = 0; c < out_ch; ++c) {
                bias[c] = p.b[c];
                for (int i = 0; i < in_ch; ++i) {
                    for (int k = 0; k < K; ++k) w[c][i][k] = p.weight(c, i, k);
                }
            }
            for (int i = 0; i < in_ch; ++i) {
                for (int t = 0; t < T; ++t) xv[i][t] = x(i, t);
            }

            const FeatureMap<double> y = conv1d_causal_dilated(x, p);
            const auto expect = testutil::naive_conv1d(xv, w, bias, d);
            for (int c = 0; c < out_ch; ++c) {
                for (int t = 0; t < T; ++t) {
                    CHECK(y(c, t) == doctest::Approx(expect[c][t]).epsilon(1e-12));
                }
            }
        }
    }
    SUBCASE("channel mismatch throws") {
        Rng rng(5);
        Conv1d<double> p = make_conv1d<double>(2, 3, 3, 1, rng);
        CHECK_THROWS_AS(conv1d_causal_dilated(FeatureMap<double>(FeatureMap<double>::Zero(3, 4)), p),
                        ShapeError);
    }
}

TEST_CASE("batchnorm forward") {
    SUBCASE("identity parameters in eval mode pass input through") {
        BatchNorm<double> bn = make_batchnorm<double>(3, 1e-5, 0.1);
        FeatureMap<double> x = FeatureMap<double>::Random(3, 7);
        const FeatureMap<double> y = batchnorm_eval(x, bn);
        CHECK((y - x).cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + x.cwiseAbs().maxCoeff()));
    }
    SUBCASE("train mode normalizes to beta/gamma moments") {
        BatchNorm<double> bn = make_batchnorm<double>(2, 1e-5, 0.1);
        bn.gamma << 2.0, 0.5;
        bn.beta << -1.0, 3.0;
        Rng rng(9);
        Batch<double> xs(4);
        for (auto& x : xs) {
            x.resize(2, 50);
            for (int c = 0; c < 2; ++c) {
                for (int t = 0; t < 50; ++t) x(c, t) = rng.uniform(-3, 5);
            }
        }
        Batch<double> ys;
        batchnorm_train(xs, ys, bn);

        for (int c = 0; c < 2; ++c) {
            double mean = 0.0, var = 0.0;
            const double n = 4 * 50;
            for (const auto& y : ys) mean += y.row(c).sum();
            mean /= n;
            for (const auto& y : ys) var += (y.row(c).array() - mean).square().sum();
            var /= n;
            CHECK(std::abs(mean - bn.beta[c]) <= 1e-5);
            CHECK(std::abs(var - bn.gamma[c] * bn.gamma[c]) <= 1e-4);
        }
    }
    SUBCASE("constant channel maps to beta") {
        BatchNorm<double> bn = make_batchnorm<double>(1, 1e-5, 0.1);
        bn.beta << 0.75;
        Batch<double> xs = {FeatureMap<double>::Constant(1, 20, 4.0)};
        Batch<double> ys;
        batchnorm_train(xs, ys, bn);
        CHECK((ys[0].array() - 0.75).abs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("dropout") {
    Rng rng(33);
    SUBCASE("p=0 mask is all ones") {
        const FeatureMap<double> m = dropout_mask<double>(10, 10, 0.0, rng);
        CHECK(m.minCoeff() == 1.0);
        CHECK(m.maxCoeff() == 1.0);
    }
    SUBCASE("zero fraction approaches p") {
        const FeatureMap<double> m = dropout_mask<double>(250, 400, 0.5, rng);
        const double zeros = static_cast<double>((m.array() == 0.0).count());
        CHECK(std::abs(zeros / static_cast<double>(m.size()) - 0.5) <= 0.01);
        // survivors carry the 1/(1-p) rescale
        CHECK(m.maxCoeff() == doctest::Approx(2.0));
    }
}

TEST_CASE("build_ecg_tcn structure and parameter count") {
    const ArchConfig cfg;
    auto net = build_ecg_tcn<float>(cfg, 1);

    REQUIRE(net.blocks.size() == 3);
    CHECK(net.entry.in_ch == 1);
    CHECK(net.entry.out_ch == 2);
    CHECK(net.entry.kernel_len == 1);
    CHECK(net.blocks[0].skip_conv.has_value());   // 2 -> 11 needs projection
    CHECK(net.blocks[0].skip_bn.has_value());
    CHECK(!net.blocks[1].skip_conv.has_value());  // 11 -> 11 identity skip
    CHECK(!net.blocks[2].skip_conv.has_value());
    CHECK(net.blocks[0].conv1.dilation == 1);
    CHECK(net.blocks[1].conv1.dilation == 2);
    CHECK(net.blocks[2].conv2.dilation == 4);
    CHECK(net.head.w.rows() == 5);
    CHECK(net.head.w.cols() == 11 * 140);

    const auto params = count_params(net);
    CHECK(params == 14859);  // exact count of the spec architecture
    CHECK(params == count_params_arch(cfg));
    CHECK(std::abs(static_cast<double>(params) - 14883.0) / 14883.0 <= 0.05);

    SUBCASE("degenerate depth: no blocks") {
        ArchConfig flat_cfg = cfg;
        flat_cfg.num_blocks = 0;
        auto tiny = build_ecg_tcn<float>(flat_cfg, 1);
        CHECK(tiny.blocks.empty());
        CHECK(tiny.head.w.cols() == 2 * 140);
    }
}

TEST_CASE("forward_eval properties") {
    const ArchConfig cfg;
    auto net = build_ecg_tcn<float>(cfg, 7);
    Rng rng(2);
    FeatureMap<float> x(1, 140);
    for (int t = 0; t < 140; ++t) x(0, t) = static_cast<float>(rng.uniform(-2, 2));

    SUBCASE("five logits whose softmax sums to one") {
        const Vec<float> logits = forward_eval(net, x);
        REQUIRE(logits.size() == 5);
        CHECK(softmax(logits).sum() == doctest::Approx(1.0).epsilon(1e-6));
    }
    SUBCASE("eval mode is bit-deterministic") {
        const Vec<float> a = forward_eval(net, x);
        const Vec<float> b = forward_eval(net, x);
        CHECK(a == b);
    }
    SUBCASE("matches a naive network oracle on a toy net") {
        // 3 "layers": entry conv + one projection block, dilations 1
        ArchConfig small;
        small.input_len = 12;
        small.entry_filters = 2;
        small.block_filters = 3;
        small.kernel_len = 3;
        small.num_blocks = 1;
        small.n_classes = 2;
        auto toy = build_ecg_tcn<double>(small, 3);
        FeatureMap<double> xin(1, 12);
        for (int t = 0; t < 12; ++t) xin(0, t) = rng.uniform(-1, 1);

        // independent path: naive convs + hand-applied bn/relu/add
        const auto to_nested = [](const Conv1d<double>& conv) {
            std::vector<std::vector<std::vector<double>>> w(
                conv.out_ch,
                std::vector<std::vector<double>>(conv.in_ch, std::vector<double>(conv.kernel_len)));
            for (int c = 0; c < conv.out_ch; ++c) {
                for (int i = 0; i < conv.in_ch; ++i) {
                    for (int k = 0; k < conv.kernel_len; ++k) w[c][i][k] = conv.weight(c, i, k);
                }
            }
            return w;
        };
        const auto to_vecs = [](const FeatureMap<double>& m) {
            std::vector<std::vector<double>> v(m.rows(), std::vector<double>(m.cols()));
            for (int r = 0; r < m.rows(); ++r) {
                for (int c = 0; c < m.cols(); ++c) v[r][c] = m(r, c);
            }
            return v;
        };
        const auto bias_of = [](const Conv1d<double>& conv) {
            return std::vector<double>(conv.b.data(), conv.b.data() + conv.b.size());
        };

        const auto& blk = toy.blocks[0];
        auto a = testutil::naive_conv1d(to_vecs(xin), to_nested(toy.entry), bias_of(toy.entry), 1);
        auto h = testutil::naive_conv1d(a, to_nested(blk.conv1), bias_of(blk.conv1), 1);
        const auto apply_bn = [](std::vector<std::vector<double>>& m, const BatchNorm<double>& bn) {
            for (std::size_t c = 0; c < m.size(); ++c) {
                const double inv = 1.0 / std::sqrt(bn.running_var[c] + bn.eps);
                for (auto& v : m[c]) v = bn.gamma[c] * (v - bn.running_mean[c]) * inv + bn.beta[c];
            }
        };
        apply_bn(h, *blk.bn1);
        for (auto& row : h) {
            for (auto& v : row) v = std::max(v, 0.0);
        }
        auto m2 = testutil::naive_conv1d(h, to_nested(blk.conv2), bias_of(blk.conv2), 1);
        apply_bn(m2, *blk.bn2);
        auto s = testutil::naive_conv1d(a, to_nested(*blk.skip_conv), bias_of(*blk.skip_conv), 1);
        apply_bn(s, *blk.skip_bn);
        std::vector<double> flat;
        for (std::size_t c = 0; c < m2.size(); ++c) {
            for (std::size_t t = 0; t < m2[c].size(); ++t) {
                flat.push_back(std::max(m2[c][t] + s[c][t], 0.0));
            }
        }
        std::vector<double> expect(2, 0.0);
        for (int o = 0; o < 2; ++o) {
            expect[o] = toy.head.b[o];
            for (std::size_t j = 0; j < flat.size(); ++j) expect[o] += toy.head.w(o, j) * flat[j];
        }

        const Vec<double> logits = forward_eval(toy, xin);
        for (int o = 0; o < 2; ++o) {
            CHECK(logits[o] == doctest::Approx(expect[o]).epsilon(1e-6));
        }
    }
}

TEST_CASE("causality and receptive-field reach") {
    const ArchConfig cfg;
    auto net = build_ecg_tcn<float>(cfg, 13);
    Rng rng(4);
    FeatureMap<float> x(1, 140);
    for (int t = 0; t < 140; ++t) x(0, t) = static_cast<float>(rng.uniform(-1, 1));
    const FeatureMap<float> base = forward_features(net, x);

    for (const int t0 : {0, 17, 70, 139}) {
        FeatureMap<float> xp = x;
        xp(0, t0) += 1.0f;
        const FeatureMap<float> pert = forward_features(net, xp);
        for (int t = 0; t < 140; ++t) {
            const bool changed = (pert.col(t) - base.col(t)).cwiseAbs().maxCoeff() > 0.0f;
            if (t < t0) CHECK_FALSE(changed);                    // causality
            if (changed) CHECK(t - t0 < receptive_field(11, 3)); // reach <= RFS
        }
    }
}

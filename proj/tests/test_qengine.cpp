#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <thread>

#include "ecgtcn/qengine.hpp"
#include "ecgtcn/quant.hpp"
#include "helpers.hpp"

using namespace ecgtcn;

TEST_CASE("requantize") {
    SUBCASE("zero accumulator maps to the zero point") {
        CHECK(requantize(0, Requant{1 << 30, 31}, 0) == 0);
        CHECK(requantize(0, Requant{1 << 30, 31}, -5) == -5);
    }
    SUBCASE("frozen integer example") {
        // floor((1000*2^30 + 2^32) / 2^33) = floor(125.5) = 125
        CHECK(requantize(1000, Requant{1 << 30, 33}, 0) == 125);
    }
    SUBCASE("saturates at the int8 rails") {
        CHECK(requantize(1000000, Requant{1 << 30, 30}, 0) == 127);
        CHECK(requantize(-1000000, Requant{1 << 30, 30}, 0) == -128);
    }
    SUBCASE("round-half-up acts toward +inf for negatives too") {
        // -3 * 0.5 = -1.5 rounds to -1
        CHECK(requantize(-3, Requant{1 << 30, 31}, 0) == -1);
        // -5 * 0.25 = -1.25 rounds to -1
        CHECK(requantize(-5, Requant{1 << 30, 32}, 0) == -1);
        // 3 * 0.5 = 1.5 rounds to 2
        CHECK(requantize(3, Requant{1 << 30, 31}, 0) == 2);
    }
}

TEST_CASE("causal_pad") {
    QFeatureMap x;
    x.channels = 2;
    x.length = 3;
    x.qp = {0.1f, -5};
    x.data = {1, 2, 3, 4, 5, 6};

    SUBCASE("amount zero is the identity") {
        const QFeatureMap y = causal_pad(x, 0);
        CHECK(y.data == x.data);
        CHECK(y.length == 3);
    }
    SUBCASE("pad columns carry the zero point") {
        const QFeatureMap y = causal_pad(x, 2);
        CHECK(y.length == 5);
        for (int c = 0; c < 2; ++c) {
            CHECK(y.at(c, 0) == -5);
            CHECK(y.at(c, 1) == -5);
            CHECK(y.at(c, 2) == x.at(c, 0));
        }
        // dequantized pad region is exactly real zero
        CHECK(dequantize_value(y.at(0, 0), y.qp) == 0.0f);
    }
}

TEST_CASE("qconv1d_dilated") {
    Rng rng(77);
    SUBCASE("one-hot kernel at the current tap with unit ratio is the identity") {
        QConv c;
        c.in_ch = 1;
        c.out_ch = 1;
        c.kernel_len = 3;
        c.dilation = 2;
        c.w = {0, 0, 1};  // tap K-1 reads x[t]
        c.bias = {0};
        c.in_qp = {0.5f, 0};
        c.out_qp = {0.5f, 0};
        c.rq = make_requant(1.0);
        QFeatureMap x;
        x.channels = 1;
        x.length = 10;
        x.qp = c.in_qp;
        x.data = testutil::random_i8(10, rng);
        const QFeatureMap y = qconv1d_dilated(x, c);
        CHECK(y.data == x.data);
    }
    SUBCASE("random layers match the wide-integer oracle bit-exactly") {
        for (int trial = 0; trial < 40; ++trial) {
            const int in_ch = 1 + static_cast<int>(rng.bounded(3));
            const int out_ch = 1 + static_cast<int>(rng.bounded(3));
            const int K = 1 + static_cast<int>(rng.bounded(4));
            const int d = 1 + static_cast<int>(rng.bounded(4));
            const int T = 4 + static_cast<int>(rng.bounded(10));
            const QConv layer = testutil::random_qconv(in_ch, out_ch, K, d, rng);
            QFeatureMap x;
            x.channels = in_ch;
            x.length = T;
            x.qp = layer.in_qp;
            x.data = testutil::random_i8(static_cast<std::size_t>(in_ch) * T, rng);

            const QFeatureMap y = qconv1d_dilated(x, layer);
            const auto expect = testutil::naive_qconv(x.data, in_ch, T, layer);
            CHECK(y.data == expect);
        }
    }
    SUBCASE("block-3 style conv reaches exactly {t, t-4, ..., t-40}") {
        const QConv layer = testutil::random_qconv(1, 1, 11, 4, rng);
        QFeatureMap x;
        x.channels = 1;
        x.length = 100;
        x.qp = layer.in_qp;
        x.data = testutil::random_i8(100, rng);
        const QFeatureMap base = qconv1d_dilated(x, layer);

        const int t_out = 80;
        for (int t0 = 0; t0 < 100; ++t0) {
            QFeatureMap xp = x;
            xp.data[static_cast<std::size_t>(t0)] =
                static_cast<std::int8_t>(xp.data[static_cast<std::size_t>(t0)] == 127 ? -128
                                                                                       : 127);
            const QFeatureMap pert = qconv1d_dilated(xp, layer);
            const bool in_taps = t0 <= t_out && (t_out - t0) % 4 == 0 && t_out - t0 <= 40;
            if (!in_taps) {
                CHECK(pert.at(0, t_out) == base.at(0, t_out));
            }
        }
    }
    SUBCASE("channel mismatch throws") {
        const QConv layer = testutil::random_qconv(2, 1, 3, 1, rng);
        QFeatureMap x;
        x.channels = 1;
        x.length = 5;
        x.data.assign(5, 0);
        CHECK_THROWS_AS(qconv1d_dilated(x, layer), ShapeError);
    }
}

TEST_CASE("zero_stuff") {
    Rng rng(13);
    SUBCASE("d=1 leaves the kernel unchanged") {
        const QConv layer = testutil::random_qconv(2, 2, 5, 1, rng);
        const QConv s = zero_stuff(layer);
        CHECK(s.w == layer.w);
        CHECK(s.kernel_len == 5);
    }
    SUBCASE("K=2 d=2 [w0,w1] becomes [w0,0,w1]") {
        QConv layer = testutil::random_qconv(1, 1, 2, 2, rng);
        layer.w = {5, -7};
        const QConv s = zero_stuff(layer);
        CHECK(s.kernel_len == 3);
        CHECK(s.dilation == 1);
        CHECK(s.w == std::vector<std::int8_t>{5, 0, -7});
    }
    SUBCASE("native and stuffed execution are bit-identical") {
        for (int trial = 0; trial < 30; ++trial) {
            const int in_ch = 1 + static_cast<int>(rng.bounded(3));
            const int out_ch = 1 + static_cast<int>(rng.bounded(3));
            const int K = 2 + static_cast<int>(rng.bounded(3));
            const int d = 2 + static_cast<int>(rng.bounded(3));
            const int T = 6 + static_cast<int>(rng.bounded(20));
            const QConv layer = testutil::random_qconv(in_ch, out_ch, K, d, rng);
            const QConv stuffed = zero_stuff(layer);
            QFeatureMap x;
            x.channels = in_ch;
            x.length = T;
            x.qp = layer.in_qp;
            x.data = testutil::random_i8(static_cast<std::size_t>(in_ch) * T, rng);
            CHECK(qconv1d_dilated(x, layer).data == qconv1d_dilated(x, stuffed).data);
        }
    }
}

TEST_CASE("qresidual_add") {
    Rng rng(3);
    QFeatureMap a, b;
    a.channels = b.channels = 1;
    a.length = b.length = 64;
    a.qp = {0.1f, 10};
    b.qp = {0.2f, -20};
    a.data = testutil::random_i8(64, rng);
    b.data = testutil::random_i8(64, rng);
    const QuantParams out{0.15f, 5};
    const Requant ra = make_requant(a.qp.scale / out.scale);
    const Requant rb = make_requant(b.qp.scale / out.scale);

    SUBCASE("neutral second branch leaves a rescaled first branch") {
        QFeatureMap zb = b;
        zb.data.assign(zb.data.size(), static_cast<std::int8_t>(zb.qp.zero_point));
        const QFeatureMap y = qresidual_add(a, zb, ra, rb, out);
        for (int t = 0; t < 64; ++t) {
            const double real = a.qp.scale * (a.data[t] - a.qp.zero_point);
            const double expect = real / out.scale + out.zero_point;
            CHECK(std::abs(y.data[t] - expect) <= 1.0 + 1e-6);  // within one LSB
        }
    }
    SUBCASE("a + a with half ratios reproduces a within one LSB") {
        QFeatureMap a2 = a;
        const Requant half = make_requant(0.5);
        const QFeatureMap y = qresidual_add(a, a2, half, half, a.qp);
        for (int t = 0; t < 64; ++t) {
            CHECK(std::abs(static_cast<int>(y.data[t]) - static_cast<int>(a.data[t])) <= 1);
        }
    }
    SUBCASE("all-zero-point inputs give an all-zero-point output") {
        QFeatureMap za = a, zb = b;
        za.data.assign(za.data.size(), static_cast<std::int8_t>(a.qp.zero_point));
        zb.data.assign(zb.data.size(), static_cast<std::int8_t>(b.qp.zero_point));
        const QFeatureMap y = qresidual_add(za, zb, ra, rb, out);
        for (auto v : y.data) CHECK(v == out.zero_point);
    }
    SUBCASE("shape mismatch throws") {
        QFeatureMap small;
        small.channels = 1;
        small.length = 3;
        small.data.assign(3, 0);
        CHECK_THROWS_AS(qresidual_add(a, small, ra, rb, out), ShapeError);
    }
}

TEST_CASE("argmax breaks ties toward the lowest class index") {
    CHECK(argmax_class({5, 7, 7, 7, 1}) == 2);
    CHECK(argmax_class({-3, -3}) == 1);
    CHECK(argmax_class({0}) == 1);
}

TEST_CASE("qpredict is deterministic, including under concurrent callers") {
    const ArchConfig cfg;
    const QNetwork q = testutil::make_random_qnet(cfg, 123);
    Rng rng(1);
    const Beat beat = testutil::synth_beat(2, rng);
    const QPrediction ref = qpredict(q, beat);
    CHECK(qpredict(q, beat).logits == ref.logits);

    std::vector<std::vector<std::int32_t>> results(8);
    std::vector<std::thread> pool;
    for (int w = 0; w < 8; ++w) {
        pool.emplace_back([&, w] { results[static_cast<std::size_t>(w)] = qpredict(q, beat).logits; });
    }
    for (auto& t : pool) t.join();
    for (const auto& r : results) CHECK(r == ref.logits);
}

TEST_CASE("qrelu clamps at the zero point") {
    QFeatureMap x;
    x.channels = 1;
    x.length = 4;
    x.qp = {0.25f, 0};
    x.data = {-3, 5, 0, -128};
    const QFeatureMap y = qrelu(x);
    CHECK(y.data == std::vector<std::int8_t>{0, 5, 0, 0});

    x.qp.zero_point = -128;  // nothing below the rail: identity
    x.data = {-3, 5, 0, -128};
    CHECK(qrelu(x).data == x.data);

    // dequantized outputs sit at or above -scale/2 (here exactly >= 0)
    for (auto v : qrelu(x).data) {
        CHECK(dequantize_value(v, x.qp) >= -x.qp.scale / 2);
    }
}

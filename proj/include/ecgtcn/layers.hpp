#pragma once

#include <optional>
#include <utility>

#include "ecgtcn/errors.hpp"
#include "ecgtcn/tensor.hpp"

namespace ecgtcn {

// Weight layout: w is (out_ch) x (kernel_len * in_ch); the block of columns
// [k*in_ch, (k+1)*in_ch) holds tap k, so one tap application is a single
// matrix product against a column window of the padded input.
template <typename S>
struct Conv1d {
    int in_ch = 0;
    int out_ch = 0;
    int kernel_len = 1;
    int dilation = 1;
    FeatureMap<S> w;
    Vec<S> b;

    int pad() const { return dilation * (kernel_len - 1); }
    S weight(int c, int i, int k) const { return w(c, k * in_ch + i); }
    S& weight(int c, int i, int k) { return w(c, k * in_ch + i); }
};

template <typename S>
Conv1d<S> make_conv1d(int in_ch, int out_ch, int kernel_len, int dilation, Rng& rng) {
    Conv1d<S> c;
    c.in_ch = in_ch;
    c.out_ch = out_ch;
    c.kernel_len = kernel_len;
    c.dilation = dilation;
    c.w.resize(out_ch, kernel_len * in_ch);
    he_uniform_init<S>(c.w, in_ch * kernel_len, rng);
    c.b = Vec<S>::Zero(out_ch);
    return c;
}

template <typename S>
FeatureMap<S> pad_causal(const FeatureMap<S>& x, int amount) {
    FeatureMap<S> xp = FeatureMap<S>::Zero(x.rows(), x.cols() + amount);
    xp.rightCols(x.cols()) = x;
    return xp;
}

/// y[c][t] = b[c] + sum_{i,k} w[c][i][k] * xpad[i][t + k*d], output length
/// equals input length; output at t never reads inputs past t.
template <typename S>
FeatureMap<S> conv1d_causal_dilated(const FeatureMap<S>& x, const Conv1d<S>& p) {
    if (x.rows() != p.in_ch) {
        throw ShapeError("conv1d: input has " + std::to_string(x.rows()) +
                         " channels, layer expects " + std::to_string(p.in_ch));
    }
    const Eigen::Index T = x.cols();
    const FeatureMap<S> xp = pad_causal(x, p.pad());
    FeatureMap<S> y = p.b.replicate(1, T);
    for (int k = 0; k < p.kernel_len; ++k) {
        y.noalias() += p.w.middleCols(k * p.in_ch, p.in_ch) * xp.middleCols(k * p.dilation, T);
    }
    return y;
}

/// Accumulates dW/db and returns dx for one item.
template <typename S>
FeatureMap<S> conv1d_backward(const FeatureMap<S>& x, const Conv1d<S>& p,
                              const FeatureMap<S>& dy, Conv1d<S>& grad) {
    const Eigen::Index T = x.cols();
    const FeatureMap<S> xp = pad_causal(x, p.pad());
    FeatureMap<S> dxp = FeatureMap<S>::Zero(p.in_ch, T + p.pad());
    grad.b += dy.rowwise().sum();
    for (int k = 0; k < p.kernel_len; ++k) {
        grad.w.middleCols(k * p.in_ch, p.in_ch).noalias() +=
            dy * xp.middleCols(k * p.dilation, T).transpose();
        dxp.middleCols(k * p.dilation, T).noalias() +=
            p.w.middleCols(k * p.in_ch, p.in_ch).transpose() * dy;
    }
    return dxp.rightCols(T);
}

template <typename S>
struct BatchNorm {
    Vec<S> gamma, beta, running_mean, running_var;
    S eps = static_cast<S>(1e-5);
    S momentum = static_cast<S>(0.1);
};

template <typename S>
BatchNorm<S> make_batchnorm(int channels, S eps, S momentum) {
    BatchNorm<S> bn;
    bn.gamma = Vec<S>::Ones(channels);
    bn.beta = Vec<S>::Zero(channels);
    bn.running_mean = Vec<S>::Zero(channels);
    bn.running_var = Vec<S>::Ones(channels);
    bn.eps = eps;
    bn.momentum = momentum;
    return bn;
}

template <typename S>
struct BNStats {
    Vec<S> mean, inv_std;
};

template <typename S>
FeatureMap<S> batchnorm_eval(const FeatureMap<S>& x, const BatchNorm<S>& p) {
    if (x.rows() != p.gamma.size()) throw ShapeError("batchnorm: channel mismatch");
    const Vec<S> inv_std = (p.running_var.array() + p.eps).rsqrt();
    FeatureMap<S> y = ((x.colwise() - p.running_mean).array().colwise() *
                       (p.gamma.array() * inv_std.array()))
                          .matrix();
    y.colwise() += p.beta;
    return y;
}

/// Normalizes with batch statistics over (batch x time) per channel and
/// updates running stats; returns the stats needed for the backward pass.
template <typename S>
BNStats<S> batchnorm_train(const Batch<S>& xs, Batch<S>& ys, BatchNorm<S>& p) {
    const Eigen::Index C = xs.front().rows();
    if (C != p.gamma.size()) throw ShapeError("batchnorm: channel mismatch");
    Eigen::Index n = 0;
    Vec<S> mean = Vec<S>::Zero(C);
    for (const auto& x : xs) {
        mean += x.rowwise().sum();
        n += x.cols();
    }
    mean /= static_cast<S>(n);
    Vec<S> var = Vec<S>::Zero(C);
    for (const auto& x : xs) {
        var += (x.colwise() - mean).array().square().matrix().rowwise().sum();
    }
    var /= static_cast<S>(n);

    BNStats<S> st;
    st.mean = mean;
    st.inv_std = (var.array() + p.eps).rsqrt();

    ys.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        ys[i] = ((xs[i].colwise() - mean).array().colwise() *
                 (p.gamma.array() * st.inv_std.array()))
                    .matrix();
        ys[i].colwise() += p.beta;
    }

    const S unbias = n > 1 ? static_cast<S>(n) / static_cast<S>(n - 1) : S(1);
    p.running_mean = (S(1) - p.momentum) * p.running_mean + p.momentum * mean;
    p.running_var = (S(1) - p.momentum) * p.running_var + p.momentum * (unbias * var);
    return st;
}

/// Standard batchnorm backward through the batch statistics.
template <typename S>
void batchnorm_backward(const Batch<S>& xs, const BNStats<S>& st, const BatchNorm<S>& p,
                        const Batch<S>& dys, Batch<S>& dxs, Vec<S>& dgamma, Vec<S>& dbeta) {
    const Eigen::Index C = xs.front().rows();
    Eigen::Index n = 0;
    Vec<S> sum_dy = Vec<S>::Zero(C);
    Vec<S> sum_dy_xhat = Vec<S>::Zero(C);
    std::vector<FeatureMap<S>> xhats(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        xhats[i] = ((xs[i].colwise() - st.mean).array().colwise() * st.inv_std.array()).matrix();
        sum_dy += dys[i].rowwise().sum();
        sum_dy_xhat += (dys[i].array() * xhats[i].array()).matrix().rowwise().sum();
        n += xs[i].cols();
    }
    dgamma += sum_dy_xhat;
    dbeta += sum_dy;

    const Vec<S> mean_dy = sum_dy / static_cast<S>(n);
    const Vec<S> mean_dy_xhat = sum_dy_xhat / static_cast<S>(n);
    const Vec<S> scale = (p.gamma.array() * st.inv_std.array()).matrix();
    dxs.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        dxs[i] = (((dys[i].colwise() - mean_dy).array() -
                   (xhats[i].array().colwise() * mean_dy_xhat.array()))
                      .colwise() *
                  scale.array())
                     .matrix();
    }
}

template <typename S>
FeatureMap<S> relu(const FeatureMap<S>& x) {
    return x.cwiseMax(S(0));
}

/// Train mode zeroes each element with probability p and rescales survivors
/// by 1/(1-p); the returned mask already carries the rescale factor.
template <typename S>
FeatureMap<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, S p, Rng& rng) {
    const S keep_scale = S(1) / (S(1) - p);
    FeatureMap<S> mask(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) {
            mask(r, c) = rng.uniform() < static_cast<double>(p) ? S(0) : keep_scale;
        }
    }
    return mask;
}

template <typename S>
struct Dense {
    FeatureMap<S> w;  // (out) x (in)
    Vec<S> b;
};

template <typename S>
Dense<S> make_dense(int in_n, int out_n, Rng& rng) {
    Dense<S> d;
    d.w.resize(out_n, in_n);
    he_uniform_init<S>(d.w, in_n, rng);
    d.b = Vec<S>::Zero(out_n);
    return d;
}

/// Channel-major flatten: element (c, t) lands at index c*T + t.
template <typename S>
Vec<S> flatten_channel_major(const FeatureMap<S>& x) {
    Vec<S> out(x.size());
    const Eigen::Index T = x.cols();
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
        for (Eigen::Index t = 0; t < T; ++t) out[c * T + t] = x(c, t);
    }
    return out;
}

template <typename S>
FeatureMap<S> unflatten_channel_major(const Vec<S>& v, Eigen::Index channels, Eigen::Index T) {
    FeatureMap<S> out(channels, T);
    for (Eigen::Index c = 0; c < channels; ++c) {
        for (Eigen::Index t = 0; t < T; ++t) out(c, t) = v[c * T + t];
    }
    return out;
}

}  // namespace ecgtcn

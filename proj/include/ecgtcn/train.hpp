#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "ecgtcn/dataset.hpp"
#include "ecgtcn/metrics.hpp"
#include "ecgtcn/network.hpp"

namespace ecgtcn {

struct TrainConfig {
    int batch_size = 30;
    double lr = 0.001;
    int epochs = 20;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
};

template <typename S>
struct AdamState {
    Network<S> m;
    Network<S> v;
    long step = 0;
};

template <typename S>
AdamState<S> make_adam_state(const Network<S>& net) {
    return AdamState<S>{zeros_like(net), zeros_like(net), 0};
}

/// One Adam update with bias correction over every learnable tensor.
template <typename S>
void adam_step(Network<S>& net, Network<S>& grads, AdamState<S>& state, const TrainConfig& cfg) {
    state.step += 1;
    const S b1 = static_cast<S>(cfg.beta1);
    const S b2 = static_cast<S>(cfg.beta2);
    const S eps = static_cast<S>(cfg.adam_eps);
    const S corr1 = S(1) - static_cast<S>(std::pow(cfg.beta1, static_cast<double>(state.step)));
    const S corr2 = S(1) - static_cast<S>(std::pow(cfg.beta2, static_cast<double>(state.step)));
    const S lr = static_cast<S>(cfg.lr);

    std::vector<S*> ps, gs, ms, vs;
    std::vector<std::size_t> ns;
    visit_params(net, [&](const std::string&, auto& t) {
        ps.push_back(t.data());
        ns.push_back(static_cast<std::size_t>(t.size()));
    });
    visit_params(grads, [&](const std::string&, auto& t) { gs.push_back(t.data()); });
    visit_params(state.m, [&](const std::string&, auto& t) { ms.push_back(t.data()); });
    visit_params(state.v, [&](const std::string&, auto& t) { vs.push_back(t.data()); });

    for (std::size_t ti = 0; ti < ps.size(); ++ti) {
        S* p = ps[ti];
        S* g = gs[ti];
        S* m = ms[ti];
        S* v = vs[ti];
        for (std::size_t j = 0; j < ns[ti]; ++j) {
            m[j] = b1 * m[j] + (S(1) - b1) * g[j];
            v[j] = b2 * v[j] + (S(1) - b2) * g[j] * g[j];
            const S mhat = m[j] / corr1;
            const S vhat = v[j] / corr2;
            p[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double val_accuracy = 0.0;
};

template <typename S>
struct TrainResult {
    Network<S> net;  // snapshot of the best-validation epoch
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
};

template <typename S>
FeatureMap<S> beat_to_map(const Beat& b) {
    FeatureMap<S> x(1, static_cast<Eigen::Index>(b.samples.size()));
    for (std::size_t t = 0; t < b.samples.size(); ++t) x(0, t) = static_cast<S>(b.samples[t]);
    return x;
}

template <typename S>
int predict_class(const Network<S>& net, const Beat& b) {
    const Vec<S> logits = forward_eval(net, beat_to_map<S>(b));
    Eigen::Index best = 0;
    logits.maxCoeff(&best);  // Eigen picks the first maximum: lowest index on ties
    return static_cast<int>(best) + 1;
}

/// Full-dataset confusion matrix. With jobs > 1 the beats are scored in
/// parallel; predictions land in a per-index slot so the result is identical
/// to the serial run.
template <typename S>
ConfusionMatrix evaluate(const Network<S>& net, const Dataset& ds, int jobs = 1) {
    std::vector<int> preds(ds.size());
    std::vector<int> labels(ds.size());
    const auto score_range = [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            preds[i] = predict_class(net, ds.beats[i]);
            labels[i] = ds.beats[i].label;
        }
    };
    if (jobs <= 1 || ds.size() < 2) {
        score_range(0, ds.size());
    } else {
        const std::size_t n = ds.size();
        const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            if (lo >= hi) break;
            pool.emplace_back(score_range, lo, hi);
        }
        for (auto& t : pool) t.join();
    }
    return confusion(preds, labels, ds.class_count);
}

template <typename S>
double eval_accuracy(const Network<S>& net, const Dataset& ds) {
    return accuracy(evaluate(net, ds));
}

/// Shuffled minibatch Adam training with per-epoch validation; returns the
/// snapshot with the best validation accuracy (earliest epoch on ties).
template <typename S>
TrainResult<S> train(Network<S> net, const Dataset& train_ds, const Dataset& val_ds,
                     const TrainConfig& cfg,
                     const std::function<void(const EpochStats&)>& on_epoch = {}) {
    if (train_ds.empty() || val_ds.empty()) throw UsageError("train: empty dataset");

    TrainResult<S> result;
    result.net = net;
    result.best_val_accuracy = -1.0;
    if (cfg.epochs == 0) {
        result.best_val_accuracy = 0.0;
        return result;
    }

    Rng rng(cfg.seed);
    Rng dropout_rng = rng.split();
    AdamState<S> state = make_adam_state(net);
    Network<S> grads = zeros_like(net);

    std::vector<std::size_t> order(train_ds.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    ForwardCache<S> cache;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        rng.shuffle(order);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            Batch<S> xs;
            std::vector<int> labels;
            xs.reserve(end - start);
            labels.reserve(end - start);
            for (std::size_t i = start; i < end; ++i) {
                xs.push_back(beat_to_map<S>(train_ds.beats[order[i]]));
                labels.push_back(train_ds.beats[order[i]].label);
            }

            forward_train(net, xs, dropout_rng, cache);
            const S loss = cross_entropy(cache.logits, labels);
            if (!std::isfinite(static_cast<double>(loss))) {
                throw DivergedError("training diverged at epoch " + std::to_string(epoch + 1) +
                                    ", batch " + std::to_string(batches + 1));
            }
            loss_sum += static_cast<double>(loss);
            ++batches;

            visit_params(grads, [](const std::string&, auto& t) { t.setZero(); });
            backward(net, cache, labels, grads);
            adam_step(net, grads, state, cfg);
        }

        EpochStats st;
        st.epoch = epoch + 1;
        st.mean_loss = loss_sum / static_cast<double>(batches);
        st.val_accuracy = eval_accuracy(net, val_ds);
        result.history.push_back(st);
        if (on_epoch) on_epoch(st);

        if (st.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = st.val_accuracy;
            result.best_epoch = st.epoch;
            result.net = net;
        }
    }
    return result;
}

}  // namespace ecgtcn

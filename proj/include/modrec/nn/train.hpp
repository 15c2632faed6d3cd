// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <algorithm>
#include <tuple>
#include <string>
#include <vector>

#include "modrec/error.hpp"
#include "modrec/nn/network.hpp"
#include "modrec/rng.hpp"

namespace modrec::nn {

struct TrainConfig {
    std::size_t batch_size = 1024;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t max_epochs = 60;
    /// Stop after this many epochs without a new best validation loss (0 = never).
    std::size_t patience = 0;
    SeedSpec seed{1, 0};

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(learning_rate > 0.0) || !(epsilon > 0.0)) throw ConfigError("learning rate and epsilon must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("Adam betas must be in [0, 1)");
        if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    }
};

/// Adam moments for one parameter tensor.
template <typename T>
struct AdamSlot {
    std::vector<T> m, v;
};

/// One bias-corrected Adam update at timestep t >= 1.
template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamSlot<T>& slot, std::size_t t, const TrainConfig& cfg) {
    if (slot.m.size() != param.size()) {
        slot.m.assign(param.size(), T(0));
        slot.v.assign(param.size(), T(0));
    }
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    const T step = static_cast<T>(cfg.learning_rate / c1);
    const T inv_c2 = static_cast<T>(1.0 / c2);
    const T eps = static_cast<T>(cfg.epsilon);
    for (std::size_t i = 0; i < param.size(); ++i) {
        const T g = grad[i];
        slot.m[i] = b1 * slot.m[i] + (T(1) - b1) * g;
        slot.v[i] = b2 * slot.v[i] + (T(1) - b2) * g * g;
        param[i] -= step * slot.m[i] / (std::sqrt(slot.v[i] * inv_c2) + eps);
    }
}

struct EpochStats {
    std::size_t epoch = 0;  ///< 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

struct History {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;  ///< 1-based index of the kept weights

    /// epoch,train_loss,val_loss,train_acc,val_acc with fixed formatting.
    std::string csv() const {
        std::string out = "epoch,train_loss,val_loss,train_acc,val_acc\n";
        char buf[160];
        for (const auto& e : epochs) {
            std::snprintf(buf, sizeof buf, "%zu,%.9f,%.9f,%.6f,%.6f\n", e.epoch, e.train_loss, e.val_loss,
                          e.train_acc, e.val_acc);
            out += buf;
        }
        return out;
    }
};

/// Class probabilities in double precision; dropout off.
template <typename T>
Eigen::MatrixXd predict(Network<T>& net, const Tensor<T>& x, std::size_t batch = 256) {
    net.check_input(x);
    const std::size_t k = net.num_classes_out();
    Eigen::MatrixXd probs(static_cast<Eigen::Index>(x.batch()), static_cast<Eigen::Index>(k));
    for (std::size_t lo = 0; lo < x.batch(); lo += batch) {
        const std::size_t n = std::min(batch, x.batch() - lo);
        const Tensor<T> z = net.logits(x.slice(lo, n), false);
        for (std::size_t i = 0; i < n; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < k; ++c) mx = std::max(mx, static_cast<double>(z[i * k + c]));
            double s = 0.0;
            for (std::size_t c = 0; c < k; ++c) {
                const double e = std::exp(static_cast<double>(z[i * k + c]) - mx);
                probs(static_cast<Eigen::Index>(lo + i), static_cast<Eigen::Index>(c)) = e;
                s += e;
            }
            probs.row(static_cast<Eigen::Index>(lo + i)) /= s;
        }
    }
    return probs;
}

inline std::vector<int> argmax_rows(const Eigen::MatrixXd& probs) {
    std::vector<int> out(static_cast<std::size_t>(probs.rows()));
    for (Eigen::Index i = 0; i < probs.rows(); ++i) {
        Eigen::Index c = 0;
        probs.row(i).maxCoeff(&c);
        out[static_cast<std::size_t>(i)] = static_cast<int>(c);
    }
    return out;
}

/// Mean cross-entropy and accuracy of probability rows.
inline std::pair<double, double> score(const Eigen::MatrixXd& probs, std::span<const int> labels) {
    double ce = 0.0;
    std::size_t hit = 0;
    const std::vector<int> pred = argmax_rows(probs);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        ce -= std::log(std::max(probs(static_cast<Eigen::Index>(i), labels[i]), 1e-300));
        hit += pred[i] == labels[i];
    }
    const auto n = static_cast<double>(labels.size());
    return {ce / n, static_cast<double>(hit) / n};
}

/// Mini-batch Adam with a seeded per-epoch shuffle. The returned network holds
/// the weights of the epoch with the lowest validation loss.
template <typename T>
History train(Network<T>& net, const Tensor<T>& x_train, std::span<const int> y_train, const Tensor<T>& x_val,
              std::span<const int> y_val, const TrainConfig& cfg,
              const std::function<void(const EpochStats&, bool improved)>& on_epoch = {}) {
    cfg.validate();
    net.check_input(x_train);
    net.check_input(x_val);
    if (x_train.batch() != y_train.size() || x_val.batch() != y_val.size())
        throw Error("inputs and labels differ in length");
    if (x_train.batch() == 0 || x_val.batch() == 0) throw Error("training and validation sets must be non-empty");

    Rng shuffle(cfg.seed.derive(stream::shuffle));
    std::vector<std::size_t> order(x_train.batch());
    std::iota(order.begin(), order.end(), 0);
    std::vector<AdamSlot<T>> slots(net.params().size());
    std::size_t step = 0;

    History h;
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::vector<T>> best_weights = net.weights();
    std::vector<int> yb;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        shuffle.shuffle(std::span(order));
        double loss_sum = 0.0;
        std::size_t hit = 0;
        std::size_t batch_index = 0;
        for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size, ++batch_index) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - lo);
            const std::span<const std::size_t> rows(order.data() + lo, n);
            const Tensor<T> xb = x_train.gather(rows);
            yb.resize(n);
            for (std::size_t i = 0; i < n; ++i) yb[i] = y_train[rows[i]];
            const double l = net.compute_gradients(xb, yb, true);
            if (!std::isfinite(l))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(batch_index) + "; first non-finite value in " +
                                   net.diagnose(xb, false));
            loss_sum += l * static_cast<double>(n);
            const Tensor<T>& p = net.last_probs();
            const std::size_t k = p.per_sample();
            for (std::size_t i = 0; i < n; ++i) {
                const T* row = p.data() + i * k;
                hit += static_cast<int>(std::max_element(row, row + k) - row) == yb[i];
            }
            ++step;
            auto ps = net.params();
            for (std::size_t j = 0; j < ps.size(); ++j)
                adam_step<T>(ps[j].value->values(), ps[j].grad->values(), slots[j], step, cfg);
        }

        EpochStats e;
        e.epoch = epoch;
        e.train_loss = loss_sum / static_cast<double>(order.size());
        e.train_acc = static_cast<double>(hit) / static_cast<double>(order.size());
        std::tie(e.val_loss, e.val_acc) = score(predict(net, x_val), y_val);
        if (!std::isfinite(e.val_loss))
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch) + "; first non-finite value in " +
                               net.diagnose(x_val.slice(0, std::min<std::size_t>(x_val.batch(), 256)), false));
        e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool improved = e.val_loss < best;
        if (improved) {
            best = e.val_loss;
            h.best_epoch = epoch;
            best_weights = net.weights();
        }
        h.epochs.push_back(e);
        if (on_epoch) on_epoch(e, improved);
        if (cfg.patience > 0 && epoch - h.best_epoch >= cfg.patience) break;
    }
    net.set_weights(best_weights);
    return h;
}

} // namespace modrec::nn

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "modrec/dataset.hpp"
#include "modrec/expertfeat.hpp"
#include "modrec/nn/layers.hpp"
#include "modrec/nn/network.hpp"
#include "modrec/nn/tensor.hpp"
#include "modrec/nn/train.hpp"

namespace modrec::nn {

/// Frames as a (N, 1, 2, 128) tensor: row 0 holds I, row 1 holds Q.
template <typename T>
Tensor<T> frames_tensor(const Dataset& ds) {
    Tensor<T> x({ds.size(), 1, 2, IqFrame::length});
    for (std::size_t n = 0; n < ds.size(); ++n)
        for (std::size_t t = 0; t < IqFrame::length; ++t) {
            const Cpx z = ds.frames[n].frame[t];
            x.at(n, 0, 0, t) = static_cast<T>(z.real());
            x.at(n, 0, 1, t) = static_cast<T>(z.imag());
        }
    return x;
}

/// Feature rows as a (N, 1, 1, D) tensor.
template <typename T>
Tensor<T> features_tensor(const FeatureMatrix& f) {
    Tensor<T> x({static_cast<std::size_t>(f.rows()), 1, 1, static_cast<std::size_t>(f.cols())});
    for (Eigen::Index i = 0; i < f.size(); ++i) x[static_cast<std::size_t>(i)] = static_cast<T>(f.data()[i]);
    return x;
}

inline std::vector<int> dataset_labels(const Dataset& ds) {
    std::vector<int> y(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) y[i] = static_cast<int>(class_id(ds.frames[i].cls));
    return y;
}

} // namespace modrec::nn

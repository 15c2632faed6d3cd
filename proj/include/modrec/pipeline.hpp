// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>
#include <numeric>
#include <variant>

#include "modrec/baselines.hpp"
#include "modrec/config.hpp"
#include "modrec/dataset.hpp"
#include "modrec/expertfeat.hpp"
#include "modrec/neuralnet.hpp"

namespace modrec {

/// Network over standardized expert features, stored with its standardizer.
struct FeatureNet {
    Standardizer scaler;
    nn::Network<float> net;

    std::vector<std::uint8_t> serialize() {
        ByteWriter w;
        begin_model(w, "nn-feat");
        detail::put_matrix(w, scaler.mean);
        detail::put_matrix(w, scaler.scale);
        const auto body = net.serialize();
        w.put<std::uint64_t>(body.size());
        w.put_bytes(body);
        return w.take();
    }

    static FeatureNet deserialize(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        if (open_model(r) != "nn-feat") throw ParseError("model file does not hold a feature network", 6);
        const FeatureMatrix mean = detail::get_matrix(r);
        const FeatureMatrix scale = detail::get_matrix(r);
        if (mean.rows() != 1 || scale.rows() != 1 || mean.cols() != scale.cols())
            throw ParseError("standardizer shape is inconsistent", r.offset());
        const std::size_t at = r.offset();
        const auto n = r.get<std::uint64_t>();
        if (n != r.remaining()) throw ParseError("embedded network length does not match the file", at);
        const std::size_t body_at = r.offset();
        try {
            FeatureNet f{Standardizer{mean.row(0), scale.row(0)}, nn::Network<float>::deserialize(bytes.subspan(body_at))};
            if (static_cast<Eigen::Index>(f.net.spec().input[3]) != mean.cols())
                throw ParseError("network input width does not match the standardizer", body_at);
            return f;
        } catch (const ParseError& e) {
            throw ParseError(std::string("embedded network: ") + e.what(), body_at + e.offset());
        }
    }
};

/// Stratified, seeded subsample of at most `cap` rows, keeping every class's
/// share (largest remainder) and original row order.
inline std::vector<std::size_t> stratified_cap(const Labels& y, std::size_t cap, SeedSpec seed) {
    if (y.size() <= cap) {
        std::vector<std::size_t> all(y.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
        return all;
    }
    std::vector<std::vector<std::size_t>> by_class(num_classes);
    for (std::size_t i = 0; i < y.size(); ++i) by_class.at(static_cast<std::size_t>(y[i])).push_back(i);
    std::vector<std::size_t> sizes;
    for (const auto& c : by_class) sizes.push_back(c.size());
    // largest-remainder quotas summing to cap
    std::vector<std::size_t> quota(num_classes);
    std::vector<std::pair<double, std::size_t>> rema;
    std::size_t used = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const double exact = static_cast<double>(cap) * static_cast<double>(sizes[c]) / static_cast<double>(y.size());
        quota[c] = static_cast<std::size_t>(exact);
        used += quota[c];
        rema.emplace_back(-(exact - static_cast<double>(quota[c])), c);
    }
    std::ranges::sort(rema);
    for (std::size_t k = 0; used < cap && k < rema.size(); ++k)
        if (quota[rema[k].second] < sizes[rema[k].second]) {
            ++quota[rema[k].second];
            ++used;
        }
    Rng rng(seed);
    std::vector<std::size_t> out;
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto& rows = by_class[c];
        rng.shuffle(std::span<std::size_t>(rows));
        out.insert(out.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(quota[c]));
    }
    std::ranges::sort(out);
    return out;
}

inline double label_accuracy(const Labels& pred, const Labels& y) {
    if (pred.size() != y.size() || y.empty()) throw Error("accuracy needs equal-length, non-empty label vectors");
    std::size_t hit = 0;
    for (std::size_t i = 0; i < y.size(); ++i) hit += pred[i] == y[i];
    return static_cast<double>(hit) / static_cast<double>(y.size());
}

/// Any trained model the CLI can store and evaluate.
class Classifier {
public:
    using Model = std::variant<TrainedClassifier, nn::Network<float>, FeatureNet>;

    explicit Classifier(Model m) : model_(std::move(m)) {}

    /// "cnn", "cnn2", "dnn-feat" or a baseline name.
    std::string name() const {
        if (const auto* t = std::get_if<TrainedClassifier>(&model_)) return std::string(baseline_name(t->kind()));
        if (std::holds_alternative<FeatureNet>(model_)) return "dnn-feat";
        const auto& n = std::get<nn::Network<float>>(model_);
        return n.spec().name == "CNN2" ? "cnn2" : "cnn";
    }

    bool uses_features() const { return !std::holds_alternative<nn::Network<float>>(model_); }
    Model& model() noexcept { return model_; }

    /// Predicts class ids for a feature matrix (feature models) or frames.
    Labels predict(const Dataset& ds, const FeatureMatrix* features = nullptr, unsigned threads = 1) {
        FeatureSet fs;
        if (uses_features() && !features) {
            fs = featurize_dataset(ds, threads);
            features = &fs.x;
        }
        if (auto* t = std::get_if<TrainedClassifier>(&model_)) return t->predict(*features);
        if (auto* f = std::get_if<FeatureNet>(&model_))
            return nn::argmax_rows(nn::predict(f->net, nn::features_tensor<float>(f->scaler.apply(*features))));
        auto& net = std::get<nn::Network<float>>(model_);
        return nn::argmax_rows(nn::predict(net, nn::frames_tensor<float>(ds)));
    }

    std::vector<std::uint8_t> serialize() {
        return std::visit([](auto& m) { return m.serialize(); }, model_);
    }

    static Classifier deserialize(std::span<const std::uint8_t> bytes) {
        const std::string kind = model_kind(bytes);
        if (kind == "nn") return Classifier(nn::Network<float>::deserialize(bytes));
        if (kind == "nn-feat") return Classifier(FeatureNet::deserialize(bytes));
        return Classifier(TrainedClassifier::deserialize(bytes));
    }

    static Classifier load(const std::filesystem::path& p) { return deserialize(read_file(p)); }

private:
    Model model_;
};

struct TrainOutcome {
    Classifier model;
    nn::History history;           ///< one row per epoch; a single row for feature classifiers
    std::vector<std::string> warnings;
};

/// Trains the configured model on `train`, selecting on `val`.
/// `on_best` receives the serialized model every time validation improves.
inline TrainOutcome train_model(const RunConfig& cfg, const Dataset& train, const Dataset& val,
                                const std::function<void(const std::vector<std::uint8_t>&)>& on_best = {},
                                const std::function<void(const nn::EpochStats&, bool)>& on_epoch = {}) {
    cfg.validate();
    if (train.frames.empty() || val.frames.empty()) throw Error("training and validation sets must be non-empty");
    const Labels ytr = nn::dataset_labels(train);
    const Labels yva = nn::dataset_labels(val);

    if (!uses_features(cfg.model)) {
        nn::Network<float> net(cfg.model_spec(), SeedSpec{cfg.train_seed, 1});
        const auto xtr = nn::frames_tensor<float>(train);
        const auto xva = nn::frames_tensor<float>(val);
        nn::History h = nn::train(net, xtr, ytr, xva, yva, cfg.training(), [&](const nn::EpochStats& e, bool improved) {
            if (on_epoch) on_epoch(e, improved);
            if (improved && on_best) on_best(net.serialize());
        });
        return {Classifier(std::move(net)), std::move(h), {}};
    }

    const FeatureSet ftr = featurize_dataset(train, cfg.threads);
    const FeatureSet fva = featurize_dataset(val, cfg.threads);
    if (cfg.model == ModelChoice::dnn_feat) {
        FeatureNet f{Standardizer::fit(ftr.x), nn::Network<float>(cfg.model_spec(), SeedSpec{cfg.train_seed, 1})};
        const auto xtr = nn::features_tensor<float>(f.scaler.apply(ftr.x));
        const auto xva = nn::features_tensor<float>(f.scaler.apply(fva.x));
        nn::History h = nn::train(f.net, xtr, ytr, xva, yva, cfg.training(), [&](const nn::EpochStats& e, bool improved) {
            if (on_epoch) on_epoch(e, improved);
            if (improved && on_best) on_best(f.serialize());
        });
        return {Classifier(std::move(f)), std::move(h), {}};
    }

    const auto t0 = std::chrono::steady_clock::now();
    std::optional<Standardizer> scaler;
    if (cfg.standardize) scaler = Standardizer::fit(ftr.x);
    FeatureMatrix x = ftr.x;
    Labels y = ytr;
    std::vector<std::string> warnings;
    if (cfg.model == ModelChoice::svm && y.size() > cfg.svm_max_train) {
        const auto rows = stratified_cap(y, cfg.svm_max_train, SeedSpec{cfg.train_seed, 2});
        FeatureMatrix sub(static_cast<Eigen::Index>(rows.size()), x.cols());
        Labels ys;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            sub.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
            ys.push_back(y[rows[i]]);
        }
        warnings.push_back("svm trained on a stratified subsample of " + std::to_string(rows.size()) + " of " +
                           std::to_string(y.size()) + " rows (svm_max_train)");
        x = std::move(sub);
        y = std::move(ys);
    }
    TrainedClassifier clf = TrainedClassifier::fit(baseline_kind(cfg.model), x, y, cfg.baseline_params(), scaler);
    for (auto& w : clf.warnings()) warnings.push_back(w);
    Classifier model(std::move(clf));
    nn::EpochStats e;
    e.epoch = 1;
    e.train_loss = std::nan("");
    e.val_loss = std::nan("");
    e.train_acc = label_accuracy(model.predict(train, &ftr.x), ytr);
    e.val_acc = label_accuracy(model.predict(val, &fva.x), yva);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    nn::History h;
    h.epochs.push_back(e);
    h.best_epoch = 1;
    if (on_epoch) on_epoch(e, true);
    if (on_best) on_best(model.serialize());
    return {std::move(model), std::move(h), std::move(warnings)};
}

} // namespace modrec

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat key=value run configuration shared by every CLI subcommand.
//
// Syntax: one `key = value` per line; `#` starts a comment; blank lines are
// ignored; lists are comma separated. Unknown and repeated keys are errors,
// and every error names its line.

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "modrec/baselines.hpp"
#include "modrec/channel.hpp"
#include "modrec/dataset.hpp"
#include "modrec/error.hpp"
#include "modrec/modem.hpp"
#include "modrec/neuralnet.hpp"

namespace modrec {

enum class ModelChoice { cnn, cnn2, dnn_feat, knn1, gnb, tree, svm };

inline constexpr std::array<std::string_view, 7> model_choice_names = {"cnn", "cnn2", "dnn-feat", "knn1",
                                                                       "gnb", "tree", "svm"};

inline std::string_view model_choice_name(ModelChoice m) { return model_choice_names[static_cast<std::size_t>(m)]; }

inline std::optional<ModelChoice> parse_model_choice(std::string_view s) {
    for (std::size_t i = 0; i < model_choice_names.size(); ++i)
        if (model_choice_names[i] == s) return static_cast<ModelChoice>(i);
    return std::nullopt;
}

inline bool is_neural(ModelChoice m) { return m == ModelChoice::cnn || m == ModelChoice::cnn2 || m == ModelChoice::dnn_feat; }
inline bool uses_features(ModelChoice m) { return m != ModelChoice::cnn && m != ModelChoice::cnn2; }

inline BaselineKind baseline_kind(ModelChoice m) {
    switch (m) {
    case ModelChoice::knn1: return BaselineKind::knn1;
    case ModelChoice::gnb: return BaselineKind::gaussian_nb;
    case ModelChoice::tree: return BaselineKind::decision_tree;
    case ModelChoice::svm: return BaselineKind::rbf_svm;
    default: throw Error(std::string(model_choice_name(m)) + " is not a feature classifier");
    }
}

struct RunConfig {
    // dataset build
    std::vector<ModClass> classes{all_classes.begin(), all_classes.end()};
    std::vector<int> snrs{snr_levels.begin(), snr_levels.end()};
    std::size_t signals_per_cell = 200;
    std::size_t windows_per_signal = 20;
    std::size_t step = 64;
    std::uint64_t seed = 1;
    ModemConfig modem;
    ChannelParams channel;

    // split
    double split_train = 0.6, split_val = 0.2, split_test = 0.2;
    std::uint64_t split_seed = 1;

    // features and model
    bool standardize = true;
    ModelChoice model = ModelChoice::cnn;
    double cnn_dropout = 0.5, cnn2_dropout = 0.6, dnn_dropout = 0.5;
    std::size_t cnn_dense = 128;
    double l2_conv = 1e-4, l1_act = 1e-5;

    // training
    std::size_t batch_size = 1024;
    double learning_rate = 1e-3, beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::size_t max_epochs = 60, patience = 0;
    std::uint64_t train_seed = 1;

    // baselines
    TreeParams tree;
    SvmParams svm;
    std::size_t svm_max_train = 4000;

    // evaluation and benchmarking
    std::vector<int> confusion_snrs{-10, 0, 18};
    bool plot = true;
    std::size_t bench_repetitions = 5;
    std::size_t bench_batch = 1024;

    unsigned threads = 1;

    friend bool operator==(const RunConfig& a, const RunConfig& b);

    GenerationConfig generation() const {
        GenerationConfig g;
        g.classes = classes;
        g.snrs = snrs;
        g.signals_per_cell = signals_per_cell;
        g.windows_per_signal = windows_per_signal;
        g.step = step;
        g.seed = seed;
        g.modem = modem;
        g.channel = channel;
        g.threads = threads;
        return g;
    }

    SplitSpec split() const { return {split_train, split_val, split_test, SeedSpec{split_seed, 0}}; }

    nn::TrainConfig training() const {
        nn::TrainConfig t;
        t.batch_size = batch_size;
        t.learning_rate = learning_rate;
        t.beta1 = beta1;
        t.beta2 = beta2;
        t.epsilon = epsilon;
        t.max_epochs = max_epochs;
        t.patience = patience;
        t.seed = SeedSpec{train_seed, 0};
        return t;
    }

    nn::ModelSpec model_spec() const {
        switch (model) {
        case ModelChoice::cnn: return nn::cnn_spec(cnn_dropout, cnn_dense, l2_conv, l1_act);
        case ModelChoice::cnn2: return nn::cnn2_spec(cnn2_dropout);
        case ModelChoice::dnn_feat: return nn::dnn_feat_spec({512, 256, 128}, dnn_dropout, num_features);
        default: throw ConfigError(std::string(model_choice_name(model)) + " is not a neural model");
        }
    }

    BaselineParams baseline_params() const { return {tree, svm}; }

    void validate() const {
        generation().validate();
        split().validate();
        training().validate();
        for (double d : {cnn_dropout, cnn2_dropout, dnn_dropout})
            if (!(d >= 0.0 && d < 1.0)) throw ConfigError("dropout rates must be in [0, 1)");
        if (cnn_dense == 0) throw ConfigError("cnn_dense must be >= 1");
        if (!(l2_conv >= 0.0) || !(l1_act >= 0.0)) throw ConfigError("penalty coefficients must be >= 0");
        if (tree.max_depth == 0 || tree.min_leaf == 0) throw ConfigError("tree_max_depth and tree_min_leaf must be >= 1");
        if (!(svm.c > 0.0) || !(svm.gamma > 0.0) || !(svm.tolerance > 0.0) || svm.max_iter == 0)
            throw ConfigError("svm_c, svm_gamma, svm_tolerance and svm_max_iter must be > 0");
        if (svm_max_train < 2) throw ConfigError("svm_max_train must be >= 2");
        for (int s : confusion_snrs)
            if (!is_snr_level(s)) throw ConfigError("confusion SNR " + std::to_string(s) + " is not a level");
        if (bench_repetitions == 0 || bench_batch == 0) throw ConfigError("bench_repetitions and bench_batch must be >= 1");
        if (threads == 0) throw ConfigError("threads must be >= 1");
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split_list(std::string_view s) {
    std::vector<std::string_view> out;
    if (trim(s).empty()) return out;
    while (true) {
        const auto comma = s.find(',');
        out.push_back(trim(s.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

inline double to_double(std::string_view s) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("'" + std::string(s) + "' is not a finite number");
    return v;
}

inline std::uint64_t to_u64(std::string_view s) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty())
        throw ConfigError("'" + std::string(s) + "' is not a non-negative integer");
    return v;
}

inline int to_int(std::string_view s) {
    int v = 0;
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size() || s.empty())
        throw ConfigError("'" + std::string(s) + "' is not an integer");
    return v;
}

inline bool to_bool(std::string_view s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("'" + std::string(s) + "' is not a boolean (true/false)");
}

/// Shortest text that reads back to the same double.
inline std::string from_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

inline ModClass class_by_name(std::string_view s) {
    for (std::size_t i = 0; i < num_classes; ++i)
        if (class_names[i] == s) return class_from_id(i);
    std::string known;
    for (auto n : class_names) known += (known.empty() ? "" : ", ") + std::string(n);
    throw ConfigError("unknown class '" + std::string(s) + "' (known: " + known + ")");
}

struct ConfigKey {
    std::string_view name;
    std::string_view help;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, std::string_view)> set;
};

template <typename M>
ConfigKey real_key(std::string_view name, std::string_view help, M member) {
    return {name, help, [=](const RunConfig& c) { return from_double(member(const_cast<RunConfig&>(c))); },
            [=](RunConfig& c, std::string_view v) { member(c) = to_double(v); }};
}

template <typename M>
ConfigKey count_key(std::string_view name, std::string_view help, M member) {
    return {name, help, [=](const RunConfig& c) { return std::to_string(member(const_cast<RunConfig&>(c))); },
            [=](RunConfig& c, std::string_view v) {
                using V = std::remove_reference_t<decltype(member(c))>;
                const std::uint64_t x = to_u64(v);
                if (x > std::numeric_limits<V>::max()) throw ConfigError("value " + std::string(v) + " is too large");
                member(c) = static_cast<V>(x);
            }};
}

template <typename M>
ConfigKey bool_key(std::string_view name, std::string_view help, M member) {
    return {name, help, [=](const RunConfig& c) { return std::string(member(const_cast<RunConfig&>(c)) ? "true" : "false"); },
            [=](RunConfig& c, std::string_view v) { member(c) = to_bool(v); }};
}

inline std::vector<int> parse_snr_list(std::string_view v) {
    std::vector<int> out;
    for (auto item : split_list(v)) {
        const int s = to_int(item);
        if (!is_snr_level(s)) throw ConfigError("SNR " + std::string(item) + " is not a level (-20..20 step 2)");
        out.push_back(s);
    }
    return out;
}

#define MODREC_FIELD(expr) [](RunConfig& c) -> auto& { return c.expr; }

inline const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"classes", "comma list of class names to generate",
         [](const RunConfig& c) {
             std::string s;
             for (std::size_t i = 0; i < c.classes.size(); ++i) s += (i ? "," : "") + std::string(class_name(c.classes[i]));
             return s;
         },
         [](RunConfig& c, std::string_view v) {
             c.classes.clear();
             for (auto item : split_list(v)) c.classes.push_back(class_by_name(item));
         }},
        {"snrs", "comma list of SNR levels in dB (even values in -20..20)",
         [](const RunConfig& c) { return join_ints(c.snrs); },
         [](RunConfig& c, std::string_view v) { c.snrs = parse_snr_list(v); }},
        count_key("signals_per_cell", "independent source signals per (class, SNR) cell", MODREC_FIELD(signals_per_cell)),
        count_key("windows_per_signal", "128-sample frames cut from each signal", MODREC_FIELD(windows_per_signal)),
        count_key("step", "hop between consecutive frames of one signal", MODREC_FIELD(step)),
        count_key("seed", "master seed of the dataset build", MODREC_FIELD(seed)),
        count_key("sps", "samples per symbol", MODREC_FIELD(modem.sps)),
        real_key("rrc_beta", "root-raised-cosine excess bandwidth", MODREC_FIELD(modem.rrc_beta)),
        count_key("rrc_span", "RRC filter span in symbols", MODREC_FIELD(modem.rrc_span)),
        real_key("fsk_mod_index", "modulation index of BFSK and CPFSK", MODREC_FIELD(modem.fsk_mod_index)),
        real_key("fm_deviation", "WBFM peak deviation as a fraction of Nyquist", MODREC_FIELD(modem.fm_deviation)),
        real_key("am_depth", "AM-DSB modulation depth", MODREC_FIELD(modem.am_depth)),
        count_key("hilbert_taps", "Hilbert transformer length for AM-SSB (odd)", MODREC_FIELD(modem.hilbert_taps)),
        count_key("silence_period", "audio silence repeat period in samples", MODREC_FIELD(modem.silence_period)),
        count_key("silence_len", "audio silence length in samples", MODREC_FIELD(modem.silence_len)),
        real_key("cfo_walk_std", "per-sample step std of the carrier phase-rate walk (rad/sample)", MODREC_FIELD(channel.cfo_walk_std)),
        real_key("cfo_init_max", "max initial carrier offset (cycles/sample)", MODREC_FIELD(channel.cfo_init_max)),
        real_key("clk_walk_std", "per-sample step std of the resampling-ratio walk", MODREC_FIELD(channel.clk_walk_std)),
        real_key("clk_init_max", "max initial resampling-ratio offset", MODREC_FIELD(channel.clk_init_max)),
        count_key("n_taps", "multipath tap count", MODREC_FIELD(channel.n_taps)),
        real_key("pdp_decay", "exponential power-delay-profile constant (taps)", MODREC_FIELD(channel.pdp_decay)),
        real_key("max_doppler", "tap Doppler bandwidth (cycles/sample)", MODREC_FIELD(channel.max_doppler)),
        real_key("split_train", "training fraction of each cell", MODREC_FIELD(split_train)),
        real_key("split_val", "validation fraction of each cell", MODREC_FIELD(split_val)),
        real_key("split_test", "test fraction of each cell", MODREC_FIELD(split_test)),
        count_key("split_seed", "seed of the train/val/test assignment", MODREC_FIELD(split_seed)),
        bool_key("standardize", "z-score features with training statistics", MODREC_FIELD(standardize)),
        {"model", "one of cnn, cnn2, dnn-feat, knn1, gnb, tree, svm",
         [](const RunConfig& c) { return std::string(model_choice_name(c.model)); },
         [](RunConfig& c, std::string_view v) {
             const auto m = parse_model_choice(v);
             if (!m) throw ConfigError("unknown model '" + std::string(v) + "'");
             c.model = *m;
         }},
        real_key("cnn_dropout", "dropout rate of the cnn model", MODREC_FIELD(cnn_dropout)),
        real_key("cnn2_dropout", "dropout rate of the cnn2 model", MODREC_FIELD(cnn2_dropout)),
        real_key("dnn_dropout", "dropout rate of the dnn-feat model", MODREC_FIELD(dnn_dropout)),
        count_key("cnn_dense", "hidden dense width of the cnn model", MODREC_FIELD(cnn_dense)),
        real_key("l2_conv", "cnn weight penalty on convolution kernels", MODREC_FIELD(l2_conv)),
        real_key("l1_act", "cnn activity penalty on the hidden dense output", MODREC_FIELD(l1_act)),
        count_key("batch_size", "minibatch size", MODREC_FIELD(batch_size)),
        real_key("learning_rate", "Adam step size", MODREC_FIELD(learning_rate)),
        real_key("beta1", "Adam first-moment decay", MODREC_FIELD(beta1)),
        real_key("beta2", "Adam second-moment decay", MODREC_FIELD(beta2)),
        real_key("epsilon", "Adam denominator offset", MODREC_FIELD(epsilon)),
        count_key("max_epochs", "training epochs", MODREC_FIELD(max_epochs)),
        count_key("patience", "stop after this many epochs without a better validation loss (0 = never)", MODREC_FIELD(patience)),
        count_key("train_seed", "seed of initialization, shuffling and dropout", MODREC_FIELD(train_seed)),
        count_key("tree_max_depth", "decision tree depth limit", MODREC_FIELD(tree.max_depth)),
        count_key("tree_min_leaf", "decision tree minimum leaf size", MODREC_FIELD(tree.min_leaf)),
        real_key("svm_c", "SVM box constraint", MODREC_FIELD(svm.c)),
        real_key("svm_gamma", "RBF kernel width parameter", MODREC_FIELD(svm.gamma)),
        real_key("svm_tolerance", "SMO stopping tolerance", MODREC_FIELD(svm.tolerance)),
        count_key("svm_max_iter", "SMO iteration cap per binary problem", MODREC_FIELD(svm.max_iter)),
        count_key("svm_max_train", "stratified cap on SVM training rows", MODREC_FIELD(svm_max_train)),
        {"confusion_snrs", "SNR levels that get their own confusion matrix",
         [](const RunConfig& c) { return join_ints(c.confusion_snrs); },
         [](RunConfig& c, std::string_view v) { c.confusion_snrs = parse_snr_list(v); }},
        bool_key("plot", "write snr_curve.svg", MODREC_FIELD(plot)),
        count_key("bench_repetitions", "timed repetitions per benchmark measurement", MODREC_FIELD(bench_repetitions)),
        count_key("bench_batch", "frames per timed classification batch", MODREC_FIELD(bench_batch)),
        count_key("threads", "worker thread cap", MODREC_FIELD(threads)),
    };
    return keys;
}

#undef MODREC_FIELD

} // namespace detail

inline bool operator==(const RunConfig& a, const RunConfig& b) {
    for (const auto& k : detail::config_keys())
        if (k.get(a) != k.get(b)) return false;
    return true;
}

/// Applies one `key = value` assignment.
inline void set_config_value(RunConfig& c, std::string_view key, std::string_view value) {
    for (const auto& k : detail::config_keys())
        if (k.name == key) {
            k.set(c, detail::trim(value));
            return;
        }
    throw ConfigError("unknown key '" + std::string(key) + "'");
}

/// Parses config text on top of `base`; errors carry "line N: ".
inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
    std::vector<std::string> seen;
    std::size_t line_no = 0;
    for (std::size_t pos = 0; pos < text.size();) {
        ++line_no;
        const std::size_t nl = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::string where = "line " + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ConfigError(where + "expected 'key = value', got '" + std::string(line) + "'");
        const std::string key(detail::trim(line.substr(0, eq)));
        if (key.empty()) throw ConfigError(where + "missing key before '='");
        if (std::ranges::find(seen, key) != seen.end()) throw ConfigError(where + "key '" + key + "' given twice");
        seen.push_back(key);
        try {
            set_config_value(base, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    return base;
}

/// Every key with its current value and a help comment; parse_config reads it back.
inline std::string config_text(const RunConfig& c, bool with_help = true) {
    std::string s;
    for (const auto& k : detail::config_keys()) {
        if (with_help) s += "# " + std::string(k.help) + "\n";
        s += std::string(k.name) + " = " + k.get(c) + "\n";
    }
    return s;
}

/// Key -> value object, for manifests and hashing.
inline nlohmann::json config_json(const RunConfig& c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& k : detail::config_keys()) j[std::string(k.name)] = k.get(c);
    return j;
}

} // namespace modrec

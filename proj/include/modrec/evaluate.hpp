// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <Eigen/Core>

#include "modrec/binary_io.hpp"
#include "modrec/channel.hpp"
#include "modrec/error.hpp"
#include "modrec/modem.hpp"

namespace modrec {

namespace detail {

inline void check_class(int c, const char* what) {
    if (c < 0 || c >= static_cast<int>(num_classes))
        throw Error(std::string(what) + " " + std::to_string(c) + " is not a class id");
}

inline std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Confusion matrix

struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, num_classes>, num_classes> counts{};  ///< [true][predicted]
    std::optional<int> snr_filter;

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (const auto& row : counts)
            for (auto v : row) s += v;
        return s;
    }
    std::uint64_t trace() const {
        std::uint64_t s = 0;
        for (std::size_t i = 0; i < num_classes; ++i) s += counts[i][i];
        return s;
    }
    std::uint64_t row_sum(std::size_t t) const {
        std::uint64_t s = 0;
        for (auto v : counts[t]) s += v;
        return s;
    }
    /// trace / total; NaN for an empty matrix.
    double accuracy() const {
        const auto n = total();
        return n == 0 ? std::nan("") : static_cast<double>(trace()) / static_cast<double>(n);
    }

    /// Off-diagonal cells sorted by count, largest first, ties by (true, predicted).
    std::vector<std::pair<ModClass, ModClass>> top_confusions(std::size_t k) const {
        std::vector<std::tuple<std::uint64_t, std::size_t, std::size_t>> cells;
        for (std::size_t t = 0; t < num_classes; ++t)
            for (std::size_t p = 0; p < num_classes; ++p)
                if (t != p && counts[t][p] > 0) cells.emplace_back(counts[t][p], t, p);
        std::ranges::sort(cells, [](const auto& a, const auto& b) {
            if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
            return std::make_pair(std::get<1>(a), std::get<2>(a)) < std::make_pair(std::get<1>(b), std::get<2>(b));
        });
        std::vector<std::pair<ModClass, ModClass>> out;
        for (std::size_t i = 0; i < std::min(k, cells.size()); ++i)
            out.emplace_back(class_from_id(std::get<1>(cells[i])), class_from_id(std::get<2>(cells[i])));
        return out;
    }

    /// Rows true class, columns predicted; first column holds the true-class name.
    std::string csv() const {
        std::string s = "true\\pred";
        for (auto n : class_names) (s += ',') += n;
        s += '\n';
        for (std::size_t t = 0; t < num_classes; ++t) {
            s += class_names[t];
            for (auto v : counts[t]) (s += ',') += std::to_string(v);
            s += '\n';
        }
        return s;
    }
};

/// Counts (true, predicted) pairs. With a filter, only examples whose SNR
/// label equals it are counted, and `snrs` must be supplied.
inline ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> labels,
                                 std::span<const int> snrs = {}, std::optional<int> snr_filter = std::nullopt) {
    if (preds.size() != labels.size()) throw Error("predictions and labels differ in length");
    if (snr_filter) {
        if (!is_snr_level(*snr_filter)) throw Error("SNR filter " + std::to_string(*snr_filter) + " is not a level");
        if (snrs.size() != labels.size()) throw Error("an SNR filter needs one SNR label per example");
    }
    ConfusionMatrix m;
    m.snr_filter = snr_filter;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        detail::check_class(labels[i], "label");
        detail::check_class(preds[i], "prediction");
        if (snr_filter && snrs[i] != *snr_filter) continue;
        ++m.counts[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(preds[i])];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Accuracy against SNR

struct SnrBin {
    int snr = 0;
    std::uint64_t n = 0;
    std::uint64_t correct = 0;
    /// Empty for a bin without examples.
    std::optional<double> accuracy() const {
        if (n == 0) return std::nullopt;
        return static_cast<double>(correct) / static_cast<double>(n);
    }
};

struct SnrCurve {
    std::array<SnrBin, snr_levels.size()> bins{};

    std::uint64_t total() const {
        std::uint64_t s = 0;
        for (const auto& b : bins) s += b.n;
        return s;
    }
    double overall() const {
        std::uint64_t n = 0, c = 0;
        for (const auto& b : bins) {
            n += b.n;
            c += b.correct;
        }
        return n == 0 ? std::nan("") : static_cast<double>(c) / static_cast<double>(n);
    }
    const SnrBin& at(int snr) const {
        if (!is_snr_level(snr)) throw Error("SNR " + std::to_string(snr) + " is not a level");
        return bins[snr_index(snr)];
    }

    std::string csv() const {
        std::string s = "snr,n,correct,accuracy\n";
        for (const auto& b : bins) {
            s += std::to_string(b.snr) + ',' + std::to_string(b.n) + ',' + std::to_string(b.correct) + ',';
            if (auto a = b.accuracy()) s += detail::fixed(*a);
            s += '\n';
        }
        return s;
    }
};

inline SnrCurve accuracy_by_snr(std::span<const int> preds, std::span<const int> labels, std::span<const int> snrs) {
    if (preds.size() != labels.size() || snrs.size() != labels.size())
        throw Error("predictions, labels and SNRs differ in length");
    SnrCurve c;
    for (std::size_t i = 0; i < snr_levels.size(); ++i) c.bins[i].snr = snr_levels[i];
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!is_snr_level(snrs[i])) throw Error("SNR label " + std::to_string(snrs[i]) + " is not a level");
        SnrBin& b = c.bins[snr_index(snrs[i])];
        ++b.n;
        if (preds[i] == labels[i]) ++b.correct;
    }
    return c;
}

/// Wilson score interval for k successes in n trials at normal quantile z.
inline std::pair<double, double> wilson_interval(std::uint64_t k, std::uint64_t n, double z = 1.96) {
    if (n == 0 || k > n) throw Error("wilson_interval needs 0 <= k <= n and n > 0");
    const double nn = static_cast<double>(n), p = static_cast<double>(k) / nn, z2 = z * z;
    const double centre = (p + z2 / (2 * nn)) / (1 + z2 / nn);
    const double half = z * std::sqrt(p * (1 - p) / nn + z2 / (4 * nn * nn)) / (1 + z2 / nn);
    return {centre - half, centre + half};
}

// ---------------------------------------------------------------------------
// Timing

inline double median(std::vector<double> v) {
    if (v.empty()) throw Error("median of an empty sample");
    std::ranges::sort(v);
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Compiler, hardware threads, vector width and Eigen version of this build.
inline std::string environment_string() {
    std::string s;
#if defined(__clang__)
    s += "clang " __clang_version__;
#elif defined(__GNUC__)
    s += "gcc " + std::to_string(__GNUC__) + "." + std::to_string(__GNUC_MINOR__) + "." + std::to_string(__GNUC_PATCHLEVEL__);
#else
    s += "unknown compiler";
#endif
    s += "; hardware threads " + std::to_string(std::thread::hardware_concurrency());
    s += "; eigen " + std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
         std::to_string(EIGEN_MINOR_VERSION) + " " + Eigen::SimdInstructionSetsInUse();
#ifdef NDEBUG
    s += "; optimized";
#else
    s += "; debug";
#endif
    return s;
}

struct TimingEntry {
    std::string model;
    std::string phase;           ///< "train" or "classify"
    std::size_t examples = 0;    ///< examples processed per timed call
    std::vector<double> seconds; ///< raw per-repetition values
    double median_seconds = 0.0;
};

struct TimingReport {
    std::vector<TimingEntry> entries;
    std::string environment;
    double wall_seconds = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& e : entries)
            rows.push_back({{"model", e.model},
                            {"phase", e.phase},
                            {"examples", e.examples},
                            {"seconds", e.seconds},
                            {"median_seconds", e.median_seconds}});
        return {{"environment", environment}, {"wall_seconds", wall_seconds}, {"entries", rows}};
    }

    /// One row per model: median train and classify seconds side by side.
    std::string csv() const {
        std::string s = "model,train_examples,train_median_s,classify_examples,classify_median_s,repetitions\n";
        std::vector<std::string> order;
        for (const auto& e : entries)
            if (std::ranges::find(order, e.model) == order.end()) order.push_back(e.model);
        for (const auto& m : order) {
            std::string train = ",", classify = ",";
            std::size_t reps = 0;
            for (const auto& e : entries) {
                if (e.model != m) continue;
                (e.phase == "train" ? train : classify) = std::to_string(e.examples) + ',' + detail::fixed(e.median_seconds, 9);
                reps = e.seconds.size();
            }
            s += m + ',' + train + ',' + classify + ',' + std::to_string(reps) + '\n';
        }
        return s;
    }
};

/// Runs fn once untimed, then `repetitions` timed calls.
template <typename F>
TimingEntry time_call(std::string model, std::string phase, std::size_t examples, std::size_t repetitions, F&& fn) {
    if (repetitions == 0) throw ConfigError("repetitions must be >= 1");
    TimingEntry e{std::move(model), std::move(phase), examples, {}, 0.0};
    fn();
    for (std::size_t r = 0; r < repetitions; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        e.seconds.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    e.median_seconds = median(e.seconds);
    return e;
}

/// A model under benchmark: closures over its own data for one full
/// training run and one classification pass.
struct BenchModel {
    std::string name;
    std::size_t train_examples = 0;
    std::size_t classify_examples = 0;
    std::function<void()> train;
    std::function<void()> classify;
};

inline TimingReport benchmark(std::span<const BenchModel> models, std::size_t repetitions = 5) {
    const auto t0 = std::chrono::steady_clock::now();
    TimingReport r;
    r.environment = environment_string();
    for (const auto& m : models) {
        if (m.train) r.entries.push_back(time_call(m.name, "train", m.train_examples, repetitions, m.train));
        if (m.classify) r.entries.push_back(time_call(m.name, "classify", m.classify_examples, repetitions, m.classify));
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

// ---------------------------------------------------------------------------
// Report files

struct EvalRun {
    std::string model;
    nlohmann::json config;          ///< echoed verbatim and hashed
    std::vector<int> preds, labels, snrs;
    std::vector<int> confusion_snrs; ///< one confusion_<snr>.csv each; confusion_all.csv is always written
    std::optional<TimingReport> timing;
    bool plot = true;
};

inline std::string config_hash(const nlohmann::json& config) { return sha256_hex(config.dump()); }

/// Accuracy curve as a standalone SVG line plot.
inline std::string snr_curve_svg(const SnrCurve& c, const std::string& title) {
    const double w = 640, h = 400, l = 60, r = 20, t = 40, b = 50;
    auto px = [&](double snr) { return l + (snr + 20.0) / 40.0 * (w - l - r); };
    auto py = [&](double acc) { return h - b - acc * (h - t - b); };
    auto f = [](double v) { return detail::fixed(v, 2); };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" viewBox=\"0 0 640 400\">\n";
    s += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
    std::string escaped;
    for (char ch : title) {
        if (ch == '<') escaped += "&lt;";
        else if (ch == '>') escaped += "&gt;";
        else if (ch == '&') escaped += "&amp;";
        else escaped += ch;
    }
    s += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" + escaped + "</text>\n";
    s += "<g stroke=\"#ccc\" stroke-width=\"1\">\n";
    for (int a = 0; a <= 10; a += 2) s += "<line x1=\"" + f(l) + "\" y1=\"" + f(py(a / 10.0)) + "\" x2=\"" + f(w - r) + "\" y2=\"" + f(py(a / 10.0)) + "\"/>\n";
    s += "</g>\n<g font-family=\"sans-serif\" font-size=\"11\">\n";
    for (int a = 0; a <= 10; a += 2)
        s += "<text x=\"" + f(l - 6) + "\" y=\"" + f(py(a / 10.0) + 4) + "\" text-anchor=\"end\">" + detail::fixed(a / 10.0, 1) + "</text>\n";
    for (int snr = -20; snr <= 20; snr += 4)
        s += "<text x=\"" + f(px(snr)) + "\" y=\"" + f(h - b + 16) + "\" text-anchor=\"middle\">" + std::to_string(snr) + "</text>\n";
    s += "<text x=\"" + f((l + w - r) / 2) + "\" y=\"" + f(h - 12) + "\" text-anchor=\"middle\">SNR (dB)</text>\n";
    s += "<text x=\"16\" y=\"" + f((t + h - b) / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " + f((t + h - b) / 2) + ")\">accuracy</text>\n";
    s += "</g>\n<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    bool first = true;
    for (const auto& bin : c.bins)
        if (auto a = bin.accuracy()) {
            if (!first) s += ' ';
            s += f(px(bin.snr)) + ',' + f(py(*a));
            first = false;
        }
    s += "\"/>\n<g fill=\"#1f77b4\">\n";
    for (const auto& bin : c.bins)
        if (auto a = bin.accuracy()) s += "<circle cx=\"" + f(px(bin.snr)) + "\" cy=\"" + f(py(*a)) + "\" r=\"3\"/>\n";
    s += "</g>\n<rect x=\"" + f(l) + "\" y=\"" + f(t) + "\" width=\"" + f(w - l - r) + "\" height=\"" + f(h - t - b) +
         "\" fill=\"none\" stroke=\"black\"/>\n</svg>\n";
    return s;
}

inline nlohmann::json summary_json(const EvalRun& run, const SnrCurve& curve, const ConfusionMatrix& all) {
    nlohmann::json per_snr = nlohmann::json::array();
    for (const auto& b : curve.bins) {
        nlohmann::json row = {{"snr", b.snr}, {"n", b.n}, {"correct", b.correct}};
        if (auto a = b.accuracy()) row["accuracy"] = *a;
        else row["accuracy"] = nullptr;
        per_snr.push_back(row);
    }
    nlohmann::json files = {"accuracy_by_snr.csv", "confusion_all.csv"};
    for (int s : run.confusion_snrs) files.push_back("confusion_" + std::to_string(s) + ".csv");
    if (run.plot) files.push_back("snr_curve.svg");
    nlohmann::json j = {{"format", "modrec-report"},
                        {"version", 1},
                        {"model", run.model},
                        {"config", run.config},
                        {"config_hash", config_hash(run.config)},
                        {"n_examples", all.total()},
                        {"overall_accuracy", all.total() ? nlohmann::json(all.accuracy()) : nlohmann::json(nullptr)},
                        {"per_snr", per_snr},
                        {"files", files}};
    if (run.timing) j["timing"] = run.timing->to_json();
    return j;
}

/// Writes summary.json, accuracy_by_snr.csv, confusion_all.csv, one
/// confusion_<snr>.csv per requested level and (optionally) snr_curve.svg.
/// Returns the summary.
inline nlohmann::json emit_report(const EvalRun& run, const std::filesystem::path& dir) {
    const SnrCurve curve = accuracy_by_snr(run.preds, run.labels, run.snrs);
    const ConfusionMatrix all = confusion(run.preds, run.labels);
    std::vector<ConfusionMatrix> per;
    for (int s : run.confusion_snrs) per.push_back(confusion(run.preds, run.labels, run.snrs, s));

    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error("cannot create report directory " + dir.string() + ": " + ec.message());
    const nlohmann::json summary = summary_json(run, curve, all);
    write_text(dir / "summary.json", summary.dump(2) + "\n");
    write_text(dir / "accuracy_by_snr.csv", curve.csv());
    write_text(dir / "confusion_all.csv", all.csv());
    for (std::size_t i = 0; i < per.size(); ++i)
        write_text(dir / ("confusion_" + std::to_string(run.confusion_snrs[i]) + ".csv"), per[i].csv());
    if (run.plot) write_text(dir / "snr_curve.svg", snr_curve_svg(curve, run.model + " accuracy vs SNR"));
    return summary;
}

/// Reads summary.json back and checks its structure and internal consistency.
inline nlohmann::json read_summary(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("summary is not JSON: ") + e.what(), e.byte);
    }
    auto need = [&](const char* key, bool ok) {
        if (!j.contains(key) || !ok) throw Error(std::string("summary field '") + key + "' missing or malformed");
    };
    need("format", j.contains("format") && j["format"] == "modrec-report");
    need("version", j.contains("version") && j["version"] == 1);
    need("model", j.contains("model") && j["model"].is_string());
    need("config", j.contains("config"));
    need("config_hash", j.contains("config_hash") && j["config_hash"] == config_hash(j["config"]));
    need("n_examples", j.contains("n_examples") && j["n_examples"].is_number_unsigned());
    need("per_snr", j.contains("per_snr") && j["per_snr"].is_array() && j["per_snr"].size() == snr_levels.size());
    std::uint64_t n = 0, correct = 0;
    for (std::size_t i = 0; i < snr_levels.size(); ++i) {
        const auto& row = j["per_snr"][i];
        if (!row.is_object() || row.value("snr", 999) != snr_levels[i] || !row.contains("n") || !row.contains("correct"))
            throw Error("summary per_snr row " + std::to_string(i) + " malformed");
        n += row["n"].get<std::uint64_t>();
        correct += row["correct"].get<std::uint64_t>();
    }
    if (n != j["n_examples"].get<std::uint64_t>()) throw Error("summary per_snr counts do not add up to n_examples");
    if (n > 0 && (!j["overall_accuracy"].is_number() ||
                  j["overall_accuracy"].get<double>() != static_cast<double>(correct) / static_cast<double>(n)))
        throw Error("summary overall_accuracy disagrees with per_snr counts");
    return j;
}

} // namespace modrec

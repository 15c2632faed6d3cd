// SPDX-License-Identifier: Apache-2.0
//
// modrec: generate datasets, extract features, train, evaluate and benchmark
// modulation classifiers from one flat key=value config.
//
// Exit status: 0 success, 1 usage or config error, 2 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include "modrec/config.hpp"
#include "modrec/dataset.hpp"
#include "modrec/evaluate.hpp"
#include "modrec/expertfeat.hpp"
#include "modrec/pipeline.hpp"

namespace fs = std::filesystem;
using namespace modrec;

namespace {

fs::path output_root() {
    const char* env = std::getenv("MODREC_OUT");
    return env && *env ? fs::path(env) : fs::path("modrec_out");
}

struct Common {
    std::string config_path;
    unsigned threads = 0;
};

RunConfig load_config(const Common& c, RunConfig base = {}) {
    RunConfig cfg = base;
    if (!c.config_path.empty()) {
        const auto bytes = read_file(c.config_path);
        try {
            cfg = parse_config(std::string(bytes.begin(), bytes.end()), base);
        } catch (const ConfigError& e) {
            throw ConfigError(c.config_path + ": " + e.what());
        }
    }
    if (c.threads) cfg.threads = c.threads;
    cfg.validate();
    return cfg;
}

/// Writes to a sibling temporary and renames, so readers never see half a file.
void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
    const fs::path tmp = path.string() + ".tmp";
    write_file(tmp, bytes);
    fs::rename(tmp, path);
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string file_sha256(const fs::path& p) { return sha256_hex(read_file(p)); }

const Dataset& pick_split(const SplitResult& s, const std::string& which, const Dataset& all) {
    if (which == "train") return s.train;
    if (which == "val") return s.val;
    if (which == "test") return s.test;
    if (which == "all") return all;
    throw ConfigError("--split must be one of train, val, test, all");
}

int cmd_defaults() {
    std::cout << config_text(RunConfig{});
    return 0;
}

int cmd_generate(const Common& c, std::string out, std::optional<std::uint64_t> seed) {
    RunConfig cfg = load_config(c);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    const fs::path path = out.empty() ? output_root() / "dataset.rmd" : fs::path(out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    const Dataset ds = build_dataset(cfg.generation());
    save(ds, path);
    write_text(fs::path(path).replace_extension(".cfg"), config_text(cfg, false));
    std::cout << "class,snr,frames\n";
    for (const auto& [cell, n] : cell_counts(ds.frames))
        std::cout << class_name(cell.first) << ',' << cell.second << ',' << n << '\n';
    std::cout << "frames " << ds.size() << "\nfile " << path.string() << "\nsha256 " << file_sha256(path) << '\n';
    return 0;
}

int cmd_features(const Common& c, const std::string& in, std::string out) {
    const RunConfig cfg = load_config(c);
    const Dataset ds = load(in);
    const FeatureSet fs_ = featurize_dataset(ds, cfg.threads);
    const fs::path path = out.empty() ? output_root() / "features.csv" : fs::path(out);
    if (path.has_parent_path()) ensure_dir(path.parent_path());
    write_text(path, features_csv(fs_));
    std::cout << "rows " << fs_.rows() << " features " << fs_.x.cols() << "\nfile " << path.string() << '\n';
    return 0;
}

int cmd_train(const Common& c, const std::string& in, const std::string& model, std::string out) {
    RunConfig cfg = load_config(c);
    if (!model.empty()) {
        const auto m = parse_model_choice(model);
        if (!m) throw ConfigError("unknown model '" + model + "'");
        cfg.model = *m;
    }
    const fs::path dir = out.empty() ? output_root() / ("train_" + std::string(model_choice_name(cfg.model))) : fs::path(out);
    ensure_dir(dir);
    const Dataset ds = load(in);
    const SplitResult sp = split(ds, cfg.split());
    write_text(dir / "config.txt", config_text(cfg, false));
    std::cout << "train " << sp.train.size() << " val " << sp.val.size() << " test " << sp.test.size() << '\n';

    const fs::path model_path = dir / "model.rmm";
    TrainOutcome res = train_model(
        cfg, sp.train, sp.val, [&](const std::vector<std::uint8_t>& bytes) { write_atomic(model_path, bytes); },
        [](const nn::EpochStats& e, bool improved) {
            std::printf("epoch %zu train_loss %.4f val_loss %.4f train_acc %.4f val_acc %.4f %.1fs%s\n", e.epoch,
                        e.train_loss, e.val_loss, e.train_acc, e.val_acc, e.seconds, improved ? " *" : "");
            std::fflush(stdout);
        });
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
    write_atomic(model_path, res.model.serialize());
    write_text(dir / "history.csv", res.history.csv());
    const nlohmann::json manifest = {{"command", "train"},
                                     {"dataset", fs::absolute(in).string()},
                                     {"dataset_sha256", file_sha256(in)},
                                     {"model", model_choice_name(cfg.model)},
                                     {"config", config_json(cfg)},
                                     {"config_hash", config_hash(config_json(cfg))},
                                     {"best_epoch", res.history.best_epoch},
                                     {"model_sha256", file_sha256(model_path)},
                                     {"split_sizes", {sp.train.size(), sp.val.size(), sp.test.size()}},
                                     {"warnings", res.warnings}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << "best epoch " << res.history.best_epoch << "\nmodel " << model_path.string() << '\n';
    return 0;
}

int cmd_eval(Common c, const std::string& in, const std::string& model_file, std::string out,
             const std::string& snr_list, const std::string& which) {
    if (!fs::exists(model_file)) throw Error("model file " + model_file + " does not exist");
    // Without --config, reuse the config saved next to the model so the split matches training.
    if (c.config_path.empty()) {
        const fs::path saved = fs::path(model_file).parent_path() / "config.txt";
        if (fs::exists(saved)) c.config_path = saved.string();
    }
    RunConfig cfg = load_config(c);
    if (!snr_list.empty()) set_config_value(cfg, "confusion_snrs", snr_list);
    Classifier clf = Classifier::load(model_file);
    const Dataset ds = load(in);
    std::optional<SplitResult> sp;
    if (which != "all") sp = split(ds, cfg.split());
    const Dataset& part = sp ? pick_split(*sp, which, ds) : ds;

    EvalRun run;
    run.model = clf.name();
    run.preds = clf.predict(part, nullptr, cfg.threads);
    run.labels = nn::dataset_labels(part);
    for (const auto& f : part.frames) run.snrs.push_back(f.snr);
    run.confusion_snrs = cfg.confusion_snrs;
    run.plot = cfg.plot;
    run.config = {{"run", config_json(cfg)},
                  {"split", which},
                  {"dataset_sha256", file_sha256(in)},
                  {"model_sha256", file_sha256(model_file)}};
    const fs::path dir = out.empty() ? output_root() / ("eval_" + run.model) : fs::path(out);
    const nlohmann::json summary = emit_report(run, dir);
    std::printf("model %s examples %zu accuracy %.4f\nreport %s\n", run.model.c_str(), run.labels.size(),
                summary["overall_accuracy"].is_number() ? summary["overall_accuracy"].get<double>() : 0.0,
                dir.string().c_str());
    return 0;
}

int cmd_bench(const Common& c, const std::string& in, const std::string& models, std::string out) {
    const RunConfig base = load_config(c);
    const Dataset ds = load(in);
    const SplitResult sp = split(ds, base.split());
    // fixed-size classification batch, cycling through the test split
    Dataset batch;
    for (std::size_t i = 0; i < base.bench_batch; ++i) batch.frames.push_back(sp.test.frames[i % sp.test.size()]);

    std::vector<BenchModel> bench;
    std::vector<RunConfig> cfgs;
    for (auto name : detail::split_list(models)) {
        const auto m = parse_model_choice(name);
        if (!m) throw ConfigError("unknown model '" + std::string(name) + "'");
        RunConfig cfg = base;
        cfg.model = *m;
        cfgs.push_back(cfg);
    }
    if (cfgs.empty()) throw ConfigError("--models lists no models");
    // Classification is timed on the model from the warm-up training run.
    std::vector<std::optional<Classifier>> trained(cfgs.size());
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        BenchModel b;
        b.name = std::string(model_choice_name(cfgs[i].model));
        b.train_examples = sp.train.size();
        b.classify_examples = batch.size();
        b.train = [&, i] {
            TrainOutcome r = train_model(cfgs[i], sp.train, sp.val);
            if (!trained[i]) trained[i].emplace(std::move(r.model));
        };
        b.classify = [&, i] { (void)trained[i]->predict(batch, nullptr, cfgs[i].threads); };
        bench.push_back(std::move(b));
    }
    const TimingReport report = benchmark(bench, base.bench_repetitions);
    const fs::path dir = out.empty() ? output_root() / "bench" : fs::path(out);
    ensure_dir(dir);
    write_text(dir / "timing.csv", report.csv());
    nlohmann::json j = report.to_json();
    j["config"] = config_json(base);
    j["config_hash"] = config_hash(config_json(base));
    j["dataset_sha256"] = file_sha256(in);
    write_text(dir / "timing.json", j.dump(2) + "\n");
    std::cout << report.csv() << "environment " << report.environment << "\nreport " << dir.string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Modulation recognition pipeline: dataset synthesis, features, classifiers, evaluation.\n"
                 "Outputs default to $MODREC_OUT (or ./modrec_out). Run 'modrec defaults' for every config key."};
    app.require_subcommand(1);
    app.footer("Config keys (key = default):\n" + config_text(RunConfig{}));

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "key=value config file (see 'defaults')");
        sub->add_option("--threads", common.threads, "cap on worker threads")->check(CLI::PositiveNumber);
    };

    std::string in, out, model, models, snr_list, which = "test";
    std::optional<std::uint64_t> seed;

    auto* defaults = app.add_subcommand("defaults", "print every config key with its default and meaning");
    auto* generate = app.add_subcommand("generate", "synthesize a labeled dataset file and its JSON sidecar");
    add_common(generate);
    generate->add_option("--out", out, "dataset path (default $MODREC_OUT/dataset.rmd)");
    generate->add_option("--seed", seed, "override the config's master seed");

    auto* features = app.add_subcommand("features", "write the 32 expert features of every frame as CSV");
    add_common(features);
    features->add_option("--in", in, "dataset file")->required();
    features->add_option("--out", out, "CSV path (default $MODREC_OUT/features.csv)");

    auto* train = app.add_subcommand("train", "train one model; writes model.rmm, history.csv, manifest.json");
    add_common(train);
    train->add_option("--in", in, "dataset file")->required();
    train->add_option("--model", model, "cnn, cnn2, dnn-feat, knn1, gnb, tree or svm (overrides config)");
    train->add_option("--out", out, "output directory (default $MODREC_OUT/train_<model>)");

    auto* eval = app.add_subcommand("eval", "evaluate a model; writes summary.json, CSVs and snr_curve.svg");
    add_common(eval);
    eval->add_option("--in", in, "dataset file")->required();
    eval->add_option("--model", model, "model file written by 'train'")->required();
    eval->add_option("--out", out, "report directory (default $MODREC_OUT/eval_<model>)");
    eval->add_option("--snr", snr_list, "comma list of SNR levels for per-SNR confusion matrices");
    eval->add_option("--split", which, "train, val, test or all (default test)");

    auto* bench = app.add_subcommand("bench", "time training and fixed-batch classification per model");
    add_common(bench);
    bench->add_option("--in", in, "dataset file")->required();
    bench->add_option("--models", models, "comma list of models")->required();
    bench->add_option("--out", out, "report directory (default $MODREC_OUT/bench)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*defaults) return cmd_defaults();
        if (*generate) return cmd_generate(common, out, seed);
        if (*features) return cmd_features(common, in, out);
        if (*train) return cmd_train(common, in, model, out);
        if (*eval) return cmd_eval(common, in, model, out, snr_list, which);
        if (*bench) return cmd_bench(common, in, models, out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}

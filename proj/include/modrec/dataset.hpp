// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "modrec/binary_io.hpp"
#include "modrec/channel.hpp"
#include "modrec/error.hpp"
#include "modrec/iqcore.hpp"
#include "modrec/modem.hpp"
#include "modrec/rng.hpp"

namespace modrec {

struct LabeledFrame {
    IqFrame frame;
    ModClass cls = ModClass::BPSK;
    int snr = 0;

    friend bool operator==(const LabeledFrame&, const LabeledFrame&) = default;
};

/// Frames plus the id of the generated signal each frame was cut from.
/// Windows of one signal overlap, so splits keep a signal's frames together.
struct Dataset {
    std::vector<LabeledFrame> frames;
    std::vector<std::uint64_t> groups;
    nlohmann::json manifest = nlohmann::json::object();

    std::size_t size() const noexcept { return frames.size(); }
    bool empty() const noexcept { return frames.empty(); }

    /// Indices where a new source group begins.
    std::vector<std::size_t> group_starts() const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < groups.size(); ++i)
            if (i == 0 || groups[i] != groups[i - 1]) out.push_back(i);
        return out;
    }

    /// Samples, labels and grouping (up to renumbering of the contiguous
    /// groups); the manifest is descriptive only.
    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.frames == b.frames && a.group_starts() == b.group_starts();
    }
};

using CellKey = std::pair<ModClass, int>;

inline std::map<CellKey, std::size_t> cell_counts(const std::vector<LabeledFrame>& frames) {
    std::map<CellKey, std::size_t> out;
    for (const auto& f : frames) ++out[{f.cls, f.snr}];
    return out;
}

inline nlohmann::json counts_json(const std::vector<LabeledFrame>& frames) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& [key, n] : cell_counts(frames))
        cells.push_back({{"class", std::string(class_name(key.first))}, {"snr", key.second}, {"frames", n}});
    return cells;
}

inline nlohmann::json class_map_json() {
    nlohmann::json m = nlohmann::json::object();
    for (ModClass c : all_classes) m[std::to_string(class_id(c))] = std::string(class_name(c));
    return m;
}

/// Re-derives the count fields of the manifest from the frames.
inline void refresh_manifest(Dataset& ds) {
    ds.manifest["class_map"] = class_map_json();
    ds.manifest["n_frames"] = ds.frames.size();
    ds.manifest["cells"] = counts_json(ds.frames);
}

// ---------------------------------------------------------------------------
// Segmentation

inline std::vector<IqFrame> segment(std::span<const Cpx> stream, std::size_t window = IqFrame::length,
                                    std::size_t step = 64) {
    if (window != IqFrame::length) throw Error("window must be 128 samples");
    if (step == 0) throw Error("step must be positive");
    if (stream.size() < window) throw Error("stream shorter than window");
    const std::size_t count = (stream.size() - window) / step + 1;
    std::vector<IqFrame> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) out.emplace_back(stream.subspan(k * step, window));
    return out;
}

// ---------------------------------------------------------------------------
// Generation

struct GenerationConfig {
    std::vector<ModClass> classes{all_classes.begin(), all_classes.end()};
    std::vector<int> snrs{snr_levels.begin(), snr_levels.end()};
    std::size_t signals_per_cell = 200;
    std::size_t windows_per_signal = 20;
    std::size_t step = 64;
    /// Per-cell signal counts that replace signals_per_cell.
    std::map<CellKey, std::size_t> cell_signals;
    ModemConfig modem;
    ChannelParams channel;  ///< snr_db is overwritten per cell
    std::uint64_t seed = 1;
    unsigned threads = 1;

    std::size_t signals_for(ModClass c, int snr) const {
        auto it = cell_signals.find({c, snr});
        return it == cell_signals.end() ? signals_per_cell : it->second;
    }

    std::size_t signal_length() const { return (windows_per_signal - 1) * step + IqFrame::length; }

    void validate() const {
        if (classes.empty()) throw ConfigError("no classes requested");
        if (snrs.empty()) throw ConfigError("no SNR levels requested");
        for (int s : snrs)
            if (!is_snr_level(s)) throw ConfigError("SNR " + std::to_string(s) + " is not a dataset level");
        if (windows_per_signal == 0) throw ConfigError("windows_per_signal must be >= 1");
        if (step == 0) throw ConfigError("step must be >= 1");
        if (threads == 0) throw ConfigError("threads must be >= 1");
        modem.validate();
        ChannelParams p = channel;
        p.snr_db = 0.0;
        p.validate();
    }
};

/// Seed of one generated signal. Depends only on the cell and the signal's
/// index inside it, so a cell's content does not change when other cells are
/// added or removed from the request.
inline SeedSpec signal_seed(std::uint64_t master, ModClass c, int snr, std::size_t index) {
    const std::uint64_t cell = class_id(c) * snr_levels.size() + snr_index(snr);
    return {master, (cell << 32) | static_cast<std::uint64_t>(index)};
}

/// Rounds to the nearest float so that the on-disk float32 copy is exact.
inline Cpx to_float_precision(Cpx z) {
    return {static_cast<double>(static_cast<float>(z.real())), static_cast<double>(static_cast<float>(z.imag()))};
}

/// One source signal through the channel, cut into unit-power frames.
inline std::vector<IqFrame> generate_frames(const GenerationConfig& cfg, ModClass c, int snr, SeedSpec seed) {
    ChannelParams p = cfg.channel;
    p.snr_db = snr;
    const std::size_t n_out = cfg.signal_length();
    const Signal tx = generate_signal(c, required_input_length(p, n_out), cfg.modem, seed);
    const Signal rx = normalize_power(apply_channel(tx, p, seed, n_out));
    std::vector<IqFrame> frames = segment(rx, IqFrame::length, cfg.step);
    for (IqFrame& f : frames) {
        Signal s = normalize_power(f.samples());
        for (Cpx& z : s) z = to_float_precision(z);
        f = IqFrame(s);
    }
    return frames;
}

inline nlohmann::json modem_json(const ModemConfig& m) {
    return {{"sps", m.sps},
            {"rrc_beta", m.rrc_beta},
            {"rrc_span", m.rrc_span},
            {"fsk_mod_index", m.fsk_mod_index},
            {"fm_deviation", m.fm_deviation},
            {"am_depth", m.am_depth},
            {"hilbert_taps", m.hilbert_taps},
            {"silence_period", m.silence_period},
            {"silence_len", m.silence_len}};
}

inline nlohmann::json channel_json(const ChannelParams& p) {
    return {{"cfo_walk_std", p.cfo_walk_std}, {"cfo_init_max", p.cfo_init_max}, {"clk_walk_std", p.clk_walk_std},
            {"clk_init_max", p.clk_init_max}, {"n_taps", p.n_taps},             {"pdp_decay", p.pdp_decay},
            {"max_doppler", p.max_doppler}};
}

inline Dataset build_dataset(const GenerationConfig& cfg) {
    cfg.validate();
    struct Task {
        ModClass cls;
        int snr;
        std::size_t index;
    };
    std::vector<Task> tasks;
    for (ModClass c : cfg.classes)
        for (int s : cfg.snrs)
            for (std::size_t i = 0, n = cfg.signals_for(c, s); i < n; ++i) tasks.push_back({c, s, i});

    std::vector<std::vector<IqFrame>> results(tasks.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t t; (t = next.fetch_add(1)) < tasks.size();) {
            try {
                const Task& k = tasks[t];
                results[t] = generate_frames(cfg, k.cls, k.snr, signal_seed(cfg.seed, k.cls, k.snr, k.index));
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = tasks.size();
            }
        }
    };
    const unsigned n_threads = std::min<std::size_t>(cfg.threads, std::max<std::size_t>(tasks.size(), 1));
    std::vector<std::jthread> pool;
    for (unsigned i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    pool.clear();
    if (failure) std::rethrow_exception(failure);

    Dataset ds;
    ds.frames.reserve(tasks.size() * cfg.windows_per_signal);
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        for (IqFrame& f : results[t]) {
            ds.frames.push_back({std::move(f), tasks[t].cls, tasks[t].snr});
            ds.groups.push_back(t);
        }
    }

    nlohmann::json classes = nlohmann::json::array();
    for (ModClass c : cfg.classes) classes.push_back(std::string(class_name(c)));
    ds.manifest = {{"format", "RMD1"},
                   {"version", 1},
                   {"frame_len", IqFrame::length},
                   {"window", IqFrame::length},
                   {"step", cfg.step},
                   {"master_seed", cfg.seed},
                   {"signal_seed", "stream_id = ((class_id * 21 + snr_index) << 32) | signal_index"},
                   {"classes", classes},
                   {"snrs", cfg.snrs},
                   {"signals_per_cell", cfg.signals_per_cell},
                   {"windows_per_signal", cfg.windows_per_signal},
                   {"normalization", "unit mean power per frame"},
                   {"modem", modem_json(cfg.modem)},
                   {"channel", channel_json(cfg.channel)}};
    refresh_manifest(ds);
    return ds;
}

// ---------------------------------------------------------------------------
// Binary container

inline constexpr char dataset_magic[4] = {'R', 'M', 'D', '1'};
inline constexpr std::uint16_t dataset_version = 1;

inline std::filesystem::path sidecar_path(const std::filesystem::path& path) {
    std::filesystem::path p = path;
    return p.replace_extension(".json");
}

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    ByteWriter w;
    for (char c : dataset_magic) w.put<std::uint8_t>(static_cast<std::uint8_t>(c));
    w.put<std::uint16_t>(dataset_version);
    w.put<std::uint64_t>(ds.frames.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(IqFrame::length));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(num_classes));
    for (const LabeledFrame& f : ds.frames) {
        w.put<std::uint16_t>(static_cast<std::uint16_t>(class_id(f.cls)));
        w.put<std::int16_t>(static_cast<std::int16_t>(f.snr));
        for (const Cpx& z : f.frame.samples()) {
            w.put<float>(static_cast<float>(z.real()));
            w.put<float>(static_cast<float>(z.imag()));
        }
    }
    return w.take();
}

/// Parses the frame records; group ids are filled in by the caller.
inline std::vector<LabeledFrame> decode_frames(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    const auto magic = r.get_bytes(4);
    if (!std::equal(magic.begin(), magic.end(), dataset_magic)) throw ParseError("bad magic", 0);
    const std::size_t version_at = r.offset();
    const auto version = r.get<std::uint16_t>();
    if (version != dataset_version) throw ParseError("unsupported version " + std::to_string(version), version_at);
    const auto n_frames = r.get<std::uint64_t>();
    const std::size_t len_at = r.offset();
    const auto frame_len = r.get<std::uint32_t>();
    if (frame_len != IqFrame::length) throw ParseError("frame_len must be 128", len_at);
    const std::size_t classes_at = r.offset();
    const auto n_classes = r.get<std::uint16_t>();
    if (n_classes != num_classes) throw ParseError("n_classes must be 11", classes_at);

    constexpr std::size_t record = 4 + IqFrame::length * 8;
    std::vector<LabeledFrame> frames;
    frames.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n_frames, r.remaining() / record)));
    Signal buf(IqFrame::length);
    for (std::uint64_t k = 0; k < n_frames; ++k) {
        const std::size_t at = r.offset();
        const auto cls = r.get<std::uint16_t>();
        if (cls >= num_classes) throw ParseError("class id " + std::to_string(cls) + " out of range", at);
        const auto snr = r.get<std::int16_t>();
        if (!is_snr_level(snr)) throw ParseError("SNR label " + std::to_string(snr) + " is not a level", at + 2);
        for (Cpx& z : buf) {
            const std::size_t sample_at = r.offset();
            const float re = r.get<float>();
            const float im = r.get<float>();
            if (!std::isfinite(re) || !std::isfinite(im)) throw ParseError("non-finite sample", sample_at);
            z = {re, im};
        }
        frames.push_back({IqFrame(buf), class_from_id(cls), snr});
    }
    if (!r.at_end())
        throw ParseError("header declares " + std::to_string(n_frames) + " frames but " +
                             std::to_string(r.remaining()) + " bytes follow the last one",
                         r.offset());
    return frames;
}

/// Writes <path> and the JSON manifest next to it (same basename, .json).
inline void save(const Dataset& ds, const std::filesystem::path& path) {
    if (ds.groups.size() != ds.frames.size()) throw Error("dataset group ids do not match frame count");
    std::unordered_set<std::uint64_t> seen;
    for (std::size_t i = 0; i < ds.groups.size(); ++i)
        if ((i == 0 || ds.groups[i] != ds.groups[i - 1]) && !seen.insert(ds.groups[i]).second)
            throw Error("frames of one source signal must be contiguous");
    const std::vector<std::uint8_t> bytes = encode_dataset(ds);
    write_file(path, bytes);

    nlohmann::json m = ds.manifest;
    m["n_frames"] = ds.frames.size();
    m["class_map"] = class_map_json();
    m["cells"] = counts_json(ds.frames);
    m["sha256"] = sha256_hex(bytes);
    m["group_starts"] = ds.group_starts();
    write_text(sidecar_path(path), m.dump(2) + "\n");
}

/// Reads a dataset and checks it against its manifest (checksum and counts).
inline Dataset load(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    Dataset ds;
    ds.frames = decode_frames(bytes);

    const auto side = sidecar_path(path);
    if (!std::filesystem::exists(side)) throw Error("missing manifest " + side.string());
    const std::vector<std::uint8_t> text = read_file(side);
    try {
        ds.manifest = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
    }
    const auto& m = ds.manifest;
    if (!m.is_object()) throw Error("manifest must be a JSON object");
    if (m.value("sha256", std::string()) != sha256_hex(bytes)) throw Error("dataset checksum does not match manifest");
    if (m.value("n_frames", std::uint64_t{0}) != ds.frames.size())
        throw Error("manifest frame count does not match dataset");
    if (m.value("cells", nlohmann::json::array()) != counts_json(ds.frames))
        throw Error("manifest cell counts do not match dataset");

    ds.groups.assign(ds.frames.size(), 0);
    const auto starts = m.value("group_starts", std::vector<std::size_t>{});
    if (!ds.frames.empty() && (starts.empty() || starts.front() != 0)) throw Error("manifest group_starts is invalid");
    for (std::size_t g = 0; g < starts.size(); ++g) {
        const std::size_t lo = starts[g];
        const std::size_t hi = g + 1 < starts.size() ? starts[g + 1] : ds.frames.size();
        if (lo >= hi || hi > ds.frames.size()) throw Error("manifest group_starts is invalid");
        std::fill(ds.groups.begin() + lo, ds.groups.begin() + hi, g);
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    double train_frac = 0.6;
    double val_frac = 0.2;
    double test_frac = 0.2;
    SeedSpec seed{1, 0};

    void validate() const {
        if (!(train_frac > 0.0 && val_frac > 0.0 && test_frac > 0.0))
            throw ConfigError("split fractions must be positive");
        if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
            throw ConfigError("split fractions must sum to 1");
    }
};

struct SplitResult {
    Dataset train, val, test;
};

/// Largest-remainder apportionment of n items to fractions.
inline std::array<std::size_t, 3> apportion(std::size_t n, const std::array<double, 3>& frac) {
    std::array<std::size_t, 3> out{};
    std::array<double, 3> rem{};
    std::size_t used = 0;
    for (int k = 0; k < 3; ++k) {
        const double exact = frac[k] * static_cast<double>(n);
        out[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        rem[k] = exact - static_cast<double>(out[k]);
        used += out[k];
    }
    while (used < n) {
        const auto k = static_cast<std::size_t>(std::max_element(rem.begin(), rem.end()) - rem.begin());
        ++out[k];
        rem[k] = -1.0;
        ++used;
    }
    return out;
}

/// Stratified by (class, snr); within a cell the source-signal groups are
/// shuffled with a seed derived from the cell and cut proportionally.
inline SplitResult split(const Dataset& ds, const SplitSpec& spec) {
    spec.validate();
    if (ds.groups.size() != ds.frames.size()) throw Error("dataset group ids do not match frame count");

    std::map<CellKey, std::vector<std::uint64_t>> cell_groups;
    std::map<std::uint64_t, CellKey> group_cell;
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        const CellKey key{ds.frames[i].cls, ds.frames[i].snr};
        auto [it, fresh] = group_cell.emplace(ds.groups[i], key);
        if (fresh)
            cell_groups[key].push_back(ds.groups[i]);
        else if (it->second != key)
            throw Error("source group " + std::to_string(ds.groups[i]) + " spans two cells");
    }

    std::map<std::uint64_t, int> assignment;
    const std::array<double, 3> frac{spec.train_frac, spec.val_frac, spec.test_frac};
    for (auto& [key, groups] : cell_groups) {
        const std::uint64_t cell = class_id(key.first) * snr_levels.size() + snr_index(key.second);
        Rng rng(SeedSpec{spec.seed.master_seed, (spec.seed.stream_id << 16) | cell}.derive(stream::split));
        rng.shuffle(std::span(groups));
        const auto n = apportion(groups.size(), frac);
        if (n[0] == 0 || n[1] == 0 || n[2] == 0)
            throw Error("cell (" + std::string(class_name(key.first)) + ", " + std::to_string(key.second) +
                        " dB) has " + std::to_string(groups.size()) + " source signals, too few for three splits");
        for (std::size_t j = 0; j < groups.size(); ++j) assignment[groups[j]] = j < n[0] ? 0 : j < n[0] + n[1] ? 1 : 2;
    }

    SplitResult out;
    std::array<Dataset*, 3> parts{&out.train, &out.val, &out.test};
    for (std::size_t i = 0; i < ds.frames.size(); ++i) {
        Dataset& d = *parts[static_cast<std::size_t>(assignment.at(ds.groups[i]))];
        d.frames.push_back(ds.frames[i]);
        d.groups.push_back(ds.groups[i]);
    }
    static constexpr const char* names[] = {"train", "val", "test"};
    for (int k = 0; k < 3; ++k) {
        parts[k]->manifest = ds.manifest;
        parts[k]->manifest["split"] = {{"name", names[k]},
                                      {"fractions", frac},
                                      {"seed", {spec.seed.master_seed, spec.seed.stream_id}}};
        refresh_manifest(*parts[k]);
    }
    return out;
}

} // namespace modrec

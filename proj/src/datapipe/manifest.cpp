#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <thread>

#include "msvdd/datapipe.hpp"
#include "msvdd/errors.hpp"
#include "msvdd/scoring.hpp"

namespace msvdd::data {

using nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

void write_imu_csv(const fs::path& path, std::span<const double> imu, double rate, const std::string& column) {
    std::string text = "time," + column + "\n";
    for (std::size_t t = 0; t < imu.size(); ++t) {
        text += eval::format_double(static_cast<double>(t) / rate);
        text += ',';
        text += eval::format_double(imu[t]);
        text += '\n';
    }
    write_text(path, text);
}

} // namespace

Manifest read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError("manifest " + path.string() + ": " + e.what());
    }
    Manifest m;
    m.base = path.parent_path();
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kManifestVersion) {
            throw FormatError("manifest: format_version " + std::to_string(version) + " unsupported (expected " +
                              std::to_string(kManifestVersion) + ")");
        }
        m.audio_length = j.at("audio_length").get<std::size_t>();
        m.imu_length = j.at("imu_length").get<std::size_t>();
        m.window_seconds = j.at("window_seconds").get<double>();
        m.imu_rate = j.at("imu_rate").get<double>();
        m.imu_column = j.value("imu_column", m.imu_column);
        for (const auto& e : j.at("entries")) {
            ManifestEntry entry;
            entry.id = e.at("id").get<std::string>();
            entry.audio = e.at("audio").get<std::string>();
            entry.imu = e.at("imu").get<std::string>();
            entry.split = e.at("split").get<std::string>();
            if (e.contains("label") && !e["label"].is_null()) entry.label = e["label"].get<std::string>();
            m.entries.push_back(std::move(entry));
        }
    } catch (const json::exception& e) {
        throw FormatError("manifest " + path.string() + ": " + e.what());
    }
    return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
    json entries = json::array();
    for (const auto& e : m.entries) {
        entries.push_back({{"id", e.id},
                           {"audio", e.audio},
                           {"imu", e.imu},
                           {"label", e.label ? json(*e.label) : json(nullptr)},
                           {"split", e.split}});
    }
    json j{{"format_version", kManifestVersion},
           {"audio_length", m.audio_length},
           {"imu_length", m.imu_length},
           {"window_seconds", m.window_seconds},
           {"imu_rate", m.imu_rate},
           {"imu_column", m.imu_column},
           {"entries", entries}};
    write_text(path, j.dump(2) + "\n");
}

Manifest export_synth(const SynthData& data, const SynthConfig& config, const fs::path& out) {
    config.validate();
    Manifest m;
    m.audio_length = config.audio_length;
    m.imu_length = config.imu_length;
    m.window_seconds = config.window_seconds;
    m.imu_rate = config.imu_rate();
    m.base = out;

    const auto rate = static_cast<std::uint32_t>(std::llround(config.audio_rate()));
    std::error_code ec;
    for (const char* split : {"train", "test"}) {
        fs::create_directories(out / split, ec);
        if (ec) throw IoError("cannot create " + (out / split).string() + ": " + ec.message());
        const auto& windows = std::string(split) == "train" ? data.train : data.test;
        for (const auto& w : windows) {
            const std::string audio_rel = std::string(split) + "/" + w.id + ".wav";
            const std::string imu_rel = std::string(split) + "/" + w.id + ".csv";
            WavAudio audio;
            audio.sample_rate = rate;
            audio.left.resize(config.audio_length);
            audio.right.resize(config.audio_length);
            for (std::size_t t = 0; t < config.audio_length; ++t) {
                audio.left[t] = w.audio[2 * t];
                audio.right[t] = w.audio[2 * t + 1];
            }
            write_wav(out / audio_rel, audio, WavEncoding::float32);
            write_imu_csv(out / imu_rel, w.imu, m.imu_rate, m.imu_column);
            m.entries.push_back({w.id, audio_rel, imu_rel, w.label, split});
        }
    }
    write_manifest(out / "manifest.json", m);
    return m;
}

std::size_t loader_threads() {
    const char* env = std::getenv("MSVDD_THREADS");
    if (!env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    return (end != env && *end == '\0' && v > 0) ? static_cast<std::size_t>(v) : 1;
}

WindowedDataset load_split(const Manifest& manifest, const std::string& split,
                           const std::optional<NormalizationStats>& stats, const LoadOptions& options) {
    if (manifest.audio_length == 0 || manifest.imu_length == 0) throw FormatError("manifest: zero window length");
    const double audio_rate = static_cast<double>(manifest.audio_length) / manifest.window_seconds;
    const double imu_rate = static_cast<double>(manifest.imu_length) / manifest.window_seconds;
    if (std::abs(manifest.imu_rate - imu_rate) > 1e-9 * imu_rate) {
        throw DimensionError("manifest: imu_rate " + std::to_string(manifest.imu_rate) + " Hz does not give L_I = " +
                             std::to_string(manifest.imu_length) + " samples per window");
    }

    std::vector<const ManifestEntry*> entries;
    for (const auto& e : manifest.entries) {
        if (e.split == split) entries.push_back(&e);
    }

    std::vector<Streams> streams(entries.size());
    std::vector<std::exception_ptr> errors(entries.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < entries.size(); i = next++) {
            try {
                const auto& e = *entries[i];
                auto audio = load_wav(manifest.base / e.audio);
                auto imu = load_csv_timeseries(manifest.base / e.imu, manifest.imu_column, "time");
                streams[i] = decimate_streams(audio, imu, imu_rate, audio_rate, options.preprocess);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, entries.size()));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }

    WindowedDataset ds;
    ds.audio_length = manifest.audio_length;
    ds.imu_length = manifest.imu_length;
    if (entries.empty()) {
        ds.stats = stats;
        return ds;
    }
    ds.stats = stats ? *stats : fit_normalization(streams);

    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = *entries[i];
        auto windows = segment_windows(normalize(streams[i], *ds.stats, options.preprocess), manifest.audio_length,
                                       manifest.imu_length, manifest.window_seconds);
        for (auto& w : windows) {
            w.id = windows.size() == 1 ? e.id : e.id + ":" + w.id;
            w.source = e.id;
            w.label = e.label;
            ds.windows.push_back(std::move(w));
        }
    }
    return ds;
}

} // namespace msvdd::data

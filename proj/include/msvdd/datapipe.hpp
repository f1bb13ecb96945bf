#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msvdd/model.hpp"

namespace msvdd::data {

namespace fs = std::filesystem;

// ---- raw files ------------------------------------------------------------

struct WavAudio {
    std::uint32_t sample_rate = 0;
    std::vector<double> left;
    std::vector<double> right;  // copy of left for mono files
    std::size_t frames() const { return left.size(); }
};

// RIFF/WAVE with PCM16 or IEEE float32 samples, 1 or 2 channels.
WavAudio load_wav(const fs::path& path);
WavAudio parse_wav(std::span<const std::uint8_t> bytes);

enum class WavEncoding { pcm16, float32 };
void write_wav(const fs::path& path, const WavAudio& audio, WavEncoding encoding = WavEncoding::float32);

struct TimeSeries {
    std::vector<double> time;  // empty when no time column was requested
    std::vector<double> values;
};

// Reads `column` from a headed CSV. When `time_column` is non-empty its
// values must be strictly increasing.
TimeSeries load_csv_timeseries(const fs::path& path, const std::string& column, const std::string& time_column = "time");
TimeSeries parse_csv_timeseries(std::istream& in, const std::string& column, const std::string& time_column = "time");

// ---- preprocessing --------------------------------------------------------

struct PreprocessConfig {
    bool boxcar = true;  // average each block before striding; plain striding otherwise
    std::size_t smooth_width = 5;
};

// Keeps one value per block of `factor` samples; a trailing partial block is dropped.
std::vector<double> decimate(std::span<const double> x, std::size_t factor, bool boxcar = true);

struct ChannelStats {
    double mean = 0.0;
    double std = 1.0;  // population standard deviation
};

// Throws ContractError for empty or constant input.
ChannelStats channel_stats(std::span<const double> x);
std::vector<double> zscore(std::span<const double> x, const ChannelStats& stats);
// Centered moving average with zero padding; width must be odd.
std::vector<double> smooth(std::span<const double> x, std::size_t width);

struct Streams {
    double audio_rate = 0.0;
    double imu_rate = 0.0;
    std::vector<double> left;
    std::vector<double> right;
    std::vector<double> imu;
};

struct NormalizationStats {
    ChannelStats left;
    ChannelStats right;
    ChannelStats imu;
};

nlohmann::json stats_to_json(const NormalizationStats& stats);
NormalizationStats stats_from_json(const nlohmann::json& j);

// Decimates audio to `audio_rate`; the raw rate must be an integer multiple of it.
Streams decimate_streams(const WavAudio& audio, const TimeSeries& imu, double imu_rate, double audio_rate,
                         const PreprocessConfig& config);
// Statistics over the concatenation of all given streams.
NormalizationStats fit_normalization(std::span<const Streams> streams);
// z-score with the given statistics, then smoothing.
Streams normalize(const Streams& streams, const NormalizationStats& stats, const PreprocessConfig& config);

// ---- windows --------------------------------------------------------------

struct Window {
    std::string id;
    std::string source;
    double start_time = 0.0;
    std::vector<double> audio;  // L_A x 2 row-major
    std::vector<double> imu;    // L_I
    std::optional<std::string> label;  // "normal", "collision", "fault", ...

    bool is_anomaly() const { return label && *label != "normal"; }
};

struct WindowedDataset {
    std::size_t audio_length = 0;
    std::size_t imu_length = 0;
    std::vector<Window> windows;
    std::optional<NormalizationStats> stats;
};

// Non-overlapping (by default) windows of window_seconds; trailing remainder
// dropped. Audio and IMU must yield the same number of windows.
std::vector<Window> segment_windows(const Streams& streams, std::size_t audio_length, std::size_t imu_length,
                                    double window_seconds = 2.0, double hop_seconds = 0.0);

model::WindowTensors to_tensors(const Window& window);

// ---- synthetic telemetry --------------------------------------------------

struct SynthConfig {
    std::uint64_t seed = 42;
    std::size_t train_normal = 1000;
    std::size_t test_normal = 200;
    std::size_t test_collision = 100;
    std::size_t test_fault = 100;
    std::size_t audio_length = 880;
    std::size_t imu_length = 200;
    double window_seconds = 2.0;
    double noise_floor = 0.05;
    double hum_hz = 120.0;
    double hum_amplitude = 0.1;
    double imu_vibration = 0.05;
    double collision_min = 0.6;
    double collision_max = 1.2;
    double fault_rate_hz = 6.0;
    double fault_amplitude = 0.25;

    void validate() const;
    double audio_rate() const { return static_cast<double>(audio_length) / window_seconds; }
    double imu_rate() const { return static_cast<double>(imu_length) / window_seconds; }
};

struct SynthData {
    std::vector<Window> train;  // labels "normal"
    std::vector<Window> test;   // shuffled mix of normal, collision, fault
};

// Audio values are rounded to float32 so that a float WAV export round-trips exactly.
SynthData synth_generate(const SynthConfig& config);

// ---- manifest -------------------------------------------------------------

struct ManifestEntry {
    std::string id;
    std::string audio;  // path relative to the manifest directory
    std::string imu;
    std::optional<std::string> label;
    std::string split;
};

struct Manifest {
    std::size_t audio_length = 0;
    std::size_t imu_length = 0;
    double window_seconds = 2.0;
    double imu_rate = 0.0;
    std::string imu_column = "velocity_z";
    std::vector<ManifestEntry> entries;
    fs::path base;  // directory the relative paths resolve against
};

Manifest read_manifest(const fs::path& path);
void write_manifest(const fs::path& path, const Manifest& manifest);

// Writes every window as <out>/<split>/<id>.wav and .csv plus <out>/manifest.json.
Manifest export_synth(const SynthData& data, const SynthConfig& config, const fs::path& out);

struct LoadOptions {
    PreprocessConfig preprocess;
    std::size_t threads = 1;
};

// Loads every entry of `split`, decimates, normalizes (fitting statistics on
// this split when `stats` is absent) and cuts windows. Entries keep manifest order.
WindowedDataset load_split(const Manifest& manifest, const std::string& split,
                           const std::optional<NormalizationStats>& stats, const LoadOptions& options = {});

// MSVDD_THREADS if set and positive, else 1.
std::size_t loader_threads();

} // namespace msvdd::data

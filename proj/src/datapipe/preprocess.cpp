#include <cmath>

#include "msvdd/datapipe.hpp"
#include "msvdd/errors.hpp"

namespace msvdd::data {

namespace {

// Integer ratio a / b, or DimensionError.
std::size_t integer_ratio(double a, double b, const std::string& what) {
    const double r = a / b;
    const double rounded = std::round(r);
    if (!(b > 0.0) || rounded < 1.0 || std::abs(r - rounded) > 1e-9 * rounded) {
        throw DimensionError(what + ": " + std::to_string(a) + " is not an integer multiple of " + std::to_string(b));
    }
    return static_cast<std::size_t>(rounded);
}

} // namespace

std::vector<double> decimate(std::span<const double> x, std::size_t factor, bool boxcar) {
    if (factor == 0) throw ContractError("decimate: factor must be positive");
    const std::size_t n = x.size() / factor;
    std::vector<double> out(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (boxcar) {
            double sum = 0.0;
            for (std::size_t j = 0; j < factor; ++j) sum += x[k * factor + j];
            out[k] = sum / static_cast<double>(factor);
        } else {
            out[k] = x[k * factor];
        }
    }
    return out;
}

ChannelStats channel_stats(std::span<const double> x) {
    if (x.empty()) throw ContractError("channel_stats: empty stream");
    const double n = static_cast<double>(x.size());
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= n;
    const double sd = std::sqrt(var);
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) {
        throw ContractError("channel_stats: zero-variance channel (flat signal, mean " + std::to_string(mean) + ")");
    }
    return {mean, sd};
}

std::vector<double> zscore(std::span<const double> x, const ChannelStats& stats) {
    if (!(stats.std > 0.0)) throw ContractError("zscore: standard deviation must be positive");
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - stats.mean) / stats.std;
    return out;
}

std::vector<double> smooth(std::span<const double> x, std::size_t width) {
    if (width == 0 || width % 2 == 0) throw ContractError("smooth: width must be odd, got " + std::to_string(width));
    const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(width / 2);
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
    std::vector<double> out(x.size());
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::ptrdiff_t k = std::max<std::ptrdiff_t>(0, i - half); k <= std::min(n - 1, i + half); ++k) sum += x[k];
        out[i] = sum / static_cast<double>(width);
    }
    return out;
}

nlohmann::json stats_to_json(const NormalizationStats& s) {
    auto one = [](const ChannelStats& c) { return nlohmann::json{{"mean", c.mean}, {"std", c.std}}; };
    return {{"audio_left", one(s.left)}, {"audio_right", one(s.right)}, {"imu", one(s.imu)}};
}

NormalizationStats stats_from_json(const nlohmann::json& j) {
    auto one = [&](const char* key) {
        try {
            ChannelStats c{j.at(key).at("mean").get<double>(), j.at(key).at("std").get<double>()};
            if (!(c.std > 0.0)) throw FormatError(std::string("normalization stats: non-positive std for ") + key);
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("normalization stats: ") + e.what());
        }
    };
    return {one("audio_left"), one("audio_right"), one("imu")};
}

Streams decimate_streams(const WavAudio& audio, const TimeSeries& imu, double imu_rate, double audio_rate,
                         const PreprocessConfig& config) {
    const std::size_t factor = integer_ratio(static_cast<double>(audio.sample_rate), audio_rate, "audio sample rate");
    Streams s;
    s.audio_rate = audio_rate;
    s.imu_rate = imu_rate;
    s.left = decimate(audio.left, factor, config.boxcar);
    s.right = decimate(audio.right, factor, config.boxcar);
    s.imu = imu.values;
    return s;
}

NormalizationStats fit_normalization(std::span<const Streams> streams) {
    std::vector<double> left, right, imu;
    for (const auto& s : streams) {
        left.insert(left.end(), s.left.begin(), s.left.end());
        right.insert(right.end(), s.right.begin(), s.right.end());
        imu.insert(imu.end(), s.imu.begin(), s.imu.end());
    }
    return {channel_stats(left), channel_stats(right), channel_stats(imu)};
}

Streams normalize(const Streams& streams, const NormalizationStats& stats, const PreprocessConfig& config) {
    Streams out = streams;
    out.left = smooth(zscore(streams.left, stats.left), config.smooth_width);
    out.right = smooth(zscore(streams.right, stats.right), config.smooth_width);
    out.imu = smooth(zscore(streams.imu, stats.imu), config.smooth_width);
    return out;
}

std::vector<Window> segment_windows(const Streams& streams, std::size_t audio_length, std::size_t imu_length,
                                    double window_seconds, double hop_seconds) {
    if (!(window_seconds > 0.0)) throw ContractError("segment_windows: window length must be positive");
    if (hop_seconds <= 0.0) hop_seconds = window_seconds;
    if (streams.left.size() != streams.right.size()) throw DimensionError("segment_windows: audio channel lengths differ");

    const double la = streams.audio_rate * window_seconds, li = streams.imu_rate * window_seconds;
    if (std::abs(la - static_cast<double>(audio_length)) > 1e-6 || std::abs(li - static_cast<double>(imu_length)) > 1e-6) {
        throw DimensionError("segment_windows: rates give " + std::to_string(la) + " audio / " + std::to_string(li) +
                             " imu samples per window, expected L_A = " + std::to_string(audio_length) +
                             ", L_I = " + std::to_string(imu_length));
    }
    const std::size_t hop_a = static_cast<std::size_t>(std::llround(streams.audio_rate * hop_seconds));
    const std::size_t hop_i = static_cast<std::size_t>(std::llround(streams.imu_rate * hop_seconds));
    if (hop_a == 0 || hop_i == 0) throw ContractError("segment_windows: hop shorter than one sample");

    auto count = [](std::size_t n, std::size_t len, std::size_t hop) { return n < len ? 0 : (n - len) / hop + 1; };
    const std::size_t na = count(streams.left.size(), audio_length, hop_a);
    const std::size_t ni = count(streams.imu.size(), imu_length, hop_i);
    if (na != ni) {
        throw DimensionError("segment_windows: audio yields " + std::to_string(na) + " windows but imu yields " +
                             std::to_string(ni) + " (streams not time-aligned)");
    }

    std::vector<Window> out(na);
    for (std::size_t k = 0; k < na; ++k) {
        auto& w = out[k];
        w.id = std::to_string(k);
        w.start_time = static_cast<double>(k) * hop_seconds;
        w.audio.resize(2 * audio_length);
        for (std::size_t t = 0; t < audio_length; ++t) {
            w.audio[2 * t] = streams.left[k * hop_a + t];
            w.audio[2 * t + 1] = streams.right[k * hop_a + t];
        }
        w.imu.assign(streams.imu.begin() + static_cast<std::ptrdiff_t>(k * hop_i),
                     streams.imu.begin() + static_cast<std::ptrdiff_t>(k * hop_i + imu_length));
    }
    return out;
}

model::WindowTensors to_tensors(const Window& window) {
    const std::size_t la = window.audio.size() / 2;
    return {nd::Tensor({la, 2}, window.audio), nd::Tensor({window.imu.size()}, window.imu)};
}

} // namespace msvdd::data

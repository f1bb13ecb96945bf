#include <cmath>
#include <cstdio>
#include <numbers>

#include "msvdd/datapipe.hpp"
#include "msvdd/errors.hpp"
#include "msvdd/rng.hpp"

namespace msvdd::data {

void SynthConfig::validate() const {
    if (audio_length == 0 || imu_length == 0) throw ContractError("synth: window lengths must be positive");
    if (!(window_seconds > 0.0)) throw ContractError("synth: window_seconds must be positive");
    const double ra = audio_rate();
    if (std::abs(ra - std::round(ra)) > 1e-9) {
        throw ContractError("synth: audio rate " + std::to_string(ra) + " Hz is not an integer");
    }
    if (!(hum_hz > 0.0) || hum_hz >= ra / 2.0) throw ContractError("synth: hum frequency must lie below Nyquist");
    if (noise_floor < 0.0 || hum_amplitude < 0.0 || imu_vibration < 0.0 || fault_amplitude < 0.0) {
        throw ContractError("synth: amplitudes must be non-negative");
    }
    if (!(collision_min >= 0.0 && collision_min <= collision_max)) {
        throw ContractError("synth: collision amplitude range must satisfy 0 <= min <= max");
    }
    if (!(fault_rate_hz > 0.0)) throw ContractError("synth: fault rate must be positive");
}

namespace {

enum class Kind { normal, collision, fault };

const char* kind_name(Kind k) {
    switch (k) {
    case Kind::collision: return "collision";
    case Kind::fault: return "fault";
    default: return "normal";
    }
}

std::string numbered(const char* prefix, std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%05zu", prefix, i);
    return buf;
}

Window generate(const SynthConfig& c, Kind kind, Rng& rng) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    const std::size_t la = c.audio_length, li = c.imu_length;
    const double ra = c.audio_rate(), ri = c.imu_rate();

    std::vector<double> left(la), right(la), imu(li);

    // Pink-ish background: AR(1) common source plus weaker per-ear noise.
    const double gain = rng.uniform(0.8, 1.2);
    const double hum_phase = rng.uniform(0.0, two_pi);
    const double hum_amp = c.hum_amplitude * rng.uniform(0.8, 1.2);
    double ar = 0.0;
    for (std::size_t t = 0; t < la; ++t) {
        ar = 0.9 * ar + c.noise_floor * rng.normal();
        const double hum = hum_amp * std::sin(two_pi * c.hum_hz * static_cast<double>(t) / ra + hum_phase);
        left[t] = gain * ar + 0.3 * c.noise_floor * rng.normal() + hum;
        right[t] = gain * ar + 0.3 * c.noise_floor * rng.normal() + 0.9 * hum;
    }

    const double vib_hz = rng.uniform(2.0, 5.0), vib_phase = rng.uniform(0.0, two_pi);
    for (std::size_t t = 0; t < li; ++t) {
        imu[t] = c.imu_vibration * std::sin(two_pi * vib_hz * static_cast<double>(t) / ri + vib_phase) +
                 0.3 * c.imu_vibration * rng.normal();
    }

    if (kind == Kind::collision) {
        // One impact seen by both modalities at the same instant.
        const std::size_t ti = static_cast<std::size_t>(0.1 * ri) + rng.index(static_cast<std::size_t>(0.7 * static_cast<double>(li)));
        const double t0 = static_cast<double>(ti) / ri;
        const double amp = rng.uniform(c.collision_min, c.collision_max);
        for (std::size_t t = ti; t < li; ++t) {
            const double dt = static_cast<double>(t) / ri - t0;
            imu[t] += amp * std::exp(-dt / 0.08) * std::cos(two_pi * 8.0 * dt);
        }
        const std::size_t ta = static_cast<std::size_t>(std::llround(t0 * ra));
        for (std::size_t t = ta; t < la; ++t) {
            const double env = amp * std::exp(-(static_cast<double>(t) / ra - t0) / 0.05);
            const double burst = env * rng.normal();
            left[t] += burst;
            right[t] += 0.9 * burst;
        }
    } else if (kind == Kind::fault) {
        // Periodic rattle from a damaged wheel.
        const double period = 1.0 / c.fault_rate_hz;
        const double phase = rng.uniform(0.0, period);
        for (double tk = phase; tk < c.window_seconds; tk += period) {
            const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
            for (std::size_t t = static_cast<std::size_t>(std::ceil(tk * ri)); t < li; ++t) {
                const double dt = static_cast<double>(t) / ri - tk;
                if (dt > 0.1) break;
                imu[t] += sign * c.fault_amplitude * std::exp(-dt / 0.02);
            }
            for (std::size_t t = static_cast<std::size_t>(std::ceil(tk * ra)); t < la; ++t) {
                const double dt = static_cast<double>(t) / ra - tk;
                if (dt > 0.05) break;
                const double burst = c.fault_amplitude * std::exp(-dt / 0.01) * rng.normal();
                left[t] += burst;
                right[t] += burst;
            }
        }
    }

    Window w;
    w.audio.resize(2 * la);
    for (std::size_t t = 0; t < la; ++t) {
        w.audio[2 * t] = static_cast<double>(static_cast<float>(left[t]));
        w.audio[2 * t + 1] = static_cast<double>(static_cast<float>(right[t]));
    }
    w.imu = std::move(imu);
    w.label = kind_name(kind);
    return w;
}

} // namespace

SynthData synth_generate(const SynthConfig& config) {
    config.validate();
    SynthData out;

    Rng train_rng(config.seed);
    for (std::size_t i = 0; i < config.train_normal; ++i) {
        auto w = generate(config, Kind::normal, train_rng);
        w.id = w.source = numbered("train", i);
        out.train.push_back(std::move(w));
    }

    Rng test_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
    std::vector<Kind> kinds;
    kinds.insert(kinds.end(), config.test_normal, Kind::normal);
    kinds.insert(kinds.end(), config.test_collision, Kind::collision);
    kinds.insert(kinds.end(), config.test_fault, Kind::fault);
    test_rng.shuffle(kinds.begin(), kinds.end());
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        auto w = generate(config, kinds[i], test_rng);
        w.id = w.source = numbered("test", i);
        out.test.push_back(std::move(w));
    }
    return out;
}

} // namespace msvdd::data

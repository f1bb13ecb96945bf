#include <algorithm>
#include <fstream>

#include "msvdd/cli.hpp"
#include "msvdd/model_io.hpp"

namespace msvdd::cli {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}

} // namespace

json synth_config_to_json(const data::SynthConfig& c) {
    return json{{"seed", c.seed},
                {"train_normal", c.train_normal},
                {"test_normal", c.test_normal},
                {"test_collision", c.test_collision},
                {"test_fault", c.test_fault},
                {"audio_length", c.audio_length},
                {"imu_length", c.imu_length},
                {"window_seconds", c.window_seconds},
                {"noise_floor", c.noise_floor},
                {"hum_hz", c.hum_hz},
                {"hum_amplitude", c.hum_amplitude},
                {"imu_vibration", c.imu_vibration},
                {"collision_min", c.collision_min},
                {"collision_max", c.collision_max},
                {"fault_rate_hz", c.fault_rate_hz},
                {"fault_amplitude", c.fault_amplitude}};
}

data::SynthConfig synth_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: \"synth\" must be an object");
    data::SynthConfig c;
    read(j, "seed", c.seed);
    read(j, "train_normal", c.train_normal);
    read(j, "test_normal", c.test_normal);
    read(j, "test_collision", c.test_collision);
    read(j, "test_fault", c.test_fault);
    read(j, "audio_length", c.audio_length);
    read(j, "imu_length", c.imu_length);
    read(j, "window_seconds", c.window_seconds);
    read(j, "noise_floor", c.noise_floor);
    read(j, "hum_hz", c.hum_hz);
    read(j, "hum_amplitude", c.hum_amplitude);
    read(j, "imu_vibration", c.imu_vibration);
    read(j, "collision_min", c.collision_min);
    read(j, "collision_max", c.collision_max);
    read(j, "fault_rate_hz", c.fault_rate_hz);
    read(j, "fault_amplitude", c.fault_amplitude);
    return c;
}

RunConfig run_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    static const char* known[] = {"seed", "mode", "threads", "model", "train", "synth"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError("config: unknown key '" + key + "'");
        }
    }
    RunConfig rc;
    try {
        if (j.contains("model")) {
            rc.model = model::config_from_json(j["model"]);
            rc.model_lengths_set = j["model"].contains("audio_length") || j["model"].contains("imu_length");
        }
        if (j.contains("train")) rc.train = train::train_config_from_json(j["train"]);
    } catch (const FormatError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const ContractError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (j.contains("synth")) rc.synth = synth_config_from_json(j["synth"]);
    if (j.contains("seed")) {
        std::uint64_t seed = 0;
        read(j, "seed", seed);
        rc.synth.seed = rc.train.seed = seed;
    }
    if (j.contains("mode")) {
        std::string mode;
        read(j, "mode", mode);
        try {
            rc.model.mode = model::parse_mode(mode);
        } catch (const ContractError& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    read(j, "threads", rc.threads);
    if (rc.threads == 0) throw ConfigError("config: threads must be positive");
    return rc;
}

RunConfig load_run_config(const std::optional<std::filesystem::path>& path) {
    if (!path) {
        RunConfig rc;
        rc.threads = data::loader_threads();
        return rc;
    }
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config " + path->string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path->string() + ": " + e.what());
    }
    auto rc = run_config_from_json(j);
    if (!j.contains("threads")) rc.threads = data::loader_threads();
    return rc;
}

json run_config_to_json(const RunConfig& c) {
    return json{{"threads", c.threads},
                {"model", model::config_to_json(c.model)},
                {"train", train::train_config_to_json(c.train)},
                {"synth", synth_config_to_json(c.synth)}};
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const NumericalError*>(&e)) return kNumerical;
    if (dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
        dynamic_cast<const IoError*>(&e)) {
        return kData;
    }
    return kUsage;
}

} // namespace msvdd::cli

#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/model_io.hpp"

namespace msvdd::model {

using nlohmann::json;

nlohmann::json config_to_json(const ModelConfig& c) {
    return json{{"audio_length", c.audio_length},
                {"imu_length", c.imu_length},
                {"d", c.d},
                {"s", c.s},
                {"audio_channels", c.audio_channels},
                {"conv_kernel", c.conv_kernel},
                {"conv_stride", c.conv_stride},
                {"conv_padding", c.conv_padding},
                {"imu_token_width", c.imu_token_width},
                {"imu_decoder_hidden", c.imu_decoder_hidden},
                {"alpha1", c.alpha1},
                {"alpha2", c.alpha2},
                {"alpha3", c.alpha3},
                {"epsilon", c.epsilon},
                {"mode", to_string(c.mode)}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("model config: bad value for '") + key + "': " + e.what());
    }
}

} // namespace

ModelConfig config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("model config: expected a JSON object");
    ModelConfig c;
    read(j, "audio_length", c.audio_length);
    read(j, "imu_length", c.imu_length);
    read(j, "d", c.d);
    read(j, "s", c.s);
    read(j, "audio_channels", c.audio_channels);
    read(j, "conv_kernel", c.conv_kernel);
    read(j, "conv_stride", c.conv_stride);
    read(j, "conv_padding", c.conv_padding);
    read(j, "imu_token_width", c.imu_token_width);
    read(j, "imu_decoder_hidden", c.imu_decoder_hidden);
    read(j, "alpha1", c.alpha1);
    read(j, "alpha2", c.alpha2);
    read(j, "alpha3", c.alpha3);
    read(j, "epsilon", c.epsilon);
    std::string mode = to_string(c.mode);
    read(j, "mode", mode);
    c.mode = parse_mode(mode);
    return c;
}

nlohmann::json params_to_json(const ModelParams& params) {
    json out = json::object();
    for (const auto& [name, t] : params.tensors) {
        for (double v : t.values()) {
            if (!std::isfinite(v)) throw NumericalError("parameter '" + name + "' is not finite");
        }
        out[name] = json{{"shape", t.shape()}, {"values", std::vector<double>(t.values().begin(), t.values().end())}};
    }
    return out;
}

ModelParams params_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw FormatError("params: expected a JSON object");
    ModelParams params;
    for (const auto& [name, entry] : j.items()) {
        try {
            auto shape = entry.at("shape").get<nd::Shape>();
            auto values = entry.at("values").get<std::vector<double>>();
            if (values.size() != nd::shape_size(shape)) {
                throw FormatError("param '" + name + "': " + std::to_string(values.size()) + " values for shape " +
                                  nd::shape_str(shape));
            }
            params.tensors.emplace(name, nd::Tensor(std::move(shape), std::move(values)));
        } catch (const json::exception& e) {
            throw FormatError("param '" + name + "': " + e.what());
        }
    }
    return params;
}

nlohmann::json model_to_json(const ModelConfig& config, const ModelParams& params) {
    return json{{"format_version", kFormatVersion}, {"config", config_to_json(config)}, {"params", params_to_json(params)}};
}

std::pair<ModelConfig, ModelParams> model_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("format_version")) throw FormatError("model: missing format_version");
    if (!j["format_version"].is_number_integer() || j["format_version"].get<int>() != kFormatVersion) {
        throw FormatError("model: unsupported format_version " + j["format_version"].dump());
    }
    if (!j.contains("config") || !j.contains("params")) throw FormatError("model: missing config or params");
    auto config = config_from_json(j["config"]);
    try {
        config.validate();
    } catch (const Error& e) {
        throw FormatError(std::string("model: invalid config: ") + e.what());
    }
    auto params = params_from_json(j["params"]);
    check_params(config, params);
    return {config, std::move(params)};
}

void check_params(const ModelConfig& config, const ModelParams& params) {
    const auto expected = init_params(config, 0);
    for (const auto& [name, t] : expected.tensors) {
        auto it = params.tensors.find(name);
        if (it == params.tensors.end()) throw FormatError("model: missing parameter '" + name + "'");
        if (it->second.shape() != t.shape()) {
            throw FormatError("model: parameter '" + name + "' has shape " + nd::shape_str(it->second.shape()) +
                              ", expected " + nd::shape_str(t.shape()));
        }
    }
    for (const auto& [name, t] : params.tensors) {
        if (!expected.tensors.contains(name)) throw FormatError("model: unexpected parameter '" + name + "'");
    }
}

} // namespace msvdd::model

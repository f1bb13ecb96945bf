#pragma once

#include <json.hpp>

#include "msvdd/model.hpp"

namespace msvdd::model {

inline constexpr int kFormatVersion = 1;

nlohmann::json config_to_json(const ModelConfig& config);
// Missing keys keep their defaults; wrong types throw FormatError.
ModelConfig config_from_json(const nlohmann::json& j);

// {"name": {"shape": [...], "values": [...]}, ...}, row-major.
nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

// Document with format_version, config and params.
nlohmann::json model_to_json(const ModelConfig& config, const ModelParams& params);
std::pair<ModelConfig, ModelParams> model_from_json(const nlohmann::json& j);

// Every tensor of `params` matches the shapes `config` initializes; throws FormatError otherwise.
void check_params(const ModelConfig& config, const ModelParams& params);

} // namespace msvdd::model

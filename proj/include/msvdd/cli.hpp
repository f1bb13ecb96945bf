#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "msvdd/datapipe.hpp"
#include "msvdd/errors.hpp"
#include "msvdd/model.hpp"
#include "msvdd/trainer.hpp"

namespace msvdd::cli {

// Bad config file or flag combination (exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumerical = 3 };

// Everything a command may need, merged from a JSON file and flag overrides.
struct RunConfig {
    model::ModelConfig model;
    train::TrainConfig train;
    data::SynthConfig synth;
    std::size_t threads = 1;
    // Keys the config file set explicitly inside "model" (window lengths are
    // otherwise taken from the manifest).
    bool model_lengths_set = false;
};

// {"seed", "mode", "threads", "model": {...}, "train": {...}, "synth": {...}}
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::optional<std::filesystem::path>& path);
nlohmann::json run_config_to_json(const RunConfig& config);

nlohmann::json synth_config_to_json(const data::SynthConfig& config);
data::SynthConfig synth_config_from_json(const nlohmann::json& j);

// Error -> exit code mapping.
int exit_code_for(const std::exception& e);

// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

} // namespace msvdd::cli

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "msvdd/datapipe.hpp"
#include "msvdd/model.hpp"
#include "msvdd/robust_stats.hpp"
#include "msvdd/scoring.hpp"

namespace msvdd::train {

struct TrainConfig {
    std::size_t epochs = 40;
    std::size_t batch_size = 64;
    double lr0 = 1e-4;
    std::uint64_t seed = 0;
    double h_fraction = 0.75;
    double w = 0.01;  // reconstruction weight in the anomaly score
    std::size_t mcd_restarts = 10;
    bool detach_stats = false;
    // R^2 starts at this quantile of the first batch's squared distances.
    double radius_quantile = 0.95;
    // Rescale W_M so first-batch latent features have unit mean variance.
    bool scale_latent = true;

    void validate(const model::ModelConfig& model) const;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

using Grads = std::map<std::string, std::vector<double>>;

struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    Grads m;
    Grads v;
};

// One bias-corrected Adam update of every parameter that has a gradient.
void adam_step(model::ModelParams& params, const Grads& grads, AdamState& state, double lr);

// lr0 * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

// Linear interpolation between order statistics at position q * (n - 1).
double percentile(std::vector<double> values, double q);

struct TrainedArtifact {
    model::ModelConfig model;
    TrainConfig train;
    model::ModelParams params;
    std::vector<double> mu_z;
    stats::Matrix sigma_z;  // identity in euclidean mode
    stats::Matrix chol;     // Cholesky factor of sigma_z, not serialized
    double mu_d = 0.0;
    double mu_rec = 0.0;
    double delta_star = 0.0;
    std::size_t h = 0;  // MCD subset size of the final estimate, 0 in euclidean mode
    std::optional<data::NormalizationStats> normalization;
};

struct EpochLog {
    std::size_t epoch = 0;
    double total = 0.0;
    double msvdd = 0.0;
    double rec = 0.0;
    double reg = 0.0;
    double r2 = 0.0;
    double lr = 0.0;
    double fraction_outside = 0.0;
};

struct TrainResult {
    TrainedArtifact artifact;
    std::vector<EpochLog> log;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains on normal windows and finalizes. Deterministic for a fixed seed.
TrainResult train(std::span<const model::WindowTensors> windows, const model::ModelConfig& model_config,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

// Per-window latent feature and reconstruction loss.
struct Embedding {
    std::vector<double> z;
    double rec = 0.0;
};

std::vector<Embedding> embed(std::span<const model::WindowTensors> windows, const model::ModelParams& params,
                             const model::ModelConfig& config);

// Full pass over training windows: inference statistics, mu_D, mu_rec, delta*.
// `center` fixes mu_z in euclidean mode (the feature mean when absent).
TrainedArtifact finalize(const model::ModelParams& params, std::span<const model::WindowTensors> windows,
                         const model::ModelConfig& model_config, const TrainConfig& config,
                         const std::optional<std::vector<double>>& center = std::nullopt);

// Distance of a latent feature under the artifact's inference statistics.
double distance(const TrainedArtifact& artifact, std::span<const double> z);

struct WindowScore {
    double distance = 0.0;
    double rec = 0.0;
    double delta = 0.0;
};

WindowScore score_window(const TrainedArtifact& artifact, const model::WindowTensors& window);

// Scores every window and applies delta* with the strict rule.
std::vector<eval::ScoredWindow> score_dataset(const TrainedArtifact& artifact, const data::WindowedDataset& dataset);

inline constexpr int kArtifactVersion = 1;

nlohmann::json artifact_to_json(const TrainedArtifact& artifact);
// Throws FormatError (naming both versions on a version mismatch).
TrainedArtifact artifact_from_json(const nlohmann::json& j);

} // namespace msvdd::train

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "msvdd/tensor.hpp"

namespace msvdd::model {

enum class Mode { mahalanobis, euclidean };

std::string to_string(Mode mode);
Mode parse_mode(const std::string& text);

// Architecture and loss weights. Encoder/decoder internals are fixed to
// stride-2 kernel-5 convolutions with ReLU; every width is configurable.
struct ModelConfig {
    std::size_t audio_length = 8820;  // L_A
    std::size_t imu_length = 400;     // L_I
    std::size_t d = 32;               // token feature width
    std::size_t s = 32;               // latent ellipsoid dimension
    // Output widths of the first five audio convs; the sixth outputs d.
    std::vector<std::size_t> audio_channels = {8, 16, 32, 32, 32};
    std::size_t conv_kernel = 5;
    std::size_t conv_stride = 2;
    std::size_t conv_padding = 2;
    std::size_t imu_token_width = 4;
    std::size_t imu_decoder_hidden = 0;  // 0 means d
    double alpha1 = 1.0;
    double alpha2 = 1.0;
    double alpha3 = 0.001;
    double epsilon = 1e-3;
    Mode mode = Mode::mahalanobis;

    // Throws ContractError / DimensionError on invalid settings.
    void validate() const;

    std::size_t audio_tokens() const;    // T_a
    std::size_t imu_tokens() const;      // T_i
    std::size_t decoder_tokens() const;  // broadcast length feeding the deconv stack
    std::size_t decoder_hidden() const { return imu_decoder_hidden ? imu_decoder_hidden : d; }
    std::size_t conv_layers() const { return audio_channels.size() + 1; }
};

// Named trainable tensors. Names are stable and sorted, which fixes
// serialization and optimizer order.
struct ModelParams {
    std::map<std::string, nd::Tensor> tensors;

    const nd::Tensor& operator[](const std::string& name) const;
    std::size_t count() const;
};

ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

// Same values registered as variables on `tape`.
ModelParams bind(nd::Tape& tape, const ModelParams& params);

// R^2 = softplus(rho)
nd::Tensor radius_squared(const ModelParams& params);
double inverse_softplus(double y);

struct Encoded {
    nd::Tensor tokens;  // T x d
    nd::Tensor pooled;  // d, temporal mean of tokens
};

// audio: L_A x 2
Encoded encode_audio(const nd::Tensor& audio, const ModelParams& params, const ModelConfig& config);
// imu: L_I
Encoded encode_imu(const nd::Tensor& imu, const ModelParams& params, const ModelConfig& config);

struct Fused {
    nd::Tensor z_ai;  // d
    nd::Tensor z_ia;  // d
};

// Single-head cross attention in both directions, each followed by a dense
// ReLU layer with a residual connection and temporal mean pooling.
Fused cross_attention_fuse(const nd::Tensor& tokens_a, const nd::Tensor& tokens_i, const ModelParams& params,
                           const ModelConfig& config);

// z = W_M (z_ai + z_ia) + b with W_M: s x d.
nd::Tensor project_latent(const nd::Tensor& z_ai, const nd::Tensor& z_ia, const nd::Tensor& w_m, const nd::Tensor& b);

struct Reconstruction {
    nd::Tensor audio;  // L_A x 2
    nd::Tensor imu;    // L_I
};

Reconstruction decode(const nd::Tensor& z_a, const nd::Tensor& z_i, const ModelParams& params,
                      const ModelConfig& config);

// R2 + mean(max(0, D^2 - R2)). Throws ContractError for empty D.
nd::Tensor msvdd_loss(const nd::Tensor& distances, const nd::Tensor& r2);
// Euclidean distances ||z_i - c|| fed through the same soft-boundary objective.
nd::Tensor dsvdd_euclidean_loss(const nd::Tensor& z, const nd::Tensor& center, const nd::Tensor& r2);
nd::Tensor euclidean_distances(const nd::Tensor& z, const nd::Tensor& center);
// huber(A, A_hat) + huber(I, I_hat)
nd::Tensor reconstruction_loss(const nd::Tensor& audio, const nd::Tensor& audio_hat, const nd::Tensor& imu,
                               const nd::Tensor& imu_hat);

struct WindowTensors {
    nd::Tensor audio;  // L_A x 2
    nd::Tensor imu;    // L_I
};

struct WindowForward {
    nd::Tensor z;         // s
    nd::Tensor rec_loss;  // scalar
    Encoded audio;
    Encoded imu;
    Reconstruction reconstruction;
};

WindowForward forward_window(const WindowTensors& window, const ModelParams& params, const ModelConfig& config);

struct LossOptions {
    double h_fraction = 0.75;
    std::size_t mcd_restarts = 10;
    std::uint64_t mcd_seed = 0;
    // Treat mu_z and Sigma_z as constants.
    bool detach_stats = false;
    // Euclidean center; the detached batch mean when absent.
    std::optional<std::vector<double>> center;
    // Reuse a previously selected MCD subset instead of searching.
    std::optional<std::vector<std::size_t>> fixed_subset;
};

struct LossDiagnostics {
    double total = 0.0;
    double msvdd = 0.0;
    double rec = 0.0;
    double reg = 0.0;
    double r2 = 0.0;
    double det_sigma = 0.0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double fraction_outside = 0.0;
    std::vector<std::size_t> subset;
    std::vector<double> distances;
    std::vector<double> latent;  // N x s batch features, row-major
};

struct LossResult {
    nd::Tensor loss;
    LossDiagnostics diagnostics;
};

// Subset size used for a batch of n features: ceil(fraction * n) clamped into (s, n).
std::size_t batch_subset_size(std::size_t n, std::size_t s, double fraction);

// alpha1 * L_MSVDD + alpha2 * mean L_Rec + alpha3 * L_Reg over a batch.
// Mahalanobis mode needs N > s + 1; the regularizer is not used in Euclidean mode.
LossResult total_loss(std::span<const WindowTensors> batch, const ModelParams& params, const ModelConfig& config,
                      const LossOptions& options = {});

} // namespace msvdd::model

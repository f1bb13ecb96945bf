#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/model.hpp"
#include "msvdd/ops.hpp"

namespace msvdd::model {

namespace {

nd::Tensor dense(const nd::Tensor& x, const ModelParams& p, const std::string& prefix) {
    return nd::add_row(nd::matmul(x, p[prefix + ".w"]), p[prefix + ".b"]);
}

nd::Tensor lstm(const nd::Tensor& x, const ModelParams& p, const std::string& prefix) {
    return nd::lstm(x, p[prefix + ".w_ih"], p[prefix + ".w_hh"], p[prefix + ".b"]);
}

// Attends every query token over the other modality, then dense + residual and temporal mean.
nd::Tensor attend(const nd::Tensor& q, const nd::Tensor& k, const nd::Tensor& v, const ModelParams& p,
                  const std::string& mlp, std::size_t d) {
    auto scores = nd::scale(nd::matmul(q, nd::transpose(k)), 1.0 / std::sqrt(static_cast<double>(d)));
    auto attended = nd::matmul(nd::softmax(scores, 1), v);
    auto out = nd::add(attended, nd::relu(dense(attended, p, mlp)));
    return nd::mean_axis(out, 0);
}

} // namespace

Encoded encode_audio(const nd::Tensor& audio, const ModelParams& params, const ModelConfig& config) {
    if (audio.rank() != 2 || audio.rows() != config.audio_length || audio.cols() != 2) {
        throw DimensionError("encode_audio: expected window " + std::to_string(config.audio_length) + "x2, got " +
                             nd::shape_str(audio.shape()));
    }
    nd::Tensor x = audio;
    for (std::size_t i = 0; i < config.conv_layers(); ++i) {
        const std::string name = "audio.conv" + std::to_string(i);
        x = nd::conv1d(x, params[name + ".w"], config.conv_stride, config.conv_padding);
        x = nd::relu(nd::add_row(x, params[name + ".b"]));
    }
    auto tokens = lstm(x, params, "audio.lstm");
    return {tokens, nd::mean_axis(tokens, 0)};
}

Encoded encode_imu(const nd::Tensor& imu, const ModelParams& params, const ModelConfig& config) {
    if (imu.size() != config.imu_length || imu.rank() > 2 || (imu.rank() == 2 && imu.cols() != 1)) {
        throw DimensionError("encode_imu: expected " + std::to_string(config.imu_length) + " samples, got " +
                             nd::shape_str(imu.shape()));
    }
    if (imu.size() % config.imu_token_width != 0) {
        throw DimensionError("encode_imu: length " + std::to_string(imu.size()) + " not divisible by token width " +
                             std::to_string(config.imu_token_width));
    }
    auto x = nd::reshape(imu, {config.imu_tokens(), config.imu_token_width});
    auto tokens = lstm(lstm(x, params, "imu.lstm0"), params, "imu.lstm1");
    return {tokens, nd::mean_axis(tokens, 0)};
}

Fused cross_attention_fuse(const nd::Tensor& tokens_a, const nd::Tensor& tokens_i, const ModelParams& params,
                           const ModelConfig& config) {
    const std::size_t d = config.d;
    for (const auto* t : {&tokens_a, &tokens_i}) {
        if (t->rank() != 2 || t->cols() != d) {
            throw DimensionError("cross_attention_fuse: expected T x " + std::to_string(d) + " tokens, got " +
                                 nd::shape_str(t->shape()));
        }
    }
    auto q_a = dense(tokens_a, params, "fusion.q_audio");
    auto k_a = dense(tokens_a, params, "fusion.k_audio");
    auto v_a = dense(tokens_a, params, "fusion.v_audio");
    auto q_i = dense(tokens_i, params, "fusion.q_imu");
    auto k_i = dense(tokens_i, params, "fusion.k_imu");
    auto v_i = dense(tokens_i, params, "fusion.v_imu");

    Fused out;
    out.z_ia = attend(q_a, k_i, v_i, params, "fusion.mlp_ia", d);
    out.z_ai = attend(q_i, k_a, v_a, params, "fusion.mlp_ai", d);
    return out;
}

nd::Tensor project_latent(const nd::Tensor& z_ai, const nd::Tensor& z_ia, const nd::Tensor& w_m, const nd::Tensor& b) {
    if (w_m.rank() != 2 || w_m.cols() != z_ai.size() || z_ai.size() != z_ia.size() || b.size() != w_m.rows()) {
        throw DimensionError("project_latent: W_M " + nd::shape_str(w_m.shape()) + ", z " + nd::shape_str(z_ai.shape()) +
                             ", b " + nd::shape_str(b.shape()));
    }
    const std::size_t d = w_m.cols(), s = w_m.rows();
    auto sum = nd::reshape(nd::add(z_ai, z_ia), {d, 1});
    return nd::add(nd::reshape(nd::matmul(w_m, sum), {s}), nd::reshape(b, {s}));
}

Reconstruction decode(const nd::Tensor& z_a, const nd::Tensor& z_i, const ModelParams& params,
                      const ModelConfig& config) {
    if (z_a.size() != config.d || z_i.size() != config.d) {
        throw DimensionError("decode: latent vectors must have " + std::to_string(config.d) + " values");
    }
    Reconstruction out;

    nd::Tensor x = nd::broadcast_rows(z_a, config.decoder_tokens());
    const std::size_t layers = config.conv_layers();
    for (std::size_t i = 0; i < layers; ++i) {
        const std::string name = "decoder.audio.deconv" + std::to_string(i);
        x = nd::deconv1d(x, params[name + ".w"], config.conv_stride, config.conv_padding);
        x = nd::add_row(x, params[name + ".b"]);
        if (i + 1 < layers) x = nd::relu(x);
    }
    out.audio = nd::slice_rows(x, 0, config.audio_length);

    auto h = lstm(nd::broadcast_rows(z_i, config.imu_tokens()), params, "decoder.imu.lstm");
    out.imu = nd::reshape(dense(h, params, "decoder.imu.dense"), {config.imu_length});
    return out;
}

WindowForward forward_window(const WindowTensors& window, const ModelParams& params, const ModelConfig& config) {
    WindowForward out;
    out.audio = encode_audio(window.audio, params, config);
    out.imu = encode_imu(window.imu, params, config);
    out.reconstruction = decode(out.audio.pooled, out.imu.pooled, params, config);
    out.rec_loss = reconstruction_loss(window.audio, out.reconstruction.audio, nd::reshape(window.imu, {config.imu_length}),
                                       out.reconstruction.imu);
    auto fused = cross_attention_fuse(out.audio.tokens, out.imu.tokens, params, config);
    out.z = project_latent(fused.z_ai, fused.z_ia, params["proj.w"], params["proj.b"]);
    return out;
}

} // namespace msvdd::model

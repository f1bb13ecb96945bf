#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/model.hpp"
#include "msvdd/ops.hpp"
#include "msvdd/rng.hpp"

namespace msvdd::model {

std::string to_string(Mode mode) { return mode == Mode::mahalanobis ? "mahalanobis" : "euclidean"; }

Mode parse_mode(const std::string& text) {
    if (text == "mahalanobis") return Mode::mahalanobis;
    if (text == "euclidean") return Mode::euclidean;
    throw ContractError("unknown mode '" + text + "' (expected mahalanobis or euclidean)");
}

namespace {

std::size_t conv_out(std::size_t t, std::size_t k, std::size_t stride, std::size_t pad) {
    if (t + 2 * pad < k) return 0;
    return (t + 2 * pad - k) / stride + 1;
}

std::size_t deconv_out(std::size_t t, std::size_t k, std::size_t stride, std::size_t pad) {
    const long long v = static_cast<long long>((t - 1) * stride + k) - 2 * static_cast<long long>(pad);
    return v > 0 ? static_cast<std::size_t>(v) : 0;
}

} // namespace

void ModelConfig::validate() const {
    if (d < 1 || s < 1) throw ContractError("model: d and s must be at least 1");
    if (alpha1 < 0.0 || alpha2 < 0.0 || alpha3 < 0.0) throw ContractError("model: loss weights must be non-negative");
    if (!(epsilon > 0.0)) throw ContractError("model: epsilon must be positive");
    if (conv_kernel < 1 || conv_stride < 1) throw ContractError("model: conv kernel and stride must be positive");
    for (auto c : audio_channels) {
        if (c < 1) throw ContractError("model: audio channel widths must be positive");
    }
    if (imu_token_width < 1) throw ContractError("model: imu token width must be positive");
    if (imu_length == 0 || imu_length % imu_token_width != 0) {
        throw DimensionError("model: imu length " + std::to_string(imu_length) + " not divisible by token width " +
                             std::to_string(imu_token_width));
    }
    if (audio_tokens() == 0) {
        throw DimensionError("model: audio length " + std::to_string(audio_length) + " too short for " +
                             std::to_string(conv_layers()) + " conv layers");
    }
    if (deconv_out(decoder_tokens(), conv_kernel, conv_stride, conv_padding) == 0) {
        throw DimensionError("model: decoder cannot produce audio of length " + std::to_string(audio_length));
    }
}

std::size_t ModelConfig::audio_tokens() const {
    std::size_t t = audio_length;
    for (std::size_t i = 0; i < conv_layers() && t > 0; ++i) t = conv_out(t, conv_kernel, conv_stride, conv_padding);
    return t;
}

std::size_t ModelConfig::imu_tokens() const { return imu_token_width ? imu_length / imu_token_width : 0; }

std::size_t ModelConfig::decoder_tokens() const {
    // Smallest broadcast length whose deconv stack covers L_A; the surplus is cropped.
    auto produced = [&](std::size_t t) {
        for (std::size_t i = 0; i < conv_layers() && t > 0; ++i) t = deconv_out(t, conv_kernel, conv_stride, conv_padding);
        return t;
    };
    std::size_t t = std::max<std::size_t>(audio_tokens(), 1);
    while (produced(t) < audio_length) ++t;
    return t;
}

const nd::Tensor& ModelParams::operator[](const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("model: missing parameter '" + name + "'");
    return it->second;
}

std::size_t ModelParams::count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
}

namespace {

class Initializer {
public:
    Initializer(ModelParams& params, std::uint64_t seed) : params_(params), rng_(seed) {}

    void uniform(const std::string& name, nd::Shape shape, double bound) {
        std::vector<double> v(nd::shape_size(shape));
        for (auto& x : v) x = bound * (2.0 * rng_.uniform() - 1.0);
        params_.tensors[name] = nd::Tensor(std::move(shape), std::move(v));
    }
    void zeros(const std::string& name, nd::Shape shape) { params_.tensors[name] = nd::Tensor::zeros(std::move(shape)); }

    void dense(const std::string& prefix, std::size_t in, std::size_t out, bool relu) {
        uniform(prefix + ".w", {in, out}, std::sqrt((relu ? 6.0 : 3.0) / static_cast<double>(in)));
        zeros(prefix + ".b", {out});
    }
    void lstm(const std::string& prefix, std::size_t in, std::size_t hidden) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
        uniform(prefix + ".w_ih", {in, 4 * hidden}, bound);
        uniform(prefix + ".w_hh", {hidden, 4 * hidden}, bound);
        zeros(prefix + ".b", {4 * hidden});
    }

private:
    ModelParams& params_;
    Rng rng_;
};

std::string layer_name(const std::string& prefix, std::size_t i) { return prefix + std::to_string(i); }

} // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams params;
    Initializer init(params, seed);
    const std::size_t d = config.d, k = config.conv_kernel;

    std::vector<std::size_t> widths{2};
    widths.insert(widths.end(), config.audio_channels.begin(), config.audio_channels.end());
    widths.push_back(d);
    const std::size_t layers = widths.size() - 1;

    for (std::size_t i = 0; i < layers; ++i) {
        const std::string name = layer_name("audio.conv", i);
        init.uniform(name + ".w", {k, widths[i], widths[i + 1]}, std::sqrt(6.0 / static_cast<double>(k * widths[i])));
        init.zeros(name + ".b", {widths[i + 1]});
    }
    init.lstm("audio.lstm", d, d);

    init.lstm("imu.lstm0", config.imu_token_width, d);
    init.lstm("imu.lstm1", d, d);

    for (const char* m : {"audio", "imu"}) {
        for (const char* p : {"q", "k", "v"}) init.dense(std::string("fusion.") + p + "_" + m, d, d, false);
    }
    init.dense("fusion.mlp_ai", d, d, true);
    init.dense("fusion.mlp_ia", d, d, true);

    init.uniform("proj.w", {config.s, d}, std::sqrt(3.0 / static_cast<double>(d)));
    init.zeros("proj.b", {config.s});

    // Decoder layer i maps widths[layers - i] -> widths[layers - i - 1].
    const double taps = std::ceil(static_cast<double>(k) / static_cast<double>(config.conv_stride));
    for (std::size_t i = 0; i < layers; ++i) {
        const std::size_t cin = widths[layers - i], cout = widths[layers - i - 1];
        const std::string name = layer_name("decoder.audio.deconv", i);
        const double gain = i + 1 < layers ? 6.0 : 3.0;
        init.uniform(name + ".w", {k, cout, cin}, std::sqrt(gain / (taps * static_cast<double>(cin))));
        init.zeros(name + ".b", {cout});
    }
    init.lstm("decoder.imu.lstm", d, config.decoder_hidden());
    init.dense("decoder.imu.dense", config.decoder_hidden(), config.imu_token_width, false);

    params.tensors["radius.rho"] = nd::Tensor::scalar(inverse_softplus(1.0));
    return params;
}

ModelParams bind(nd::Tape& tape, const ModelParams& params) {
    ModelParams out;
    for (const auto& [name, t] : params.tensors) out.tensors.emplace(name, tape.variable(t));
    return out;
}

nd::Tensor radius_squared(const ModelParams& params) { return nd::softplus(params["radius.rho"]); }

double inverse_softplus(double y) {
    if (!(y > 0.0)) throw ContractError("inverse_softplus: argument must be positive");
    // log(exp(y) - 1) = y + log(1 - exp(-y))
    return y + std::log(-std::expm1(-y));
}

} // namespace msvdd::model

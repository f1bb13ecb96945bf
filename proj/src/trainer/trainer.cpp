#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "msvdd/errors.hpp"
#include "msvdd/model_io.hpp"
#include "msvdd/ops.hpp"
#include "msvdd/rng.hpp"
#include "msvdd/trainer.hpp"

namespace msvdd::train {

using nlohmann::json;
using model::Mode;

void TrainConfig::validate(const model::ModelConfig& model) const {
    if (epochs < 1) throw ContractError("train: epochs must be at least 1");
    if (batch_size < 1) throw ContractError("train: batch_size must be positive");
    if (model.mode == Mode::mahalanobis && batch_size <= model.s + 1) {
        throw ContractError("train: batch_size " + std::to_string(batch_size) + " must exceed s + 1 = " +
                            std::to_string(model.s + 1) + " in mahalanobis mode");
    }
    if (!(lr0 > 0.0) || !std::isfinite(lr0)) throw ContractError("train: lr0 must be positive");
    if (!(h_fraction >= 0.5 && h_fraction <= 1.0)) throw ContractError("train: h_fraction must lie in [0.5, 1]");
    if (!(w >= 0.0) || !std::isfinite(w)) throw ContractError("train: w must be non-negative");
    if (mcd_restarts < 1) throw ContractError("train: mcd_restarts must be at least 1");
    if (!(radius_quantile > 0.0 && radius_quantile <= 1.0)) throw ContractError("train: radius_quantile must lie in (0, 1]");
}

json train_config_to_json(const TrainConfig& c) {
    return json{{"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr0", c.lr0},
                {"seed", c.seed},
                {"h_fraction", c.h_fraction},
                {"w", c.w},
                {"mcd_restarts", c.mcd_restarts},
                {"detach_stats", c.detach_stats},
                {"radius_quantile", c.radius_quantile},
                {"scale_latent", c.scale_latent}};
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("train config: bad value for '") + key + "': " + e.what());
    }
}

} // namespace

TrainConfig train_config_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("train config: expected a JSON object");
    TrainConfig c;
    read(j, "epochs", c.epochs);
    read(j, "batch_size", c.batch_size);
    read(j, "lr0", c.lr0);
    read(j, "seed", c.seed);
    read(j, "h_fraction", c.h_fraction);
    read(j, "w", c.w);
    read(j, "mcd_restarts", c.mcd_restarts);
    read(j, "detach_stats", c.detach_stats);
    read(j, "radius_quantile", c.radius_quantile);
    read(j, "scale_latent", c.scale_latent);
    return c;
}

void adam_step(model::ModelParams& params, const Grads& grads, AdamState& state, double lr) {
    ++state.t;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (auto& [name, tensor] : params.tensors) {
        auto it = grads.find(name);
        if (it == grads.end()) continue;
        const auto& g = it->second;
        if (g.size() != tensor.size()) {
            throw DimensionError("adam_step: gradient for '" + name + "' has " + std::to_string(g.size()) +
                                 " values, parameter has " + std::to_string(tensor.size()));
        }
        auto& m = state.m[name];
        auto& v = state.v[name];
        m.resize(g.size(), 0.0);
        v.resize(g.size(), 0.0);
        std::vector<double> x(tensor.values().begin(), tensor.values().end());
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
        }
        tensor = nd::Tensor(tensor.shape(), std::move(x));
    }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
    if (total_steps == 0 || step > total_steps) {
        throw ContractError("cosine_lr: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
    }
    if (step == total_steps) return 0.0;
    const double phase = std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps);
    return lr0 * 0.5 * (1.0 + std::cos(phase));
}

double percentile(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("percentile: no values");
    if (!(q >= 0.0 && q <= 1.0)) throw ContractError("percentile: q must lie in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::vector<Embedding> embed(std::span<const model::WindowTensors> windows, const model::ModelParams& params,
                             const model::ModelConfig& config) {
    std::vector<Embedding> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        auto f = model::forward_window(w, params, config);
        out.push_back({std::vector<double>(f.z.values().begin(), f.z.values().end()), f.rec_loss.item()});
    }
    return out;
}

double distance(const TrainedArtifact& a, std::span<const double> z) {
    if (z.size() != a.mu_z.size()) {
        throw DimensionError("distance: feature has " + std::to_string(z.size()) + " values, expected " +
                             std::to_string(a.mu_z.size()));
    }
    if (a.model.mode == Mode::euclidean) {
        double sum = 0.0;
        for (std::size_t j = 0; j < z.size(); ++j) sum += (z[j] - a.mu_z[j]) * (z[j] - a.mu_z[j]);
        return std::sqrt(sum);
    }
    return stats::mahalanobis(z, a.mu_z, a.chol);
}

TrainedArtifact finalize(const model::ModelParams& params, std::span<const model::WindowTensors> windows,
                         const model::ModelConfig& model_config, const TrainConfig& config,
                         const std::optional<std::vector<double>>& center) {
    const std::size_t m = windows.size(), s = model_config.s;
    if (m == 0) throw ContractError("finalize: no training windows");

    TrainedArtifact a;
    a.model = model_config;
    a.train = config;
    a.params = params;

    const auto emb = embed(windows, params, model_config);
    stats::Matrix features(m, s);
    for (std::size_t i = 0; i < m; ++i) std::copy(emb[i].z.begin(), emb[i].z.end(), features.data.begin() + i * s);

    if (model_config.mode == Mode::mahalanobis) {
        if (m <= s + 1) {
            throw ContractError("finalize: " + std::to_string(m) + " training windows, need more than s + 1 = " +
                                std::to_string(s + 1));
        }
        stats::McdOptions mcd;
        mcd.h = model::batch_subset_size(m, s, config.h_fraction);
        mcd.epsilon = model_config.epsilon;
        mcd.restarts = config.mcd_restarts;
        mcd.seed = config.seed;
        auto est = stats::mcd_estimate(features, mcd);
        a.mu_z = std::move(est.mu);
        a.sigma_z = std::move(est.sigma);
        a.chol = std::move(est.chol);
        a.h = mcd.h;
    } else {
        if (center) {
            if (center->size() != s) throw DimensionError("finalize: center has " + std::to_string(center->size()) + " values");
            a.mu_z = *center;
        } else {
            a.mu_z.assign(s, 0.0);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < s; ++j) a.mu_z[j] += features(i, j);
            }
            for (auto& v : a.mu_z) v /= static_cast<double>(m);
        }
        a.sigma_z = stats::Matrix::identity(s);
        a.chol = stats::Matrix::identity(s);
        a.h = 0;
    }

    std::vector<double> dist(m);
    double sum_d = 0.0, sum_rec = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        dist[i] = distance(a, emb[i].z);
        sum_d += dist[i];
        sum_rec += emb[i].rec;
    }
    a.mu_d = sum_d / static_cast<double>(m);
    a.mu_rec = sum_rec / static_cast<double>(m);
    if (!(a.mu_rec > 0.0)) throw NumericalError("finalize: mean training reconstruction loss is zero");

    std::vector<double> delta(m);
    for (std::size_t i = 0; i < m; ++i) delta[i] = eval::anomaly_score(dist[i], emb[i].rec, a.mu_d, a.mu_rec, config.w);
    a.delta_star = percentile(std::move(delta), 0.95);
    return a;
}

namespace {

std::vector<double> mean_rows(std::span<const double> latent, std::size_t s) {
    const std::size_t n = latent.size() / s;
    std::vector<double> c(s, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s; ++j) c[j] += latent[i * s + j];
    }
    for (auto& v : c) v /= static_cast<double>(n);
    return c;
}

// Factor that brings the mean per-dimension variance of the batch latent to 1.
double latent_scale(std::span<const model::WindowTensors> batch, const model::ModelParams& params,
                    const model::ModelConfig& mc) {
    const std::size_t s = mc.s;
    std::vector<double> latent;
    for (const auto& e : embed(batch, params, mc)) latent.insert(latent.end(), e.z.begin(), e.z.end());
    const auto c = mean_rows(latent, s);
    const std::size_t n = latent.size() / s;
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < s; ++j) var += (latent[i * s + j] - c[j]) * (latent[i * s + j] - c[j]);
    }
    var /= static_cast<double>(n * s);
    return var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
}

// Initial R^2 from the distance spread of the first batch under the initial weights.
double initial_radius(std::span<const model::WindowTensors> batch, const model::ModelParams& params,
                      const model::ModelConfig& mc, const TrainConfig& config) {
    const std::size_t n = batch.size(), s = mc.s;
    const auto emb = embed(batch, params, mc);
    stats::Matrix features(n, s);
    for (std::size_t i = 0; i < n; ++i) std::copy(emb[i].z.begin(), emb[i].z.end(), features.data.begin() + i * s);

    std::vector<double> d2(n);
    if (mc.mode == Mode::mahalanobis) {
        stats::McdOptions mcd;
        mcd.h = model::batch_subset_size(n, s, config.h_fraction);
        mcd.epsilon = mc.epsilon;
        mcd.restarts = config.mcd_restarts;
        mcd.seed = config.seed;
        const auto est = stats::mcd_estimate(features, mcd);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::pow(stats::mahalanobis(features.row(i), est), 2);
    } else {
        const auto c = mean_rows(features.data, s);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < s; ++j) sum += (features(i, j) - c[j]) * (features(i, j) - c[j]);
            d2[i] = sum;
        }
    }
    return std::max(percentile(std::move(d2), config.radius_quantile), 1e-6);
}

} // namespace

TrainResult train(std::span<const model::WindowTensors> windows, const model::ModelConfig& mc,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
    mc.validate();
    config.validate(mc);
    const std::size_t n = windows.size(), s = mc.s, bs = config.batch_size;
    if (n < bs) {
        throw ContractError("train: " + std::to_string(n) + " windows is fewer than one batch of " + std::to_string(bs));
    }
    for (const auto& w : windows) {
        if (w.audio.rows() != mc.audio_length || w.imu.size() != mc.imu_length) {
            throw DimensionError("train: window shape " + nd::shape_str(w.audio.shape()) + " / " +
                                 nd::shape_str(w.imu.shape()) + " does not match L_A = " +
                                 std::to_string(mc.audio_length) + ", L_I = " + std::to_string(mc.imu_length));
        }
    }

    // Batch boundaries; a short tail too small for MCD is dropped.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t b = 0; b < n; b += bs) batches.emplace_back(b, std::min(n, b + bs));
    if (mc.mode == Mode::mahalanobis && batches.back().second - batches.back().first <= s + 1) batches.pop_back();
    const std::size_t total_steps = config.epochs * batches.size();

    auto params = model::init_params(mc, config.seed);
    Rng shuffle_rng(config.seed ^ 0x5DEECE66Dull);
    Rng mcd_rng(config.seed ^ 0xD1B54A32D192ED03ull);
    AdamState adam;
    std::optional<std::vector<double>> center;
    std::vector<std::size_t> order(n);
    std::vector<model::WindowTensors> batch;

    TrainResult result;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        shuffle_rng.shuffle(order.begin(), order.end());

        EpochLog log;
        log.epoch = epoch;
        std::size_t seen = 0;
        for (const auto& [b0, b1] : batches) {
            batch.clear();
            for (std::size_t k = b0; k < b1; ++k) batch.push_back(windows[order[k]]);

            if (step == 0) {
                if (config.scale_latent) {
                    const double k = latent_scale(batch, params, mc);
                    auto& w = params.tensors["proj.w"];
                    std::vector<double> v(w.values().begin(), w.values().end());
                    for (auto& x : v) x *= k;
                    w = nd::Tensor(w.shape(), std::move(v));
                }
                params.tensors["radius.rho"] =
                    nd::Tensor::scalar(model::inverse_softplus(initial_radius(batch, params, mc, config)));
            }

            nd::Tape tape;
            const auto bound = model::bind(tape, params);
            model::LossOptions opt;
            opt.h_fraction = config.h_fraction;
            opt.mcd_restarts = config.mcd_restarts;
            opt.mcd_seed = mcd_rng.next();
            opt.detach_stats = config.detach_stats;
            opt.center = center;
            const auto res = model::total_loss(batch, bound, mc, opt);
            if (!std::isfinite(res.diagnostics.total)) {
                throw NumericalError("train: non-finite loss at epoch " + std::to_string(epoch));
            }
            const auto g = tape.backward(res.loss);
            Grads grads;
            for (const auto& [name, t] : bound.tensors) grads[name] = g.of(t);

            log.lr = cosine_lr(step, total_steps, config.lr0);
            adam_step(params, grads, adam, log.lr);
            ++step;

            const auto& d = res.diagnostics;
            const double wgt = static_cast<double>(batch.size());
            log.total += wgt * d.total;
            log.msvdd += wgt * d.msvdd;
            log.rec += wgt * d.rec;
            log.reg += wgt * d.reg;
            log.fraction_outside += wgt * d.fraction_outside;
            seen += batch.size();
        }
        const double inv = 1.0 / static_cast<double>(seen);
        log.total *= inv;
        log.msvdd *= inv;
        log.rec *= inv;
        log.reg *= inv;
        log.fraction_outside *= inv;
        log.r2 = model::radius_squared(params).item();

        if (mc.mode == Mode::euclidean && !center) {
            std::vector<double> latent;
            for (const auto& e : embed(windows, params, mc)) latent.insert(latent.end(), e.z.begin(), e.z.end());
            center = mean_rows(latent, s);
        }
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }

    result.artifact = finalize(params, windows, mc, config, center);
    return result;
}

WindowScore score_window(const TrainedArtifact& a, const model::WindowTensors& window) {
    const auto f = model::forward_window(window, a.params, a.model);
    WindowScore out;
    out.distance = distance(a, f.z.values());
    out.rec = f.rec_loss.item();
    out.delta = eval::anomaly_score(out.distance, out.rec, a.mu_d, a.mu_rec, a.train.w);
    return out;
}

std::vector<eval::ScoredWindow> score_dataset(const TrainedArtifact& a, const data::WindowedDataset& ds) {
    if (ds.audio_length != a.model.audio_length || ds.imu_length != a.model.imu_length) {
        throw DimensionError("score: dataset windows are L_A = " + std::to_string(ds.audio_length) + ", L_I = " +
                             std::to_string(ds.imu_length) + " but the model expects L_A = " +
                             std::to_string(a.model.audio_length) + ", L_I = " + std::to_string(a.model.imu_length));
    }
    std::vector<eval::ScoredWindow> out;
    out.reserve(ds.windows.size());
    for (const auto& w : ds.windows) {
        const auto sc = score_window(a, data::to_tensors(w));
        eval::ScoredWindow sw;
        sw.id = w.id;
        sw.distance = sc.distance;
        sw.rec = sc.rec;
        sw.delta = sc.delta;
        if (w.label) sw.label = w.is_anomaly();
        out.push_back(std::move(sw));
    }
    eval::classify(out, a.delta_star);
    return out;
}

json artifact_to_json(const TrainedArtifact& a) {
    json doc = model::model_to_json(a.model, a.params);
    doc["format_version"] = kArtifactVersion;
    doc["train"] = train_config_to_json(a.train);
    json st{{"mu_z", a.mu_z},
            {"sigma_z", a.sigma_z.data},
            {"mu_D", a.mu_d},
            {"mu_rec", a.mu_rec},
            {"delta_star", a.delta_star},
            {"h", a.h},
            {"epsilon", a.model.epsilon},
            {"w", a.train.w},
            {"mode", model::to_string(a.model.mode)}};
    if (a.normalization) st["normalization"] = data::stats_to_json(*a.normalization);
    doc["stats"] = std::move(st);
    return doc;
}

TrainedArtifact artifact_from_json(const json& j) {
    if (!j.is_object()) throw FormatError("artifact: expected a JSON object");
    if (!j.contains("format_version") || !j["format_version"].is_number_integer()) {
        throw FormatError("artifact: missing format_version");
    }
    const int version = j["format_version"].get<int>();
    if (version != kArtifactVersion) {
        throw FormatError("artifact: format_version " + std::to_string(version) + " is not supported (this build reads " +
                          std::to_string(kArtifactVersion) + ")");
    }
    TrainedArtifact a;
    std::tie(a.model, a.params) = model::model_from_json(j);
    a.train = train_config_from_json(j.value("train", json::object()));
    if (!j.contains("stats")) throw FormatError("artifact: missing stats section");
    const auto& st = j["stats"];
    const std::size_t s = a.model.s;
    try {
        a.mu_z = st.at("mu_z").get<std::vector<double>>();
        a.sigma_z = stats::Matrix(s, s, st.at("sigma_z").get<std::vector<double>>());
        a.mu_d = st.at("mu_D").get<double>();
        a.mu_rec = st.at("mu_rec").get<double>();
        a.delta_star = st.at("delta_star").get<double>();
        a.h = st.at("h").get<std::size_t>();
        a.train.w = st.at("w").get<double>();
        if (model::parse_mode(st.at("mode").get<std::string>()) != a.model.mode) {
            throw FormatError("artifact: stats mode differs from model config mode");
        }
        if (st.contains("normalization")) a.normalization = data::stats_from_json(st["normalization"]);
    } catch (const json::exception& e) {
        throw FormatError(std::string("artifact stats: ") + e.what());
    } catch (const ContractError& e) {
        throw FormatError(std::string("artifact stats: ") + e.what());
    } catch (const DimensionError& e) {
        throw FormatError(std::string("artifact stats: ") + e.what());
    }
    if (a.mu_z.size() != s) throw FormatError("artifact: mu_z has " + std::to_string(a.mu_z.size()) + " values, s = " + std::to_string(s));
    if (!(a.mu_rec > 0.0)) throw FormatError("artifact: mu_rec must be positive");
    if (!(a.delta_star >= 0.0)) throw FormatError("artifact: delta_star must be non-negative");
    try {
        a.chol = stats::cholesky(a.sigma_z);
    } catch (const NumericalError&) {
        throw FormatError("artifact: sigma_z is not positive definite");
    }
    return a;
}

} // namespace msvdd::train

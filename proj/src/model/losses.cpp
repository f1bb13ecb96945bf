#include <algorithm>
#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/model.hpp"
#include "msvdd/ops.hpp"
#include "msvdd/robust_stats.hpp"

namespace msvdd::model {

nd::Tensor msvdd_loss(const nd::Tensor& distances, const nd::Tensor& r2) {
    const std::size_t n = distances.size();
    if (n == 0) throw ContractError("msvdd_loss: no distances");
    if (r2.size() != 1) throw DimensionError("msvdd_loss: R2 must be a scalar, got " + nd::shape_str(r2.shape()));
    auto r2s = nd::reshape(r2, {});
    auto excess = nd::sub_row(nd::reshape(nd::square(distances), {n, 1}), r2s);
    return nd::add(r2s, nd::mean(nd::relu(excess)));
}

nd::Tensor euclidean_distances(const nd::Tensor& z, const nd::Tensor& center) {
    if (z.rank() != 2 || center.size() != z.cols()) {
        throw DimensionError("euclidean_distances: z " + nd::shape_str(z.shape()) + " vs center " +
                             nd::shape_str(center.shape()));
    }
    return nd::sqrt(nd::sum_axis(nd::square(nd::sub_row(z, center)), 1));
}

nd::Tensor dsvdd_euclidean_loss(const nd::Tensor& z, const nd::Tensor& center, const nd::Tensor& r2) {
    return msvdd_loss(euclidean_distances(z, center), r2);
}

nd::Tensor reconstruction_loss(const nd::Tensor& audio, const nd::Tensor& audio_hat, const nd::Tensor& imu,
                               const nd::Tensor& imu_hat) {
    return nd::add(nd::huber(audio, audio_hat), nd::huber(imu, imu_hat));
}

std::size_t batch_subset_size(std::size_t n, std::size_t s, double fraction) {
    if (n <= s + 1) {
        throw ContractError("batch of " + std::to_string(n) + " windows too small for MCD: need N > s + 1 = " +
                            std::to_string(s + 1));
    }
    const std::size_t h = stats::default_subset_size(n, fraction);
    return std::clamp(h, s + 1, n - 1);
}

LossResult total_loss(std::span<const WindowTensors> batch, const ModelParams& params, const ModelConfig& config,
                      const LossOptions& options) {
    const std::size_t n = batch.size(), s = config.s;
    if (n == 0) throw ContractError("total_loss: empty batch");
    if (config.mode == Mode::mahalanobis && n <= s + 1) {
        throw ContractError("total_loss: batch size " + std::to_string(n) + " must exceed s + 1 = " +
                            std::to_string(s + 1) + " in mahalanobis mode");
    }

    std::vector<nd::Tensor> rows, recs;
    rows.reserve(n);
    recs.reserve(n);
    for (const auto& w : batch) {
        auto f = forward_window(w, params, config);
        rows.push_back(nd::reshape(f.z, {1, s}));
        recs.push_back(nd::reshape(f.rec_loss, {1}));
    }
    auto z = nd::concat(rows, 0);
    auto l_rec = nd::mean(nd::concat(recs, 0));
    auto r2 = radius_squared(params);

    LossDiagnostics diag;
    diag.latent.assign(z.values().begin(), z.values().end());

    nd::Tensor distances;
    nd::Tensor l_reg = nd::Tensor::scalar(0.0);
    if (config.mode == Mode::mahalanobis) {
        std::vector<std::size_t> subset;
        if (options.fixed_subset) {
            subset = *options.fixed_subset;
        } else {
            stats::McdOptions mcd;
            mcd.h = batch_subset_size(n, s, options.h_fraction);
            mcd.epsilon = config.epsilon;
            mcd.restarts = options.mcd_restarts;
            mcd.seed = options.mcd_seed;
            subset = stats::mcd_estimate(stats::Matrix(n, s, diag.latent), mcd).subset;
        }
        auto st = stats::subset_statistics(options.detach_stats ? z.detach() : z, subset, config.epsilon);
        distances = stats::mahalanobis(z, st.mu, st.sigma);
        l_reg = stats::covariance_penalty(st.sigma, config.epsilon);

        const auto sigma = stats::Matrix::from_tensor(st.sigma);
        const auto chol = stats::cholesky(sigma);
        double logdet = 0.0;
        for (std::size_t a = 0; a < s; ++a) logdet += 2.0 * std::log(chol(a, a));
        const auto ext = stats::eigen_extremes(sigma);
        diag.det_sigma = std::exp(logdet);
        diag.lambda_min = ext.lambda_min;
        diag.lambda_max = ext.lambda_max;
        diag.subset = std::move(subset);
    } else {
        std::vector<double> c;
        if (options.center) {
            c = *options.center;
            if (c.size() != s) throw DimensionError("total_loss: center has " + std::to_string(c.size()) + " values");
        } else {
            c.assign(s, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = 0; j < s; ++j) c[j] += diag.latent[i * s + j];
            }
            for (auto& v : c) v /= static_cast<double>(n);
        }
        distances = euclidean_distances(z, nd::Tensor::vector(std::move(c)));
        diag.det_sigma = diag.lambda_min = diag.lambda_max = 1.0;
    }

    auto l_msvdd = msvdd_loss(distances, r2);
    auto total = nd::add(nd::add(nd::scale(l_msvdd, config.alpha1), nd::scale(l_rec, config.alpha2)),
                         nd::scale(l_reg, config.alpha3));

    diag.total = total.item();
    diag.msvdd = l_msvdd.item();
    diag.rec = l_rec.item();
    diag.reg = l_reg.item();
    diag.r2 = r2.item();
    diag.distances.assign(distances.values().begin(), distances.values().end());
    std::size_t outside = 0;
    for (double dv : diag.distances) outside += dv * dv > diag.r2 ? 1 : 0;
    diag.fraction_outside = static_cast<double>(outside) / static_cast<double>(n);
    return {total, std::move(diag)};
}

} // namespace msvdd::model

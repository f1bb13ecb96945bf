#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/ops.hpp"
#include "msvdd/robust_stats.hpp"

namespace msvdd::stats {

namespace {

Matrix symmetrized(const nd::Tensor& sigma) {
    if (sigma.rank() != 2 || sigma.rows() != sigma.cols()) {
        throw DimensionError("expected a square matrix, got " + nd::shape_str(sigma.shape()));
    }
    const std::size_t n = sigma.rows();
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = 0.5 * (sigma.at(i, j) + sigma.at(j, i));
    }
    return m;
}

} // namespace

nd::Tensor mahalanobis(const nd::Tensor& z, const nd::Tensor& mu, const nd::Tensor& sigma) {
    const std::size_t s = mu.size();
    const std::size_t n = z.rank() == 1 ? 1 : z.rows();
    const std::size_t zc = z.rank() == 1 ? z.size() : z.cols();
    if (zc != s || sigma.size() != s * s) {
        throw DimensionError("mahalanobis: shape mismatch z " + nd::shape_str(z.shape()) + ", mu " +
                             nd::shape_str(mu.shape()) + ", sigma " + nd::shape_str(sigma.shape()));
    }
    const Matrix chol = cholesky(symmetrized(sigma));

    // u_i = sigma^{-1} (z_i - mu)
    auto u = std::make_shared<std::vector<double>>(n * s);
    auto dist = std::make_shared<std::vector<double>>(n);
    std::vector<double> d(s);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < s; ++c) d[c] = z[i * s + c] - mu[c];
        auto y = solve_lower(chol, d);
        double q = 0.0;
        for (double v : y) q += v * v;
        (*dist)[i] = std::sqrt(q);
        auto x = solve_lower_transposed(chol, y);
        std::copy(x.begin(), x.end(), u->begin() + static_cast<std::ptrdiff_t>(i * s));
    }
    std::shared_ptr<const std::vector<double>> uc = u;
    std::shared_ptr<const std::vector<double>> dc = dist;
    return nd::Tape::record(nd::OpKind::mahalanobis, {n}, dc, {&z, &mu, &sigma},
                            [uc, dc, n, s](std::span<const double> g, nd::GradSink& sink) {
                                auto gz = sink.input(0);
                                auto gmu = sink.input(1);
                                auto gsig = sink.input(2);
                                for (std::size_t i = 0; i < n; ++i) {
                                    const double di = (*dc)[i];
                                    if (di <= 0.0) continue;
                                    const double gq = g[i] / (2.0 * di);  // dD/dq = 1 / (2D)
                                    const double* ui = uc->data() + i * s;
                                    for (std::size_t c = 0; c < s; ++c) {
                                        if (!gz.empty()) gz[i * s + c] += 2.0 * gq * ui[c];
                                        if (!gmu.empty()) gmu[c] -= 2.0 * gq * ui[c];
                                    }
                                    if (!gsig.empty()) {
                                        for (std::size_t a = 0; a < s; ++a) {
                                            for (std::size_t b = 0; b < s; ++b) gsig[a * s + b] -= gq * ui[a] * ui[b];
                                        }
                                    }
                                }
                            });
}

nd::Tensor eigen_extremes(const nd::Tensor& sigma) {
    if (sigma.rank() != 2 || sigma.rows() != sigma.cols()) {
        throw DimensionError("eigen_extremes: expected a square matrix, got " + nd::shape_str(sigma.shape()));
    }
    const std::size_t n = sigma.rows();
    auto ext = eigen_extremes(Matrix::from_tensor(sigma));
    auto vmin = std::make_shared<const std::vector<double>>(ext.vec_min);
    auto vmax = std::make_shared<const std::vector<double>>(ext.vec_max);
    auto values = std::make_shared<const std::vector<double>>(std::vector<double>{ext.lambda_min, ext.lambda_max});
    return nd::Tape::record(nd::OpKind::eigen_extremes, {2}, values, {&sigma},
                            [vmin, vmax, n](std::span<const double> g, nd::GradSink& sink) {
                                auto gs = sink.input(0);
                                if (gs.empty()) return;
                                for (std::size_t a = 0; a < n; ++a) {
                                    for (std::size_t b = 0; b < n; ++b) {
                                        gs[a * n + b] += g[0] * (*vmin)[a] * (*vmin)[b] + g[1] * (*vmax)[a] * (*vmax)[b];
                                    }
                                }
                            });
}

nd::Tensor covariance_penalty(const nd::Tensor& sigma, double epsilon) {
    const std::size_t s = sigma.rows();
    auto inv_diag = nd::div(nd::Tensor::filled({s}, 1.0), nd::add_scalar(nd::diag(sigma), epsilon));
    auto ext = eigen_extremes(sigma);
    auto condition = nd::div(nd::element(ext, 1), nd::add_scalar(nd::element(ext, 0), epsilon));
    return nd::add(nd::sum(inv_diag), condition);
}

SubsetStatistics subset_statistics(const nd::Tensor& z, std::span<const std::size_t> subset, double epsilon) {
    const std::size_t s = z.cols();
    const double h = static_cast<double>(subset.size());
    auto rows = nd::gather_rows(z, subset);
    auto mu = nd::mean_axis(rows, 0);
    auto centered = nd::sub_row(rows, mu);
    auto scatter = nd::scale(nd::matmul(nd::transpose(centered), centered), 1.0 / h);
    auto sigma = nd::add(scatter, nd::Tensor(nd::Shape{s, s}, Matrix::identity(s, epsilon).data));
    return {mu, sigma};
}

} // namespace msvdd::stats

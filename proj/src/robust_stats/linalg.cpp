#include <algorithm>
#include <cmath>
#include <numeric>

#include "msvdd/errors.hpp"
#include "msvdd/robust_stats.hpp"

namespace msvdd::stats {

Matrix::Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) {
        throw DimensionError("matrix " + std::to_string(r) + "x" + std::to_string(c) + " given " +
                             std::to_string(data.size()) + " values");
    }
}

Matrix Matrix::identity(std::size_t n, double diag) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = diag;
    return m;
}

Matrix Matrix::from_tensor(const nd::Tensor& t) {
    if (t.rank() == 1) return Matrix(1, t.size(), {t.values().begin(), t.values().end()});
    if (t.rank() != 2) throw DimensionError("matrix from tensor of shape " + nd::shape_str(t.shape()));
    return Matrix(t.rows(), t.cols(), {t.values().begin(), t.values().end()});
}

nd::Tensor Matrix::to_tensor() const { return nd::Tensor::matrix(rows, cols, data); }

Matrix cholesky(const Matrix& a) {
    if (a.rows != a.cols) throw DimensionError("cholesky: non-square matrix");
    const std::size_t n = a.rows;
    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw NumericalError("cholesky: matrix not positive definite (pivot " + std::to_string(j) + " = " +
                                 std::to_string(d) + ")");
        }
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double v = a(i, j);
            for (std::size_t k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / ljj;
        }
    }
    return l;
}

std::vector<double> solve_lower(const Matrix& l, std::span<const double> b) {
    const std::size_t n = l.rows;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = b[i];
        for (std::size_t k = 0; k < i; ++k) v -= l(i, k) * y[k];
        y[i] = v / l(i, i);
    }
    return y;
}

std::vector<double> solve_lower_transposed(const Matrix& l, std::span<const double> y) {
    const std::size_t n = l.rows;
    std::vector<double> x(n);
    for (std::size_t i = n; i-- > 0;) {
        double v = y[i];
        for (std::size_t k = i + 1; k < n; ++k) v -= l(k, i) * x[k];
        x[i] = v / l(i, i);
    }
    return x;
}

SymmetricEigen symmetric_eigen(const Matrix& sigma) {
    if (sigma.rows != sigma.cols) throw DimensionError("symmetric_eigen: non-square matrix");
    const std::size_t n = sigma.rows;
    Matrix a(n, n);
    double fro = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (std::abs(sigma(i, j) - sigma(j, i)) > 1e-8) {
                throw ContractError("symmetric_eigen: input asymmetric at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
            }
            a(i, j) = 0.5 * (sigma(i, j) + sigma(j, i));
            fro += a(i, j) * a(i, j);
        }
    }
    const double tol = 1e-12 * std::max(1.0, std::sqrt(fro));
    Matrix v = Matrix::identity(n);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i != j) off += a(i, j) * a(i, j);
            }
        }
        if (std::sqrt(off) < tol) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
    }
    return out;
}

EigenExtremes eigen_extremes(const Matrix& sigma) {
    auto eig = symmetric_eigen(sigma);
    const std::size_t n = sigma.rows;
    EigenExtremes out;
    out.lambda_min = eig.values.front();
    out.lambda_max = eig.values.back();
    out.vec_min.resize(n);
    out.vec_max.resize(n);
    for (std::size_t r = 0; r < n; ++r) {
        out.vec_min[r] = eig.vectors(r, 0);
        out.vec_max[r] = eig.vectors(r, n - 1);
    }
    return out;
}

double covariance_penalty(const Matrix& sigma, double epsilon) {
    double total = 0.0;
    for (std::size_t i = 0; i < sigma.rows; ++i) total += 1.0 / (sigma(i, i) + epsilon);
    auto ext = eigen_extremes(sigma);
    return total + ext.lambda_max / (ext.lambda_min + epsilon);
}

double mahalanobis(std::span<const double> z, std::span<const double> mu, const Matrix& chol) {
    if (z.size() != chol.rows || mu.size() != chol.rows) {
        throw DimensionError("mahalanobis: vector length " + std::to_string(z.size()) + " vs dimension " +
                             std::to_string(chol.rows));
    }
    std::vector<double> d(z.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = z[i] - mu[i];
    auto y = solve_lower(chol, d);
    double q = 0.0;
    for (double v : y) q += v * v;
    return std::sqrt(q);
}

double mahalanobis(std::span<const double> z, const RobustEstimate& est) { return mahalanobis(z, est.mu, est.chol); }

} // namespace msvdd::stats

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "msvdd/tensor.hpp"

namespace msvdd::stats {

// Dense row-major matrix for the non-differentiable estimation paths.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
    Matrix(std::size_t r, std::size_t c, std::vector<double> values);

    static Matrix identity(std::size_t n, double diag = 1.0);
    static Matrix from_tensor(const nd::Tensor& t);
    nd::Tensor to_tensor() const;

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
};

// Lower-triangular L with L L^T = a. Reads the lower triangle only.
// Throws NumericalError when a is not positive definite.
Matrix cholesky(const Matrix& a);

// Solves L y = b for lower-triangular L.
std::vector<double> solve_lower(const Matrix& l, std::span<const double> b);
// Solves L^T x = y.
std::vector<double> solve_lower_transposed(const Matrix& l, std::span<const double> y);

struct SymmetricEigen {
    std::vector<double> values;  // ascending
    Matrix vectors;              // column k pairs with values[k]
};

// Cyclic Jacobi rotations until the off-diagonal norm is below 1e-12 (relative
// to the Frobenius norm when that exceeds 1). Throws ContractError when the
// input is not symmetric within 1e-8.
SymmetricEigen symmetric_eigen(const Matrix& sigma);

struct EigenExtremes {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    std::vector<double> vec_min;
    std::vector<double> vec_max;
};

EigenExtremes eigen_extremes(const Matrix& sigma);

// Sum_i 1/(sigma_ii + eps) + lambda_max / (lambda_min + eps).
double covariance_penalty(const Matrix& sigma, double epsilon);

struct RobustEstimate {
    std::vector<double> mu;
    Matrix sigma;  // subset covariance + epsilon * I
    Matrix chol;   // lower factor of sigma
    std::vector<std::size_t> subset;  // ascending
    double log_determinant = 0.0;
    double determinant = 0.0;
};

// Mean and regularized (1/h) covariance of the given rows.
RobustEstimate estimate_from_subset(const Matrix& features, std::vector<std::size_t> subset, double epsilon);

// Estimate over all rows; used where no trimming is wanted.
RobustEstimate estimate_all(const Matrix& features, double epsilon);

std::size_t default_subset_size(std::size_t n, double fraction = 0.75);

struct McdOptions {
    std::size_t h = 0;
    double epsilon = 1e-3;
    std::size_t restarts = 10;
    std::uint64_t seed = 0;
    std::size_t max_c_steps = 50;
    // Called with the log-determinant of every C-step iterate, in order.
    // A new start is signalled by `restart = true`.
    std::function<void(double log_det, bool restart)> on_c_step;
};

// FAST-MCD style multistart search. When `restarts` is at least C(N, h)
// every h-subset is used as a start instead of random (s+2)-seeds, which
// makes the search exhaustive.
RobustEstimate mcd_estimate(const Matrix& features, const McdOptions& options);

// Exact minimizer by enumeration of all C(N, h) subsets; refuses more than 50000.
RobustEstimate mcd_brute_force(const Matrix& features, std::size_t h, double epsilon);

// Saturating binomial coefficient.
std::uint64_t binomial(std::size_t n, std::size_t k);

double mahalanobis(std::span<const double> z, const RobustEstimate& est);
double mahalanobis(std::span<const double> z, std::span<const double> mu, const Matrix& chol);

// Differentiable forms. z: N x s (or a length-s vector), mu: s, sigma: s x s.
// sigma is symmetrized before factorization; returns the N distances.
nd::Tensor mahalanobis(const nd::Tensor& z, const nd::Tensor& mu, const nd::Tensor& sigma);
// [lambda_min, lambda_max] with gradients v v^T (simple eigenvalues assumed).
nd::Tensor eigen_extremes(const nd::Tensor& sigma);
nd::Tensor covariance_penalty(const nd::Tensor& sigma, double epsilon);

struct SubsetStatistics {
    nd::Tensor mu;
    nd::Tensor sigma;
};

// Differentiable mean and regularized covariance of the selected rows of z.
// Membership itself is a constant.
SubsetStatistics subset_statistics(const nd::Tensor& z, std::span<const std::size_t> subset, double epsilon);

} // namespace msvdd::stats

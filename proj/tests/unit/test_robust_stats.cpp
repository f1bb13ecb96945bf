#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "msvdd/errors.hpp"
#include "msvdd/grad_check.hpp"
#include "msvdd/ops.hpp"
#include "msvdd/robust_stats.hpp"
#include "test_support.hpp"

using namespace msvdd;
using namespace msvdd::stats;
using msvdd::testing::random_tensor;

namespace {

Matrix random_matrix(Rng& rng, std::size_t r, std::size_t c, double scale = 1.0) {
    Matrix m(r, c);
    for (auto& v : m.data) v = scale * rng.normal();
    return m;
}

// A A^T + shift I
Matrix random_spd(Rng& rng, std::size_t n, double shift) {
    auto a = random_matrix(rng, n, n);
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double v = i == j ? shift : 0.0;
            for (std::size_t k = 0; k < n; ++k) v += a(i, k) * a(j, k);
            out(i, j) = v;
        }
    }
    return out;
}

RobustEstimate estimate_with(std::vector<double> mu, Matrix sigma) {
    RobustEstimate est;
    est.mu = std::move(mu);
    est.chol = cholesky(sigma);
    est.sigma = std::move(sigma);
    return est;
}

void check_estimate_invariants(const RobustEstimate& est, double epsilon) {
    const std::size_t s = est.sigma.rows;
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) CHECK(std::abs(est.sigma(i, j) - est.sigma(j, i)) <= 1e-10);
    }
    auto eig = symmetric_eigen(est.sigma);
    CHECK(eig.values.front() >= epsilon * (1 - 1e-9));
    for (std::size_t i = 0; i < s; ++i) {
        for (std::size_t j = 0; j < s; ++j) {
            double v = 0.0;
            for (std::size_t k = 0; k < s; ++k) v += est.chol(i, k) * est.chol(j, k);
            CHECK(std::abs(v - est.sigma(i, j)) <= 1e-8);
        }
    }
}

} // namespace

TEST_CASE("mcd: zero-variance subset plus distant outliers") {
    const std::size_t n = 10, h = 7, s = 2;
    Matrix x(n, s);
    for (std::size_t i = 0; i < h; ++i) {
        x(i, 0) = 1.5;
        x(i, 1) = -2.0;
    }
    for (std::size_t i = h; i < n; ++i) {
        x(i, 0) = 100.0 + 10.0 * static_cast<double>(i);
        x(i, 1) = -50.0 * static_cast<double>(i);
    }
    McdOptions opt;
    opt.h = h;
    auto est = mcd_estimate(x, opt);
    CHECK(est.mu[0] == doctest::Approx(1.5));
    CHECK(est.mu[1] == doctest::Approx(-2.0));
    CHECK(est.sigma(0, 0) == doctest::Approx(1e-3));
    CHECK(est.sigma(1, 1) == doctest::Approx(1e-3));
    CHECK(std::abs(est.sigma(0, 1)) < 1e-15);
}

TEST_CASE("mcd: all rows identical gives epsilon identity") {
    Matrix x(6, 2, 3.0);
    McdOptions opt;
    opt.h = 4;
    auto est = mcd_estimate(x, opt);
    CHECK(est.sigma(0, 0) == doctest::Approx(1e-3));
    CHECK(est.sigma(1, 1) == doctest::Approx(1e-3));
    CHECK(est.sigma(0, 1) == 0.0);
}

TEST_CASE("mcd: one-dimensional example matches enumeration") {
    Matrix x(8, 1, {0, 0.1, 0.2, 0.3, 0.4, 0.5, 10, 11});
    auto brute = mcd_brute_force(x, 6, 1e-3);
    CHECK(brute.subset == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    McdOptions opt;
    opt.h = 6;
    auto est = mcd_estimate(x, opt);
    CHECK(est.subset == brute.subset);
    // sample mean and (1/h) variance of the first six, plus epsilon
    const double mean = 0.25;
    double var = 0.0;
    for (double v : {0.0, 0.1, 0.2, 0.3, 0.4, 0.5}) var += (v - mean) * (v - mean);
    var /= 6.0;
    CHECK(est.mu[0] == doctest::Approx(mean).epsilon(1e-14));
    CHECK(est.sigma(0, 0) == doctest::Approx(var + 1e-3).epsilon(1e-14));
}

TEST_CASE("mcd: exhaustive restarts reproduce the enumeration optimum exactly") {
    for (int seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const std::size_t s = 1 + rng.index(3);
        const std::size_t n = std::max<std::size_t>(s + 3, 6 + rng.index(7));
        const std::size_t h = default_subset_size(n);
        if (h <= s || h >= n) continue;
        auto x = random_matrix(rng, n, s);
        for (std::size_t i = 0; i < 2; ++i) x(i, 0) += 8.0;
        McdOptions opt;
        opt.h = h;
        opt.restarts = binomial(n, h);
        auto est = mcd_estimate(x, opt);
        auto brute = mcd_brute_force(x, h, 1e-3);
        CHECK(est.determinant == brute.determinant);
        CHECK(est.subset == brute.subset);
        check_estimate_invariants(est, 1e-3);
        // optimality by definition
        McdOptions quick;
        quick.h = h;
        quick.seed = static_cast<std::uint64_t>(seed);
        CHECK(brute.determinant <= mcd_estimate(x, quick).determinant);
    }
}

TEST_CASE("mcd: C-steps never increase the determinant") {
    Rng rng(42);
    auto x = random_matrix(rng, 60, 4);
    for (std::size_t i = 0; i < 10; ++i) x(i, 2) += 6.0;
    McdOptions opt;
    opt.h = 45;
    opt.restarts = 10;
    std::vector<std::vector<double>> runs;
    opt.on_c_step = [&](double log_det, bool restart) {
        if (restart) runs.emplace_back();
        runs.back().push_back(log_det);
    };
    auto est = mcd_estimate(x, opt);
    REQUIRE(runs.size() == 10);
    double best = 1e300;
    for (const auto& run : runs) {
        for (std::size_t i = 1; i < run.size(); ++i) CHECK(run[i] <= run[i - 1] + 1e-12);
        best = std::min(best, run.back());
    }
    CHECK(est.log_determinant == best);
    CHECK(est.subset.size() == 45);
}

TEST_CASE("mcd: precondition errors") {
    Rng rng(1);
    auto x = random_matrix(rng, 10, 3);
    McdOptions opt;
    opt.h = 3;
    CHECK_THROWS_AS(mcd_estimate(x, opt), ContractError);
    opt.h = 10;
    CHECK_THROWS_AS(mcd_estimate(x, opt), ContractError);
    opt.h = 8;
    opt.epsilon = 0.0;
    CHECK_THROWS_AS(mcd_estimate(x, opt), ContractError);
    CHECK_THROWS_AS(mcd_estimate(random_matrix(rng, 4, 3), McdOptions{}), ContractError);
    CHECK_THROWS_AS(mcd_brute_force(random_matrix(rng, 30, 2), 20, 1e-3), ContractError);
    CHECK(default_subset_size(8) == 6);
    CHECK(default_subset_size(10) == 8);
}

TEST_CASE("brute force: leave-one-out drops the farthest point") {
    // With negligible regularization, det of the leave-one-out covariance is
    // decreasing in the full-sample Mahalanobis distance of the removed point.
    for (int seed = 0; seed < 10; ++seed) {
        Rng rng(seed + 300);
        const std::size_t n = 9, s = 2;
        auto x = random_matrix(rng, n, s);
        auto full = estimate_all(x, 1e-12);
        std::size_t far = 0;
        double far_d = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = mahalanobis(x.row(i), full);
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        auto brute = mcd_brute_force(x, n - 1, 1e-12);
        CHECK(std::find(brute.subset.begin(), brute.subset.end(), far) == brute.subset.end());
    }
}

TEST_CASE("brute force: collinear data gives smallest eigenvalue epsilon") {
    Matrix x(7, 2);
    for (std::size_t i = 0; i < 7; ++i) {
        x(i, 0) = static_cast<double>(i);
        x(i, 1) = 2.0 * static_cast<double>(i) + 1.0;
    }
    auto est = mcd_brute_force(x, 5, 1e-3);
    auto ext = eigen_extremes(est.sigma);
    CHECK(ext.lambda_min == doctest::Approx(1e-3).epsilon(1e-8));
}

TEST_CASE("mahalanobis examples") {
    Rng rng(8);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t s = 1 + rng.index(6);
        std::vector<double> z(s), mu(s);
        double e = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            z[i] = rng.uniform(-5, 5);
            mu[i] = rng.uniform(-5, 5);
            e += (z[i] - mu[i]) * (z[i] - mu[i]);
        }
        auto est = estimate_with(mu, Matrix::identity(s));
        CHECK(std::abs(mahalanobis(z, est) - std::sqrt(e)) <= 1e-12);
        if (rep < 5) CHECK(mahalanobis(mu, est) == 0.0);
    }
    auto est = estimate_with({1, 1}, Matrix(2, 2, {4, 0, 0, 1}));
    CHECK(mahalanobis(std::vector<double>{3, 2}, est) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("mahalanobis is invariant under joint affine maps") {
    for (int rep = 0; rep < 50; ++rep) {
        Rng rng(500 + rep);
        const std::size_t s = 2 + rng.index(4);
        auto sigma = random_spd(rng, s, 0.5);
        auto a = random_matrix(rng, s, s);
        for (std::size_t i = 0; i < s; ++i) a(i, i) += 3.0;  // keep it well-conditioned
        std::vector<double> z(s), mu(s), b(s);
        for (std::size_t i = 0; i < s; ++i) {
            z[i] = rng.normal();
            mu[i] = rng.normal();
            b[i] = rng.normal();
        }
        auto apply = [&](const std::vector<double>& v) {
            std::vector<double> out(b);
            for (std::size_t i = 0; i < s; ++i) {
                for (std::size_t k = 0; k < s; ++k) out[i] += a(i, k) * v[k];
            }
            return out;
        };
        Matrix mapped(s, s);
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < s; ++j) {
                double v = 0.0;
                for (std::size_t k = 0; k < s; ++k) {
                    for (std::size_t l = 0; l < s; ++l) v += a(i, k) * sigma(k, l) * a(j, l);
                }
                mapped(i, j) = v;
            }
        }
        // symmetrize rounding so the factorization sees an exactly symmetric matrix
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < i; ++j) mapped(j, i) = mapped(i, j);
        }
        const double d0 = mahalanobis(z, estimate_with(mu, sigma));
        const double d1 = mahalanobis(apply(z), estimate_with(apply(mu), mapped));
        CHECK(std::abs(d0 - d1) <= 1e-8 * std::max(1.0, d0));
    }
}

TEST_CASE("eigen_extremes examples") {
    auto e1 = eigen_extremes(Matrix(3, 3, {1, 0, 0, 0, 2, 0, 0, 0, 3}));
    CHECK(e1.lambda_min == 1.0);
    CHECK(e1.lambda_max == 3.0);
    auto e2 = eigen_extremes(Matrix::identity(4, 1e-3));
    CHECK(e2.lambda_min == 1e-3);
    CHECK(e2.lambda_max == 1e-3);

    for (int rep = 0; rep < 20; ++rep) {
        Rng rng(rep);
        auto a = random_matrix(rng, 5, 5);
        Matrix sym(5, 5);
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 5; ++j) sym(i, j) = a(i, j) + a(j, i);
        }
        auto eig = symmetric_eigen(sym);
        for (std::size_t k = 0; k < 5; ++k) {
            double res = 0.0;
            for (std::size_t i = 0; i < 5; ++i) {
                double v = -eig.values[k] * eig.vectors(i, k);
                for (std::size_t j = 0; j < 5; ++j) v += sym(i, j) * eig.vectors(j, k);
                res += v * v;
            }
            CHECK(std::sqrt(res) <= 1e-9);
        }
        CHECK(std::is_sorted(eig.values.begin(), eig.values.end()));
    }
    CHECK_THROWS_AS(eigen_extremes(Matrix(2, 2, {1, 0.5, 0.4, 1})), ContractError);
}

TEST_CASE("covariance_penalty examples") {
    // Identity: 2 / 1.001 + 1 / 1.001
    CHECK(covariance_penalty(Matrix::identity(2), 1e-3) == doctest::Approx(3.0 / 1.001).epsilon(1e-14));
    // diag(1, 0.01): lambda_max / (lambda_min + eps) = 1 / 0.011
    const double expected = 1.0 / 1.001 + 1.0 / 0.011 + 1.0 / 0.011;
    CHECK(covariance_penalty(Matrix(2, 2, {1, 0, 0, 0.01}), 1e-3) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(182.817).epsilon(1e-5));

    Rng rng(4);
    auto sigma = random_spd(rng, 4, 0.2);
    auto diag_term = [](const Matrix& m) {
        double t = 0.0;
        for (std::size_t i = 0; i < m.rows; ++i) t += 1.0 / (m(i, i) + 1e-3);
        return t;
    };
    auto cond_term = [](const Matrix& m) {
        auto e = eigen_extremes(m);
        return e.lambda_max / e.lambda_min;
    };
    for (double c : {1.5, 3.0, 10.0}) {
        Matrix scaled = sigma;
        for (auto& v : scaled.data) v *= c;
        CHECK(diag_term(scaled) < diag_term(sigma));
        CHECK(cond_term(scaled) == doctest::Approx(cond_term(sigma)).epsilon(1e-10));
    }
}

TEST_CASE("differentiable forms agree with the plain ones") {
    Rng rng(21);
    auto z = random_matrix(rng, 6, 3);
    McdOptions opt;
    opt.h = 5;
    auto est = mcd_estimate(z, opt);
    auto zt = z.to_tensor();
    auto st = subset_statistics(zt, est.subset, 1e-3);
    for (std::size_t i = 0; i < 3; ++i) CHECK(st.mu[i] == doctest::Approx(est.mu[i]).epsilon(1e-14));
    for (std::size_t i = 0; i < 9; ++i) CHECK(st.sigma[i] == doctest::Approx(est.sigma.data[i]).epsilon(1e-12));
    auto d = mahalanobis(zt, st.mu, st.sigma);
    for (std::size_t i = 0; i < 6; ++i) CHECK(d[i] == doctest::Approx(mahalanobis(z.row(i), est)).epsilon(1e-12));
    CHECK(covariance_penalty(st.sigma, 1e-3).item() == doctest::Approx(covariance_penalty(est.sigma, 1e-3)).epsilon(1e-12));
}

TEST_CASE("gradients of mahalanobis and covariance_penalty match finite differences") {
    for (int seed = 0; seed < 5; ++seed) {
        Rng rng(900 + seed);
        const std::size_t s = 3;
        // sigma = B B^T + I keeps every perturbation symmetric positive definite
        auto to_sigma = [](const nd::Tensor& b) {
            return nd::add_scalar(nd::matmul(b, nd::transpose(b)), 0.0);
        };
        auto with_identity = [s](const nd::Tensor& m) { return nd::add(m, nd::Tensor::identity(s)); };
        std::vector<nd::Tensor> in{random_tensor(rng, {4, s}, -2, 2), random_tensor(rng, {s}), random_tensor(rng, {s, s})};
        auto f = [&](std::span<const nd::Tensor> v) {
            auto sigma = with_identity(to_sigma(v[2]));
            auto d = mahalanobis(v[0], v[1], sigma);
            return nd::sum(nd::mul(d, nd::Tensor::vector({0.3, -1.2, 0.8, 1.1})));
        };
        CHECK(nd::grad_check(f, in) < 1e-4);

        // direct sigma input: symmetric perturbations are not required for mahalanobis
        std::vector<nd::Tensor> direct{random_tensor(rng, {2, s}), random_tensor(rng, {s}),
                                       with_identity(to_sigma(random_tensor(rng, {s, s})))};
        CHECK(nd::grad_check([](std::span<const nd::Tensor> v) { return nd::sum(mahalanobis(v[0], v[1], v[2])); }, direct) < 1e-4);

        auto g = [&](std::span<const nd::Tensor> v) {
            auto sigma = nd::add(to_sigma(v[0]), nd::scale(nd::Tensor::identity(s), 0.1));
            return covariance_penalty(sigma, 1e-3);
        };
        std::vector<nd::Tensor> pin{random_tensor(rng, {s, s})};
        CHECK(nd::grad_check(g, pin) < 1e-4);

        auto sub = [&](std::span<const nd::Tensor> v) {
            std::vector<std::size_t> subset{0, 2, 3, 5, 6};
            auto st = subset_statistics(v[0], subset, 1e-3);
            auto d = mahalanobis(v[0], st.mu, st.sigma);
            return nd::add(nd::sum(d), covariance_penalty(st.sigma, 1e-3));
        };
        std::vector<nd::Tensor> zin{random_tensor(rng, {8, 2}, -3, 3)};
        CHECK(nd::grad_check(sub, zin) < 1e-4);
    }
}

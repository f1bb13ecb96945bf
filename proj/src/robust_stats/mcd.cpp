#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "msvdd/errors.hpp"
#include "msvdd/rng.hpp"
#include "msvdd/robust_stats.hpp"

namespace msvdd::stats {

namespace {

// Advances `idx` (ascending, values < n) to the next k-combination in
// lexicographic order. Returns false after the last one.
bool next_combination(std::vector<std::size_t>& idx, std::size_t n) {
    const std::size_t k = idx.size();
    for (std::size_t i = k; i-- > 0;) {
        if (idx[i] < n - k + i) {
            ++idx[i];
            for (std::size_t j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
            return true;
        }
    }
    return false;
}

void validate(const Matrix& features, std::size_t h, double epsilon) {
    const std::size_t n = features.rows, s = features.cols;
    if (s < 1) throw ContractError("mcd: feature dimension must be at least 1");
    if (n <= s + 1) {
        throw ContractError("mcd: need N > s + 1 samples, got N = " + std::to_string(n) + ", s = " + std::to_string(s));
    }
    if (h <= s || h >= n) {
        throw ContractError("mcd: subset size h = " + std::to_string(h) + " outside (" + std::to_string(s) + ", " +
                            std::to_string(n) + ")");
    }
    if (!(epsilon > 0.0)) throw ContractError("mcd: epsilon must be positive");
}

// Indices of the h rows closest to `est`, ascending. Ties broken by index.
std::vector<std::size_t> nearest(const Matrix& features, const RobustEstimate& est, std::size_t h) {
    std::vector<std::pair<double, std::size_t>> dist(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) dist[i] = {mahalanobis(features.row(i), est), i};
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(h - 1), dist.end());
    std::vector<std::size_t> out(h);
    for (std::size_t i = 0; i < h; ++i) out[i] = dist[i].second;
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace

std::uint64_t binomial(std::size_t n, std::size_t k) {
    if (k > n) return 0;
    k = std::min(k, n - k);
    unsigned __int128 r = 1;
    constexpr auto cap = std::numeric_limits<std::uint64_t>::max();
    for (std::size_t i = 0; i < k; ++i) {
        r = r * (n - i) / (i + 1);
        if (r > cap) return cap;
    }
    return static_cast<std::uint64_t>(r);
}

std::size_t default_subset_size(std::size_t n, double fraction) {
    return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
}

RobustEstimate estimate_from_subset(const Matrix& features, std::vector<std::size_t> subset, double epsilon) {
    if (subset.empty()) throw ContractError("estimate_from_subset: empty subset");
    std::sort(subset.begin(), subset.end());
    const std::size_t s = features.cols;
    const double h = static_cast<double>(subset.size());

    RobustEstimate est;
    est.mu.assign(s, 0.0);
    for (auto i : subset) {
        if (i >= features.rows) throw DimensionError("estimate_from_subset: row index out of range");
        for (std::size_t c = 0; c < s; ++c) est.mu[c] += features(i, c);
    }
    for (auto& m : est.mu) m /= h;

    est.sigma = Matrix(s, s);
    std::vector<double> d(s);
    for (auto i : subset) {
        for (std::size_t c = 0; c < s; ++c) d[c] = features(i, c) - est.mu[c];
        for (std::size_t a = 0; a < s; ++a) {
            for (std::size_t b = 0; b <= a; ++b) est.sigma(a, b) += d[a] * d[b];
        }
    }
    for (std::size_t a = 0; a < s; ++a) {
        for (std::size_t b = 0; b <= a; ++b) {
            const double v = est.sigma(a, b) / h + (a == b ? epsilon : 0.0);
            est.sigma(a, b) = v;
            est.sigma(b, a) = v;
        }
    }
    est.chol = cholesky(est.sigma);
    est.log_determinant = 0.0;
    for (std::size_t a = 0; a < s; ++a) est.log_determinant += 2.0 * std::log(est.chol(a, a));
    est.determinant = std::exp(est.log_determinant);
    est.subset = std::move(subset);
    return est;
}

RobustEstimate estimate_all(const Matrix& features, double epsilon) {
    std::vector<std::size_t> all(features.rows);
    std::iota(all.begin(), all.end(), 0);
    return estimate_from_subset(features, std::move(all), epsilon);
}

RobustEstimate mcd_estimate(const Matrix& features, const McdOptions& options) {
    const std::size_t n = features.rows, s = features.cols;
    const std::size_t h = options.h ? options.h : default_subset_size(n);
    validate(features, h, options.epsilon);
    if (options.restarts == 0) throw ContractError("mcd: restarts must be at least 1");

    RobustEstimate best;
    bool have_best = false;

    auto run_from = [&](std::vector<std::size_t> start) {
        RobustEstimate est = estimate_from_subset(features, std::move(start), options.epsilon);
        if (options.on_c_step) options.on_c_step(est.log_determinant, true);
        for (std::size_t iter = 0; iter < options.max_c_steps; ++iter) {
            auto next = nearest(features, est, h);
            if (next == est.subset) break;
            est = estimate_from_subset(features, std::move(next), options.epsilon);
            if (options.on_c_step) options.on_c_step(est.log_determinant, false);
        }
        if (!have_best || est.log_determinant < best.log_determinant) {
            best = std::move(est);
            have_best = true;
        }
    };

    if (options.restarts >= binomial(n, h)) {
        std::vector<std::size_t> idx(h);
        std::iota(idx.begin(), idx.end(), 0);
        do {
            run_from(idx);
        } while (next_combination(idx, n));
        return best;
    }

    Rng rng(options.seed);
    std::vector<std::size_t> pool(n);
    for (std::size_t r = 0; r < options.restarts; ++r) {
        std::iota(pool.begin(), pool.end(), 0);
        const std::size_t seed_size = s + 2;
        for (std::size_t i = 0; i < seed_size; ++i) std::swap(pool[i], pool[i + rng.index(n - i)]);
        std::vector<std::size_t> seed(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(seed_size));
        auto seed_est = estimate_from_subset(features, std::move(seed), options.epsilon);
        run_from(nearest(features, seed_est, h));
    }
    return best;
}

RobustEstimate mcd_brute_force(const Matrix& features, std::size_t h, double epsilon) {
    const std::size_t n = features.rows;
    if (h == 0 || h > n) throw ContractError("mcd_brute_force: subset size out of range");
    if (!(epsilon > 0.0)) throw ContractError("mcd_brute_force: epsilon must be positive");
    const auto combos = binomial(n, h);
    if (combos > 50000) {
        throw ContractError("mcd_brute_force: C(" + std::to_string(n) + "," + std::to_string(h) + ") = " +
                            std::to_string(combos) + " exceeds 50000");
    }
    RobustEstimate best;
    bool have_best = false;
    std::vector<std::size_t> idx(h);
    std::iota(idx.begin(), idx.end(), 0);
    do {
        auto est = estimate_from_subset(features, idx, epsilon);
        if (!have_best || est.log_determinant < best.log_determinant) {
            best = std::move(est);
            have_best = true;
        }
    } while (next_combination(idx, n));
    return best;
}

} // namespace msvdd::stats

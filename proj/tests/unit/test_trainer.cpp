#include <doctest.h>

#include <cmath>

#include "msvdd/errors.hpp"
#include "msvdd/trainer.hpp"
#include "test_support.hpp"

using namespace msvdd;
using msvdd::testing::toy_batch;
using msvdd::testing::toy_config;

namespace {

model::ModelParams single(std::vector<double> x) {
    model::ModelParams p;
    const auto n = x.size();
    p.tensors.emplace("x", nd::Tensor({n}, std::move(x)));
    return p;
}

// Gauss-Jordan inverse, no pivoting shortcuts.
std::vector<double> invert(std::vector<double> a, std::size_t n) {
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t p = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::abs(a[r * n + c]) > std::abs(a[p * n + c])) p = r;
        }
        for (std::size_t k = 0; k < n; ++k) {
            std::swap(a[c * n + k], a[p * n + k]);
            std::swap(inv[c * n + k], inv[p * n + k]);
        }
        const double piv = a[c * n + c];
        for (std::size_t k = 0; k < n; ++k) {
            a[c * n + k] /= piv;
            inv[c * n + k] /= piv;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a[r * n + c];
            for (std::size_t k = 0; k < n; ++k) {
                a[r * n + k] -= f * a[c * n + k];
                inv[r * n + k] -= f * inv[c * n + k];
            }
        }
    }
    return inv;
}

train::TrainConfig small_train(std::size_t epochs) {
    train::TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 8;
    t.lr0 = 1e-3;
    t.seed = 7;
    return t;
}

} // namespace

TEST_CASE("adam leaves parameters alone for zero gradients") {
    auto p = single({0.5, -2.0, 3.0});
    train::AdamState st;
    for (int i = 0; i < 5; ++i) train::adam_step(p, {{"x", {0.0, 0.0, 0.0}}}, st, 0.1);
    CHECK(p["x"][0] == 0.5);
    CHECK(p["x"][1] == -2.0);
    CHECK(p["x"][2] == 3.0);
}

TEST_CASE("adam first step moves by lr times the gradient sign") {
    auto p = single({1.0, 1.0, 1.0, 1.0});
    train::AdamState st;
    train::adam_step(p, {{"x", {1e-3, -5.0, 400.0, -1e-2}}}, st, 0.01);
    CHECK(p["x"][0] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p["x"][1] == doctest::Approx(1.01).epsilon(1e-6));
    CHECK(p["x"][2] == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p["x"][3] == doctest::Approx(1.01).epsilon(1e-6));
}

TEST_CASE("adam minimizes x^2 from 1 within 500 steps at lr 0.05") {
    auto p = single({1.0});
    train::AdamState st;
    int steps = 0;
    while (std::abs(p["x"][0]) >= 1e-3 && steps < 500) {
        train::adam_step(p, {{"x", {2.0 * p["x"][0]}}}, st, 0.05);
        ++steps;
    }
    CHECK(std::abs(p["x"][0]) < 1e-3);
    CHECK(steps <= 500);
}

TEST_CASE("adam rejects a gradient of the wrong size") {
    auto p = single({1.0, 2.0});
    train::AdamState st;
    CHECK_THROWS_AS(train::adam_step(p, {{"x", {1.0}}}, st, 0.1), DimensionError);
}

TEST_CASE("cosine schedule boundaries") {
    CHECK(train::cosine_lr(0, 100, 1e-4) == 1e-4);
    CHECK(train::cosine_lr(100, 100, 1e-4) == 0.0);
    CHECK(train::cosine_lr(50, 100, 1e-4) == doctest::Approx(5e-5).epsilon(1e-12));
    CHECK(train::cosine_lr(25, 100, 1.0) == doctest::Approx(0.5 + 0.5 * std::sqrt(0.5)));
    for (std::size_t k = 1; k <= 100; ++k) CHECK(train::cosine_lr(k, 100, 1.0) < train::cosine_lr(k - 1, 100, 1.0));
    CHECK_THROWS_AS(train::cosine_lr(101, 100, 1.0), ContractError);
}

TEST_CASE("percentile interpolates order statistics") {
    std::vector<double> v;
    for (int i = 100; i >= 1; --i) v.push_back(i);
    const double p = train::percentile(v, 0.95);
    CHECK(p >= 95.0);
    CHECK(p <= 96.0);
    CHECK(p == doctest::Approx(95.05).epsilon(1e-12));
    CHECK(train::percentile({3.0}, 0.95) == 3.0);
    CHECK(train::percentile({1.0, 2.0}, 0.5) == 1.5);
    CHECK_THROWS_AS(train::percentile({}, 0.5), ContractError);
}

TEST_CASE("fraction above the 95th percentile is at most 0.05 + 1/M") {
    Rng rng(3);
    for (std::size_t m : {1u, 2u, 7u, 19u, 20u, 21u, 100u, 333u}) {
        for (int rep = 0; rep < 20; ++rep) {
            std::vector<double> v(m);
            // Coarse values force ties.
            for (auto& x : v) x = std::floor(rng.uniform(0.0, 10.0));
            const double t = train::percentile(v, 0.95);
            std::size_t above = 0;
            for (double x : v) above += x > t ? 1 : 0;
            CHECK(static_cast<double>(above) / static_cast<double>(m) <= 0.05 + 1.0 / static_cast<double>(m));
        }
    }
}

TEST_CASE("train validates its inputs") {
    Rng rng(1);
    const auto cfg = toy_config();
    auto windows = toy_batch(rng, cfg, 6);
    auto t = small_train(1);
    CHECK_THROWS_AS(train::train(windows, cfg, t), ContractError);  // fewer than one batch

    t.batch_size = 5;  // s + 1 = 5
    auto more = toy_batch(rng, cfg, 12);
    CHECK_THROWS_AS(train::train(more, cfg, t), ContractError);

    t = small_train(0);
    CHECK_THROWS_AS(train::train(more, cfg, t), ContractError);

    auto other = cfg;
    other.audio_length = 100;
    t = small_train(1);
    CHECK_THROWS_AS(train::train(more, other, t), DimensionError);
}

TEST_CASE("training is deterministic for a fixed seed") {
    Rng rng(11);
    const auto cfg = toy_config();
    const auto windows = toy_batch(rng, cfg, 20);
    const auto t = small_train(3);
    const auto a = train::train(windows, cfg, t);
    const auto b = train::train(windows, cfg, t);
    CHECK(train::artifact_to_json(a.artifact).dump() == train::artifact_to_json(b.artifact).dump());
    REQUIRE(a.log.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) CHECK(a.log[e].total == b.log[e].total);

    auto t2 = t;
    t2.seed = 8;
    const auto c = train::train(windows, cfg, t2);
    CHECK(train::artifact_to_json(a.artifact).dump() != train::artifact_to_json(c.artifact).dump());
}

TEST_CASE("a short final batch is dropped in mahalanobis mode") {
    Rng rng(12);
    const auto cfg = toy_config();
    // 8 + 8 + 5 windows: the tail of 5 = s + 1 cannot feed MCD.
    const auto windows = toy_batch(rng, cfg, 21);
    const auto r = train::train(windows, cfg, small_train(2));
    CHECK(r.log.size() == 2);
    for (const auto& e : r.log) CHECK(std::isfinite(e.total));
}

TEST_CASE("training lowers the loss and keeps the radius sane") {
    Rng rng(13);
    const auto cfg = toy_config();
    const auto windows = toy_batch(rng, cfg, 32);
    auto t = small_train(15);
    t.lr0 = 3e-3;
    const auto r = train::train(windows, cfg, t);
    REQUIRE(r.log.size() == 15);
    CHECK(r.log.back().total < r.log.front().total);
    for (const auto& e : r.log) {
        CHECK(e.fraction_outside >= 0.0);
        CHECK(e.fraction_outside <= 0.5);
        CHECK(e.r2 > 0.0);
    }
    CHECK(r.log.front().lr == doctest::Approx(t.lr0 * 0.5 * (1.0 + std::cos(M_PI * 3.0 / 60.0))));
}

TEST_CASE("reconstruction-only training lowers reconstruction loss") {
    Rng rng(14);
    auto cfg = toy_config();
    cfg.alpha1 = 0.0;
    cfg.alpha3 = 0.0;
    const auto windows = toy_batch(rng, cfg, 32);
    auto t = small_train(12);
    t.lr0 = 3e-3;
    const auto r = train::train(windows, cfg, t);
    std::size_t rises = 0;
    for (std::size_t e = 1; e < r.log.size(); ++e) rises += r.log[e].rec > r.log[e - 1].rec ? 1 : 0;
    CHECK(rises <= r.log.size() / 10);
    CHECK(r.log.back().rec < r.log.front().rec);
}

TEST_CASE("finalize statistics match an independent recomputation") {
    Rng rng(15);
    const auto cfg = toy_config();
    const auto windows = toy_batch(rng, cfg, 40);
    const auto params = model::init_params(cfg, 3);
    const auto t = small_train(1);
    const auto a = train::finalize(params, windows, cfg, t);

    CHECK(a.h == 30);
    const std::size_t s = cfg.s;
    const auto inv = invert(a.sigma_z.data, s);
    double sum_d = 0.0, sum_rec = 0.0;
    std::vector<double> deltas, dists, recs;
    for (const auto& w : windows) {
        const auto f = model::forward_window(w, params, cfg);
        double q = 0.0;
        for (std::size_t i = 0; i < s; ++i) {
            for (std::size_t j = 0; j < s; ++j) q += (f.z[i] - a.mu_z[i]) * inv[i * s + j] * (f.z[j] - a.mu_z[j]);
        }
        dists.push_back(std::sqrt(q));
        recs.push_back(f.rec_loss.item());
        sum_d += dists.back();
        sum_rec += recs.back();
    }
    const double m = static_cast<double>(windows.size());
    CHECK(a.mu_d == doctest::Approx(sum_d / m).epsilon(1e-10));
    CHECK(a.mu_rec == doctest::Approx(sum_rec / m).epsilon(1e-12));

    std::size_t above = 0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
        const double d = dists[i] + t.w * (a.mu_d / a.mu_rec) * recs[i];
        above += d > a.delta_star ? 1 : 0;
    }
    CHECK(static_cast<double>(above) / m <= 0.05 + 1.0 / m);
    CHECK(a.delta_star >= 0.0);

    const auto again = train::finalize(params, windows, cfg, t);
    CHECK(again.mu_z == a.mu_z);
    CHECK(again.sigma_z.data == a.sigma_z.data);
    CHECK(again.mu_d == a.mu_d);
    CHECK(again.delta_star == a.delta_star);
}

TEST_CASE("euclidean finalize uses the identity and the given center") {
    Rng rng(16);
    auto cfg = toy_config();
    cfg.mode = model::Mode::euclidean;
    const auto windows = toy_batch(rng, cfg, 12);
    const auto params = model::init_params(cfg, 3);
    const std::vector<double> c = {0.1, -0.2, 0.3, 0.0};
    const auto a = train::finalize(params, windows, cfg, small_train(1), c);
    CHECK(a.mu_z == c);
    CHECK(a.sigma_z.data == stats::Matrix::identity(4).data);
    CHECK(a.h == 0);
    const auto f = model::forward_window(windows[0], params, cfg);
    double q = 0.0;
    for (std::size_t j = 0; j < 4; ++j) q += (f.z[j] - c[j]) * (f.z[j] - c[j]);
    CHECK(train::score_window(a, windows[0]).distance == doctest::Approx(std::sqrt(q)).epsilon(1e-14));
}

TEST_CASE("euclidean training runs and freezes a center") {
    Rng rng(17);
    auto cfg = toy_config();
    cfg.mode = model::Mode::euclidean;
    const auto windows = toy_batch(rng, cfg, 10);
    auto t = small_train(3);
    t.batch_size = 4;
    const auto r = train::train(windows, cfg, t);
    CHECK(r.log.size() == 3);
    for (const auto& e : r.log) CHECK(e.reg == 0.0);
    CHECK(r.artifact.mu_z.size() == 4);
}

TEST_CASE("artifact JSON round trip preserves scores bitwise") {
    Rng rng(18);
    const auto cfg = toy_config();
    const auto windows = toy_batch(rng, cfg, 16);
    const auto r = train::train(windows, cfg, small_train(2));
    auto art = r.artifact;
    art.normalization = data::NormalizationStats{{0.1, 2.0}, {-0.1, 3.0}, {0.0, 0.5}};
    const auto text = train::artifact_to_json(art).dump();
    const auto back = train::artifact_from_json(nlohmann::json::parse(text));
    CHECK(train::artifact_to_json(back).dump() == text);
    REQUIRE(back.normalization);
    CHECK(back.normalization->right.std == 3.0);
    for (const auto& w : windows) {
        const auto x = train::score_window(art, w);
        const auto y = train::score_window(back, w);
        CHECK(x.delta == y.delta);
        CHECK(x.distance == y.distance);
    }

    auto j = nlohmann::json::parse(text);
    j["format_version"] = 7;
    try {
        train::artifact_from_json(j);
        FAIL("expected a version error");
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        CHECK(msg.find('7') != std::string::npos);
        CHECK(msg.find('1') != std::string::npos);
    }
    j = nlohmann::json::parse(text);
    j["stats"].erase("mu_D");
    CHECK_THROWS_AS(train::artifact_from_json(j), FormatError);
    j = nlohmann::json::parse(text);
    j["stats"]["sigma_z"] = std::vector<double>(16, 0.0);
    CHECK_THROWS_AS(train::artifact_from_json(j), FormatError);
}

TEST_CASE("score_dataset applies the strict threshold") {
    Rng rng(19);
    const auto cfg = toy_config();
    const auto windows = toy_batch(rng, cfg, 16);
    const auto art = train::finalize(model::init_params(cfg, 5), windows, cfg, small_train(1));
    data::WindowedDataset ds;
    ds.audio_length = cfg.audio_length;
    ds.imu_length = cfg.imu_length;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        data::Window w;
        w.id = "w" + std::to_string(i);
        const auto& a = windows[i].audio.values();
        w.audio.assign(a.begin(), a.end());
        const auto& m = windows[i].imu.values();
        w.imu.assign(m.begin(), m.end());
        if (i % 2) w.label = "collision";
        ds.windows.push_back(std::move(w));
    }
    const auto scored = train::score_dataset(art, ds);
    REQUIRE(scored.size() == 16);
    std::size_t flagged = 0;
    for (const auto& s : scored) {
        CHECK(s.predicted == (s.delta > art.delta_star));
        flagged += s.predicted ? 1 : 0;
    }
    CHECK(flagged <= 1);  // training windows: at most 5% + 1/M
    CHECK(scored[1].label == std::optional<bool>(true));
    CHECK(!scored[0].label);

    ds.audio_length = 100;
    CHECK_THROWS_AS(train::score_dataset(art, ds), DimensionError);
}
